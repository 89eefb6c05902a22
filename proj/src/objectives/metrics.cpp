#include "ddunet/objectives/metrics.hpp"

#include "ddunet/engine/error.hpp"

namespace ddunet::objectives {
namespace {

double ratio_or(std::uint64_t num, std::uint64_t den, double fallback) {
  return den == 0 ? fallback : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

LabelSet region_positive_set(Region region) {
  switch (region) {
    case Region::kWT:
      return {1, 2, 3};
    case Region::kTC:
      return {1, 3};
    case Region::kET:
      return {3};
  }
  return {};
}

std::string region_name(Region region) {
  switch (region) {
    case Region::kWT:
      return "WT";
    case Region::kTC:
      return "TC";
    case Region::kET:
      return "ET";
  }
  return "?";
}

ConfusionCounts confusion_counts(const LabelVolume& pred, const LabelVolume& truth, const LabelSet& positive) {
  if (pred.dims != truth.dims || pred.size() != truth.size()) {
    throw ShapeError("confusion_counts: prediction and truth volumes differ in shape");
  }
  std::array<bool, 256> member{};
  for (std::uint8_t l : positive) member[l] = true;
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const std::uint8_t p = pred.labels[i];
    const std::uint8_t t = truth.labels[i];
    if (p >= kNumClasses || t >= kNumClasses) {
      throw DataError("confusion_counts: label " + std::to_string(p >= kNumClasses ? p : t) + " outside {0,1,2,3}");
    }
    const bool pp = member[p];
    const bool tp = member[t];
    if (pp && tp) {
      ++c.tp;
    } else if (pp) {
      ++c.fp;
    } else if (tp) {
      ++c.fn;
    } else {
      ++c.tn;
    }
  }
  return c;
}

Scores metric_scores(const ConfusionCounts& c) {
  const bool truth_empty = c.tp + c.fn == 0;
  const bool pred_empty = c.tp + c.fp == 0;
  Scores s;
  if (truth_empty && pred_empty) {
    s.dice = 1.0;
    s.sensitivity = 1.0;
  } else {
    s.dice = ratio_or(2 * c.tp, 2 * c.tp + c.fp + c.fn, 0.0);
    s.sensitivity = ratio_or(c.tp, c.tp + c.fn, 0.0);
  }
  s.specificity = ratio_or(c.tn, c.tn + c.fp, 1.0);
  return s;
}

MetricsReport evaluate_volume(const LabelVolume& pred, const LabelVolume& truth) {
  MetricsReport r;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    r.classes[c].counts = confusion_counts(pred, truth, {static_cast<std::uint8_t>(c)});
    r.classes[c].scores = metric_scores(r.classes[c].counts);
  }
  for (std::size_t i = 0; i < kRegions.size(); ++i) {
    r.regions[i].counts = confusion_counts(pred, truth, region_positive_set(kRegions[i]));
    r.regions[i].scores = metric_scores(r.regions[i].counts);
  }
  return r;
}

template <typename T>
LabelVolume argmax_labels(const Tensor<T>& scores, std::size_t n) {
  if (scores.rank() != 5 || n >= scores.extent(0)) throw ShapeError("argmax_labels: expected (N,C,D,H,W) scores");
  const std::size_t C = scores.extent(1);
  if (C > 255) throw ShapeError("argmax_labels: too many classes");
  const std::size_t vol = spatial_size(scores);
  LabelVolume out{{scores.extent(2), scores.extent(3), scores.extent(4)}, std::vector<std::uint8_t>(vol)};
  const T* base = scores.data().data() + n * C * vol;
  for (std::size_t v = 0; v < vol; ++v) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < C; ++c) {
      if (base[c * vol + v] > base[best * vol + v]) best = c;
    }
    out.labels[v] = static_cast<std::uint8_t>(best);
  }
  return out;
}

template <typename T>
LabelVolume labels_from_one_hot(const Tensor<T>& one_hot, std::size_t n) {
  if (one_hot.rank() == 4) return argmax_labels(one_hot.reshaped({1, one_hot.extent(0), one_hot.extent(1),
                                                                  one_hot.extent(2), one_hot.extent(3)}), 0);
  return argmax_labels(one_hot, n);
}

ScoreSummary summarize(const MetricsReport& report) {
  ScoreSummary s;
  for (std::size_t c = 0; c < kNumClasses; ++c) s.class_dice[c] = report.classes[c].scores.dice;
  for (std::size_t i = 0; i < 3; ++i) s.regions[i] = report.regions[i].scores;
  return s;
}

ScoreSummary mean_summary(const std::vector<ScoreSummary>& per_subject) {
  ScoreSummary m;
  if (per_subject.empty()) return m;
  for (const ScoreSummary& s : per_subject) {
    for (std::size_t c = 0; c < kNumClasses; ++c) m.class_dice[c] += s.class_dice[c];
    for (std::size_t i = 0; i < 3; ++i) {
      m.regions[i].dice += s.regions[i].dice;
      m.regions[i].sensitivity += s.regions[i].sensitivity;
      m.regions[i].specificity += s.regions[i].specificity;
    }
  }
  const double n = static_cast<double>(per_subject.size());
  for (double& d : m.class_dice) d /= n;
  for (Scores& r : m.regions) {
    r.dice /= n;
    r.sensitivity /= n;
    r.specificity /= n;
  }
  return m;
}

template LabelVolume argmax_labels(const Tensor<float>&, std::size_t);
template LabelVolume argmax_labels(const Tensor<double>&, std::size_t);
template LabelVolume labels_from_one_hot(const Tensor<float>&, std::size_t);
template LabelVolume labels_from_one_hot(const Tensor<double>&, std::size_t);

}  // namespace ddunet::objectives
