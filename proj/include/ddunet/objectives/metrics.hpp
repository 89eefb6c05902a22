#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "ddunet/engine/tensor.hpp"

namespace ddunet::objectives {

inline constexpr std::size_t kNumClasses = 4;

// Integer label map over a (D, H, W) grid.
struct LabelVolume {
  std::array<std::size_t, 3> dims{};
  std::vector<std::uint8_t> labels;

  std::size_t size() const { return labels.size(); }
};

using LabelSet = std::set<std::uint8_t>;

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fn = 0;

  std::uint64_t total() const { return tp + fp + tn + fn; }
  bool operator==(const ConfusionCounts&) const = default;
};

struct Scores {
  double dice = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
};

enum class Region { kWT, kTC, kET };
inline constexpr std::array<Region, 3> kRegions{Region::kWT, Region::kTC, Region::kET};

struct MetricEntry {
  ConfusionCounts counts;
  Scores scores;
};

struct MetricsReport {
  std::array<MetricEntry, kNumClasses> classes;  // positive set {c}
  std::array<MetricEntry, 3> regions;            // WT, TC, ET
};

// Label sets of the composed tumour regions: WT {1,2,3}, TC {1,3}, ET {3}.
LabelSet region_positive_set(Region region);
std::string region_name(Region region);

// Binarises both volumes by membership in `positive` and counts voxelwise.
ConfusionCounts confusion_counts(const LabelVolume& pred, const LabelVolume& truth, const LabelSet& positive);

// Dice and sensitivity are 1 when the positive class is absent from both
// volumes and 0 when it is absent from exactly one; specificity is 1 when
// the truth has no negatives.
Scores metric_scores(const ConfusionCounts& c);

MetricsReport evaluate_volume(const LabelVolume& pred, const LabelVolume& truth);

// Per-voxel argmax over channels of sample n of (N, C, D, H, W) logits or
// probabilities; ties go to the lowest class index.
template <typename T>
LabelVolume argmax_labels(const Tensor<T>& scores, std::size_t n = 0);

// Label map from a one-hot (C, D, H, W) or (N, C, D, H, W) target.
template <typename T>
LabelVolume labels_from_one_hot(const Tensor<T>& one_hot, std::size_t n = 0);

// The score columns that are logged and averaged across subjects.
struct ScoreSummary {
  std::array<double, kNumClasses> class_dice{};
  std::array<Scores, 3> regions{};
};

ScoreSummary summarize(const MetricsReport& report);
// Unweighted mean over subjects, accumulated in input order.
ScoreSummary mean_summary(const std::vector<ScoreSummary>& per_subject);

}  // namespace ddunet::objectives
