#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "../support/helpers.hpp"
#include "../support/oracles.hpp"
#include "ddunet/engine/gradcheck.hpp"
#include "ddunet/objectives/losses.hpp"
#include "ddunet/objectives/metrics.hpp"

using namespace ddunet;
using namespace ddunet::objectives;
using namespace testing_support;

TEST(Losses, MatchScalarFormulasOnFourClassBatches) {
  for (std::uint64_t i = 0; i < 10; ++i) {
    const Tensor<double> probs = softmax_reference(random_tensor({2, 4, 3, 2, 2}, 40 + i, -4.0, 4.0));
    const Tensor<double> target = random_one_hot({2, 4, 3, 2, 2}, 60 + i);
    const oracle::LossTerms want = oracle::loss_terms(probs, target);
    EXPECT_NEAR(dice_loss(Var<double>(probs), target).value()[0], want.dice, 1e-12);
    EXPECT_NEAR(focal_loss(Var<double>(probs), target).value()[0], want.focal, 1e-12);
    EXPECT_NEAR(total_loss(Var<double>(probs), target).value()[0], want.total, 1e-12);
  }
}

TEST(Losses, CustomWeightsAndGamma) {
  const Tensor<double> probs = softmax_reference(random_tensor({1, 3, 2, 2, 2}, 5));
  const Tensor<double> target = random_one_hot({1, 3, 2, 2, 2}, 6);
  LossConfig cfg;
  cfg.lambda_dice = 0.4;
  cfg.lambda_focal = 0.6;
  cfg.gamma = 0.0;
  cfg.alpha = 0.5;
  const auto want = oracle::loss_terms(probs, target, 0.4, 0.6, 0.0, 0.5);
  EXPECT_NEAR(total_loss(Var<double>(probs), target, cfg).value()[0], want.total, 1e-12);
}

TEST(Losses, Anchors) {
  const Tensor<double> t = random_one_hot({1, 4, 2, 2, 2}, 1);
  EXPECT_NEAR(total_loss(Var<double>(t), t).value()[0], 0.0, 1e-12);
  const Tensor<double> even = Tensor<double>::full({1, 2, 1, 2, 2}, 0.5);
  EXPECT_DOUBLE_EQ(focal_loss(Var<double>(even), random_one_hot({1, 2, 1, 2, 2}, 2)).value()[0],
                   0.25 * 0.25 * std::numbers::ln2);
  // complete miss: every voxel predicts the wrong class with certainty
  Tensor<double> truth({1, 2, 1, 1, 2}), wrong({1, 2, 1, 1, 2});
  truth[0] = truth[1] = 1.0;
  wrong[2] = wrong[3] = 1.0;
  EXPECT_NEAR(dice_loss(Var<double>(wrong), truth).value()[0], 1.0, 1e-5);
  EXPECT_NEAR(focal_loss(Var<double>(wrong), truth).value()[0], -0.25 * std::pow(1 - 1e-7, 2) * std::log(1e-7),
              1e-12);
}

TEST(Losses, InputChecks) {
  const Tensor<double> t = random_one_hot({1, 2, 2, 2, 2}, 1);
  EXPECT_THROW(total_loss(Var<double>(Tensor<double>({1, 2, 2, 2, 2}, 0.3)), t), ShapeError);
  EXPECT_THROW(total_loss(Var<double>(t), Tensor<double>({1, 2, 2, 2, 2}, 0.5)), ShapeError);
  EXPECT_THROW(total_loss(Var<double>(t), random_one_hot({1, 2, 2, 2, 4}, 1)), ShapeError);
  LossConfig bad;
  bad.dice_smooth = -1.0;
  EXPECT_THROW(bad.validate(), ShapeError);
}

TEST(Losses, GradientThroughSoftmax) {
  const Tensor<double> target = random_one_hot({1, 3, 2, 2, 1}, 3);
  const auto r = finite_diff_check(
      [&](const Var<double>& logits) { return total_loss(layers::softmax_channels(logits), target); },
      random_tensor({1, 3, 2, 2, 1}, 4, -2.0, 2.0));
  EXPECT_TRUE(r.passed) << r.max_rel_error;
}

namespace {

LabelVolume volume(std::vector<std::uint8_t> labels) {
  return LabelVolume{{1, 1, labels.size()}, std::move(labels)};
}

}  // namespace

TEST(Metrics, HandCountedConfusion) {
  const LabelVolume truth = volume({0, 1, 1, 2, 3, 3, 0, 0});
  const LabelVolume pred = volume({0, 1, 2, 2, 3, 0, 3, 0});
  const auto wt = confusion_counts(pred, truth, region_positive_set(Region::kWT));
  EXPECT_EQ(wt, (ConfusionCounts{4, 1, 2, 1}));
  const auto et = confusion_counts(pred, truth, {3});
  EXPECT_EQ(et, (ConfusionCounts{1, 1, 5, 1}));
  const Scores s = metric_scores(et);
  EXPECT_DOUBLE_EQ(s.dice, 0.5);
  EXPECT_DOUBLE_EQ(s.sensitivity, 0.5);
  EXPECT_DOUBLE_EQ(s.specificity, 5.0 / 6.0);
}

TEST(Metrics, DegenerateConventions) {
  const Scores absent = metric_scores({0, 0, 10, 0});
  EXPECT_EQ(absent.dice, 1.0);
  EXPECT_EQ(absent.sensitivity, 1.0);
  EXPECT_EQ(absent.specificity, 1.0);
  const Scores missed = metric_scores({0, 0, 7, 3});
  EXPECT_EQ(missed.dice, 0.0);
  EXPECT_EQ(missed.sensitivity, 0.0);
  const Scores spurious = metric_scores({0, 3, 7, 0});
  EXPECT_EQ(spurious.dice, 0.0);
  const Scores all_positive = metric_scores({5, 0, 0, 0});
  EXPECT_EQ(all_positive.specificity, 1.0);
}

TEST(Metrics, IdenticalVolumesScorePerfectly) {
  const LabelVolume v = volume({0, 1, 2, 3, 3, 2, 1, 0, 0});
  const ScoreSummary s = summarize(evaluate_volume(v, v));
  for (double d : s.class_dice) EXPECT_EQ(d, 1.0);
  for (const Scores& r : s.regions) {
    EXPECT_EQ(r.dice, 1.0);
    EXPECT_EQ(r.sensitivity, 1.0);
    EXPECT_EQ(r.specificity, 1.0);
  }
}

TEST(Metrics, RegionsAgreeWithUnionOfClassMasks) {
  const std::vector<std::vector<int>> unions = {{1, 2, 3}, {1, 3}, {3}};
  for (std::uint64_t m = 0; m < 100; ++m) {
    Rng rng(17, Stream::kInit, m);
    LabelVolume a{{3, 4, 5}, std::vector<std::uint8_t>(60)}, b = a;
    for (std::size_t i = 0; i < 60; ++i) {
      a.labels[i] = static_cast<std::uint8_t>(rng.below(4));
      b.labels[i] = static_cast<std::uint8_t>(rng.below(4));
    }
    const auto r = evaluate_volume(a, b);
    for (std::size_t k = 0; k < 3; ++k) {
      const auto u = oracle::region_counts_by_union(a.labels, b.labels, unions[k]);
      EXPECT_EQ(r.regions[k].counts, (ConfusionCounts{u.tp, u.fp, u.tn, u.fn}));
    }
  }
}

TEST(Metrics, ArgmaxTiesGoToLowestClass) {
  Tensor<float> p({1, 3, 1, 1, 2}, std::vector<float>{0.4f, 0.2f, 0.4f, 0.2f, 0.2f, 0.6f});
  const LabelVolume l = argmax_labels(p);
  EXPECT_EQ(l.labels, (std::vector<std::uint8_t>{0, 2}));
  EXPECT_EQ(labels_from_one_hot(random_one_hot<float>({1, 4, 2, 2, 2}, 3)).size(), 8u);
}

TEST(Metrics, MeanSummaryIsUnweighted) {
  ScoreSummary a, b;
  a.regions[0].dice = 1.0;
  b.regions[0].dice = 0.5;
  a.class_dice[2] = 0.25;
  EXPECT_DOUBLE_EQ(mean_summary({a, b}).regions[0].dice, 0.75);
  EXPECT_DOUBLE_EQ(mean_summary({a, b}).class_dice[2], 0.125);
}

TEST(Metrics, MismatchedVolumesThrow) {
  EXPECT_THROW(evaluate_volume(volume({0, 1}), volume({0, 1, 2})), ShapeError);
}
