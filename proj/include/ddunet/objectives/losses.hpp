#pragma once

#include "ddunet/engine/tape.hpp"

namespace ddunet::objectives {

struct LossConfig {
  double lambda_dice = 0.7;
  double lambda_focal = 0.3;
  double gamma = 2.0;          // focal focusing parameter
  double alpha = 0.25;         // focal class-balancing weight, applied to every class
  double dice_smooth = 1e-5;   // added to Dice numerator and denominator
  double prob_clamp = 1e-7;    // p_t is clamped to [clamp, 1 - clamp] before the log

  void validate() const;
};

// Requires rank 5, equal shapes, a {0,1} one-hot target and per-voxel
// probability sums within 1e-5 of one.
template <typename T>
void check_loss_inputs(const Tensor<T>& probs, const Tensor<T>& target);

/// Multi-class soft Dice loss.
///
/// Per class c, over every batch element and voxel:
///   1 - (2 * sum(p*t) + smooth) / (sum(p) + sum(t) + smooth)
/// averaged over all classes (background included).
template <typename T>
Var<T> dice_loss(const Var<T>& probs, const Tensor<T>& target, double smooth = 1e-5);

/// Multi-class focal loss, mean over voxels:
///   -alpha * (1 - p_t)^gamma * log(p_t)
/// where p_t is the probability assigned to the true class.
template <typename T>
Var<T> focal_loss(const Var<T>& probs, const Tensor<T>& target, double gamma = 2.0, double alpha = 0.25,
                  double prob_clamp = 1e-7);

// lambda_dice * dice_loss + lambda_focal * focal_loss.
template <typename T>
Var<T> total_loss(const Var<T>& probs, const Tensor<T>& target, const LossConfig& cfg = {});

}  // namespace ddunet::objectives
