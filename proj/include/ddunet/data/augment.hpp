#pragma once

#include <cstdint>

#include "ddunet/data/subject.hpp"
#include "ddunet/engine/rng.hpp"

namespace ddunet::data {

struct AugmentConfig {
  double probability = 0.2;
  double max_angle_deg = 10.0;
  double scale_lo = 0.9;
  double scale_hi = 1.1;
  double noise_sigma = 0.01;
};

// The outcome of the four coin flips and their parameters.
struct AugmentPlan {
  bool flip = false;
  bool rotate = false;
  bool scale = false;
  bool noise = false;
  double angle_deg = 0.0;
  double factor = 1.0;
  std::uint64_t noise_key = 0;
};

// Always consumes the same number of draws, whatever the outcome.
AugmentPlan draw_plan(Rng& rng, const AugmentConfig& cfg = {});

// flip (W axis) -> rotate (H-W plane) -> intensity scale -> Gaussian noise.
Sample apply_plan(const Sample& sample, const AugmentPlan& plan, const AugmentConfig& cfg = {});

Sample augment(const Sample& sample, Rng& rng, const AugmentConfig& cfg = {});

Rng augment_rng(std::uint64_t seed, std::uint64_t subject_index, std::uint64_t epoch);

Tensor<float> flip_w(const Tensor<float>& x);

// Rotation about the volume center in the H-W plane. Linear interpolation with
// zero fill for images; nearest neighbour for label maps, background outside.
Tensor<float> rotate_image(const Tensor<float>& image, double angle_deg);
Tensor<float> rotate_one_hot(const Tensor<float>& target, double angle_deg);

}  // namespace ddunet::data
