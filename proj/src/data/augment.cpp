#include "ddunet/data/augment.hpp"

#include <cmath>
#include <numbers>

#include "ddunet/engine/error.hpp"

namespace ddunet::data {
namespace {

struct PlaneMap {
  std::size_t H = 0;
  std::size_t W = 0;
  std::vector<double> sy;
  std::vector<double> sx;
};

// Source coordinates for every destination pixel of an H-W plane.
PlaneMap plane_map(std::size_t H, std::size_t W, double angle_deg) {
  const double t = angle_deg * std::numbers::pi / 180.0;
  const double c = std::cos(t);
  const double s = std::sin(t);
  const double ch = (static_cast<double>(H) - 1.0) / 2.0;
  const double cw = (static_cast<double>(W) - 1.0) / 2.0;
  PlaneMap m{H, W, std::vector<double>(H * W), std::vector<double>(H * W)};
  for (std::size_t h = 0; h < H; ++h) {
    const double dy = static_cast<double>(h) - ch;
    for (std::size_t w = 0; w < W; ++w) {
      const double dx = static_cast<double>(w) - cw;
      m.sy[h * W + w] = ch + c * dy - s * dx;
      m.sx[h * W + w] = cw + s * dy + c * dx;
    }
  }
  return m;
}

void check_volume(const Tensor<float>& x, const char* what) {
  if (x.rank() != 4) throw ShapeError(std::string(what) + ": expected (C, D, H, W), got " + shape_to_string(x.shape()));
}

}  // namespace

AugmentPlan draw_plan(Rng& rng, const AugmentConfig& cfg) {
  AugmentPlan p;
  p.flip = rng.uniform() < cfg.probability;
  p.rotate = rng.uniform() < cfg.probability;
  p.angle_deg = rng.uniform(-cfg.max_angle_deg, cfg.max_angle_deg);
  p.scale = rng.uniform() < cfg.probability;
  p.factor = rng.uniform(cfg.scale_lo, cfg.scale_hi);
  p.noise = rng.uniform() < cfg.probability;
  p.noise_key = rng.next_u64();
  return p;
}

Tensor<float> flip_w(const Tensor<float>& x) {
  check_volume(x, "flip_w");
  const std::size_t W = x.extent(3);
  Tensor<float> out(x.shape());
  const std::size_t rows = x.numel() / W;
  for (std::size_t r = 0; r < rows; ++r) {
    const float* src = x.data().data() + r * W;
    float* dst = out.data().data() + r * W;
    for (std::size_t w = 0; w < W; ++w) dst[w] = src[W - 1 - w];
  }
  return out;
}

Tensor<float> rotate_image(const Tensor<float>& image, double angle_deg) {
  check_volume(image, "rotate_image");
  const std::size_t H = image.extent(2);
  const std::size_t W = image.extent(3);
  const PlaneMap m = plane_map(H, W, angle_deg);
  const std::size_t planes = image.extent(0) * image.extent(1);
  Tensor<float> out(image.shape());
  const auto ih = static_cast<std::ptrdiff_t>(H);
  const auto iw = static_cast<std::ptrdiff_t>(W);
  for (std::size_t p = 0; p < planes; ++p) {
    const float* src = image.data().data() + p * H * W;
    float* dst = out.data().data() + p * H * W;
    auto at = [&](std::ptrdiff_t y, std::ptrdiff_t x) -> double {
      if (y < 0 || x < 0 || y >= ih || x >= iw) return 0.0;
      return src[static_cast<std::size_t>(y) * W + static_cast<std::size_t>(x)];
    };
    for (std::size_t i = 0; i < H * W; ++i) {
      const double fy = std::floor(m.sy[i]);
      const double fx = std::floor(m.sx[i]);
      const double ay = m.sy[i] - fy;
      const double ax = m.sx[i] - fx;
      const auto y0 = static_cast<std::ptrdiff_t>(fy);
      const auto x0 = static_cast<std::ptrdiff_t>(fx);
      const double v = (1 - ay) * ((1 - ax) * at(y0, x0) + ax * at(y0, x0 + 1)) +
                       ay * ((1 - ax) * at(y0 + 1, x0) + ax * at(y0 + 1, x0 + 1));
      dst[i] = static_cast<float>(v);
    }
  }
  return out;
}

Tensor<float> rotate_one_hot(const Tensor<float>& target, double angle_deg) {
  check_volume(target, "rotate_one_hot");
  const std::size_t C = target.extent(0);
  const std::size_t D = target.extent(1);
  const std::size_t H = target.extent(2);
  const std::size_t W = target.extent(3);
  const std::size_t n = D * H * W;
  const PlaneMap m = plane_map(H, W, angle_deg);

  std::vector<std::size_t> labels(n, 0);
  for (std::size_t c = 1; c < C; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      if (target[c * n + i] > target[labels[i] * n + i]) labels[i] = c;
    }
  }

  Tensor<float> out(target.shape());
  for (std::size_t d = 0; d < D; ++d) {
    for (std::size_t i = 0; i < H * W; ++i) {
      const double y = std::round(m.sy[i]);
      const double x = std::round(m.sx[i]);
      std::size_t label = 0;
      if (y >= 0 && x >= 0 && y < static_cast<double>(H) && x < static_cast<double>(W)) {
        label = labels[d * H * W + static_cast<std::size_t>(y) * W + static_cast<std::size_t>(x)];
      }
      out[label * n + d * H * W + i] = 1.0f;
    }
  }
  return out;
}

Sample apply_plan(const Sample& sample, const AugmentPlan& plan, const AugmentConfig& cfg) {
  Sample s = sample;
  if (plan.flip) {
    s.image = flip_w(s.image);
    s.target = flip_w(s.target);
  }
  if (plan.rotate) {
    s.image = rotate_image(s.image, plan.angle_deg);
    s.target = rotate_one_hot(s.target, plan.angle_deg);
  }
  if (plan.scale) {
    const auto f = static_cast<float>(plan.factor);
    for (float& v : s.image.data()) v *= f;
  }
  if (plan.noise) {
    Rng rng(plan.noise_key, Stream::kAugment, 0);
    for (float& v : s.image.data()) v += static_cast<float>(cfg.noise_sigma * rng.normal());
  }
  return s;
}

Sample augment(const Sample& sample, Rng& rng, const AugmentConfig& cfg) {
  return apply_plan(sample, draw_plan(rng, cfg), cfg);
}

Rng augment_rng(std::uint64_t seed, std::uint64_t subject_index, std::uint64_t epoch) {
  return Rng(seed, Stream::kAugment, Rng::hash({subject_index, epoch}));
}

}  // namespace ddunet::data
