#include "ddunet/objectives/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "ddunet/engine/ops.hpp"

namespace ddunet::objectives {

void LossConfig::validate() const {
  if (std::abs(lambda_dice + lambda_focal - 1.0) > 1e-12) throw ShapeError("loss: lambda_dice + lambda_focal must be 1");
  if (!(gamma >= 0.0)) throw ShapeError("loss: focal gamma must be >= 0");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ShapeError("loss: focal alpha must lie in (0, 1)");
  if (!(dice_smooth > 0.0)) throw ShapeError("loss: dice smoothing must be > 0");
  if (!(prob_clamp > 0.0 && prob_clamp < 0.5)) throw ShapeError("loss: probability clamp must lie in (0, 0.5)");
}

template <typename T>
void check_loss_inputs(const Tensor<T>& probs, const Tensor<T>& target) {
  if (probs.rank() != 5) throw ShapeError("loss: probabilities must be (N,C,D,H,W)");
  if (probs.shape() != target.shape()) {
    throw ShapeError("loss: shape mismatch between probabilities " + shape_to_string(probs.shape()) +
                     " and target " + shape_to_string(target.shape()));
  }
  const std::size_t N = probs.extent(0), C = probs.extent(1);
  const std::size_t vol = spatial_size(probs);
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t v = 0; v < vol; ++v) {
      double psum = 0.0;
      int ones = 0;
      for (std::size_t c = 0; c < C; ++c) {
        const std::size_t i = (n * C + c) * vol + v;
        psum += probs[i];
        if (target[i] == T(1)) {
          ++ones;
        } else if (target[i] != T(0)) {
          throw ShapeError("loss: target is not one-hot (value " + std::to_string(target[i]) + ")");
        }
      }
      if (ones != 1) throw ShapeError("loss: target is not one-hot (voxel with " + std::to_string(ones) + " ones)");
      if (std::abs(psum - 1.0) > 1e-5) {
        throw ShapeError("loss: probabilities do not sum to one (sum " + std::to_string(psum) + ")");
      }
    }
  }
}

template <typename T>
Var<T> dice_loss(const Var<T>& probs, const Tensor<T>& target, double smooth) {
  check_loss_inputs(probs.value(), target);
  const Tensor<T>& p = probs.value();
  const std::size_t N = p.extent(0), C = p.extent(1);
  const std::size_t vol = spatial_size(p);
  std::vector<double> inter(C, 0.0), psum(C, 0.0), tsum(C, 0.0);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t base = (n * C + c) * vol;
      for (std::size_t v = 0; v < vol; ++v) {
        inter[c] += static_cast<double>(p[base + v]) * target[base + v];
        psum[c] += p[base + v];
        tsum[c] += target[base + v];
      }
    }
  double loss = 0.0;
  for (std::size_t c = 0; c < C; ++c) loss += 1.0 - (2.0 * inter[c] + smooth) / (psum[c] + tsum[c] + smooth);
  loss /= static_cast<double>(C);
  return make_result<T>("dice_loss", {&probs}, Tensor<T>({1}, static_cast<T>(loss)), [&] {
    return BackwardFn<T>([target, inter, psum, tsum, smooth, N, C, vol](const Tensor<T>& g) {
      Tensor<T> gp(target.shape());
      const double scale = static_cast<double>(g[0]) / static_cast<double>(C);
      for (std::size_t c = 0; c < C; ++c) {
        const double den = psum[c] + tsum[c] + smooth;
        const double num = 2.0 * inter[c] + smooth;
        for (std::size_t n = 0; n < N; ++n) {
          const std::size_t base = (n * C + c) * vol;
          for (std::size_t v = 0; v < vol; ++v) {
            gp[base + v] = static_cast<T>(-scale * (2.0 * target[base + v] * den - num) / (den * den));
          }
        }
      }
      return std::vector<Tensor<T>>{std::move(gp)};
    });
  });
}

template <typename T>
Var<T> focal_loss(const Var<T>& probs, const Tensor<T>& target, double gamma, double alpha, double prob_clamp) {
  check_loss_inputs(probs.value(), target);
  const Tensor<T>& p = probs.value();
  const std::size_t N = p.extent(0), C = p.extent(1);
  const std::size_t vol = spatial_size(p);
  const double count = static_cast<double>(N * vol);
  // dL/dp_t per voxel, zero where the clamp is active.
  std::vector<double> dpt(N * vol);
  double loss = 0.0;
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t v = 0; v < vol; ++v) {
      double pt = 0.0;
      for (std::size_t c = 0; c < C; ++c) pt += static_cast<double>(p[(n * C + c) * vol + v]) * target[(n * C + c) * vol + v];
      const bool clamped = pt < prob_clamp || pt > 1.0 - prob_clamp;
      pt = std::clamp(pt, prob_clamp, 1.0 - prob_clamp);
      const double q = 1.0 - pt;
      const double w = std::pow(q, gamma);
      loss += -alpha * w * std::log(pt);
      double d = 0.0;
      if (!clamped) {
        d = -alpha * w / pt;
        if (gamma != 0.0) d += alpha * gamma * std::pow(q, gamma - 1.0) * std::log(pt);
      }
      dpt[n * vol + v] = d / count;
    }
  }
  loss /= count;
  return make_result<T>("focal_loss", {&probs}, Tensor<T>({1}, static_cast<T>(loss)), [&] {
    return BackwardFn<T>([target, dpt = std::move(dpt), N, C, vol](const Tensor<T>& g) {
      Tensor<T> gp(target.shape());
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t v = 0; v < vol; ++v) {
            const std::size_t i = (n * C + c) * vol + v;
            gp[i] = static_cast<T>(static_cast<double>(g[0]) * dpt[n * vol + v] * target[i]);
          }
      return std::vector<Tensor<T>>{std::move(gp)};
    });
  });
}

template <typename T>
Var<T> total_loss(const Var<T>& probs, const Tensor<T>& target, const LossConfig& cfg) {
  cfg.validate();
  const Var<T> dice = dice_loss(probs, target, cfg.dice_smooth);
  const Var<T> focal = focal_loss(probs, target, cfg.gamma, cfg.alpha, cfg.prob_clamp);
  return ops::add(ops::scale(dice, static_cast<T>(cfg.lambda_dice)), ops::scale(focal, static_cast<T>(cfg.lambda_focal)));
}

#define DDUNET_INSTANTIATE(T)                                                        \
  template void check_loss_inputs(const Tensor<T>&, const Tensor<T>&);               \
  template Var<T> dice_loss(const Var<T>&, const Tensor<T>&, double);                \
  template Var<T> focal_loss(const Var<T>&, const Tensor<T>&, double, double, double); \
  template Var<T> total_loss(const Var<T>&, const Tensor<T>&, const LossConfig&);

DDUNET_INSTANTIATE(float)
DDUNET_INSTANTIATE(double)

#undef DDUNET_INSTANTIATE

}  // namespace ddunet::objectives
