#pragma once

#include <cstdint>

#include "ddunet/network/model.hpp"

namespace ddunet::optim {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

/// AdamW state with the AMSGrad running maximum of the second moment.
template <typename T>
struct AdamWState {
  AdamWConfig hp;
  std::uint64_t step = 0;
  network::ParamSet<T> m;
  network::ParamSet<T> v;
  network::ParamSet<T> v_max;
};

template <typename T>
AdamWState<T> make_adamw_state(const network::ParamSet<T>& params, const AdamWConfig& hp = {});

/// One update. With bias-corrected moments m_hat and v_hat = v_max / (1 - beta2^t):
///   theta <- theta - lr * m_hat / (sqrt(v_hat) + eps) - lr * weight_decay * theta
///
/// Gradients must be keyed exactly like `params`. A non-finite gradient
/// throws NumericalError before anything is modified.
template <typename T>
void adamw_step(network::ParamSet<T>& params, const network::ParamSet<T>& grads, AdamWState<T>& state, double lr);

}  // namespace ddunet::optim
