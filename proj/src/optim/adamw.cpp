#include "ddunet/optim/adamw.hpp"

#include <algorithm>
#include <cmath>

namespace ddunet::optim {

template <typename T>
AdamWState<T> make_adamw_state(const network::ParamSet<T>& params, const AdamWConfig& hp) {
  AdamWState<T> s{hp, 0, {}, {}, {}};
  for (const auto& [name, t] : params) {
    s.m.emplace(name, Tensor<T>::zeros_like(t));
    s.v.emplace(name, Tensor<T>::zeros_like(t));
    s.v_max.emplace(name, Tensor<T>::zeros_like(t));
  }
  return s;
}

template <typename T>
void adamw_step(network::ParamSet<T>& params, const network::ParamSet<T>& grads, AdamWState<T>& state, double lr) {
  if (!(lr >= 0.0)) throw ShapeError("adamw: learning rate must be >= 0");
  if (grads.size() != params.size()) throw ShapeError("adamw: gradient set does not match parameter set");
  for (const auto& [name, p] : params) {
    const auto g = grads.find(name);
    if (g == grads.end()) throw ShapeError("adamw: no gradient for parameter '" + name + "'");
    if (g->second.shape() != p.shape()) throw ShapeError("adamw: gradient shape mismatch for '" + name + "'");
    if (!state.m.count(name)) throw ShapeError("adamw: optimizer state has no entry for '" + name + "'");
    for (T v : g->second.data()) {
      if (!std::isfinite(v)) {
        throw NumericalError("adamw: non-finite gradient in '" + name + "' at step " + std::to_string(state.step + 1));
      }
    }
  }

  const AdamWConfig& hp = state.hp;
  const std::uint64_t t = ++state.step;
  const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(t));
  for (auto& [name, p] : params) {
    const Tensor<T>& g = grads.at(name);
    Tensor<T>& m = state.m.at(name);
    Tensor<T>& v = state.v.at(name);
    Tensor<T>& vmax = state.v_max.at(name);
    for (std::size_t i = 0; i < p.numel(); ++i) {
      const double gi = g[i];
      const double mi = hp.beta1 * m[i] + (1.0 - hp.beta1) * gi;
      const double vi = hp.beta2 * v[i] + (1.0 - hp.beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      vmax[i] = std::max(vmax[i], v[i]);
      const double theta = p[i];
      const double update = (static_cast<double>(m[i]) / bc1) / (std::sqrt(static_cast<double>(vmax[i]) / bc2) + hp.eps);
      p[i] = static_cast<T>(theta - lr * update - lr * hp.weight_decay * theta);
    }
  }
}

template AdamWState<float> make_adamw_state(const network::ParamSet<float>&, const AdamWConfig&);
template AdamWState<double> make_adamw_state(const network::ParamSet<double>&, const AdamWConfig&);
template void adamw_step(network::ParamSet<float>&, const network::ParamSet<float>&, AdamWState<float>&, double);
template void adamw_step(network::ParamSet<double>&, const network::ParamSet<double>&, AdamWState<double>&, double);

}  // namespace ddunet::optim
