#include "ddunet/attention/gate.hpp"

#include <algorithm>
#include <string>

#include "ddunet/engine/ops.hpp"

namespace ddunet::attention {
namespace {

template <typename T>
void require_single_channel_psi(const AttentionGateParams<T>& p) {
  if (p.psi.weight.extent(0) != 1) throw ShapeError("attention gate: psi must produce exactly one channel");
}

template <typename T>
GateOutput<T> finish(const Var<T>& x, const Var<T>& x_proj, const Var<T>& g, const AttentionGateParams<T>& p,
                     bool upsample) {
  const Var<T> g_proj = layers::conv3d(g, p.wg);
  const Var<T> q = ops::add(x_proj, g_proj);
  Var<T> alpha = layers::sigmoid(layers::conv3d(layers::relu(q), p.psi));
  if (upsample) alpha = layers::upsample_nearest2x(alpha);
  return {ops::mul(x, alpha), alpha, q};
}

}  // namespace

std::size_t intermediate_channels(std::size_t skip_channels) { return std::max<std::size_t>(1, skip_channels / 2); }

template <typename T>
GateOutput<T> attention_gate_same_level(const Var<T>& x, const Var<T>& g, const AttentionGateParams<T>& p) {
  if (x.rank() != 5 || g.rank() != 5) throw ShapeError("attention gate: inputs must be (N,C,D,H,W)");
  for (std::size_t a : {0u, 2u, 3u, 4u}) {
    if (x.extent(a) != g.extent(a)) {
      throw ShapeError("attention gate: spatial mismatch between skip " + shape_to_string(x.shape()) +
                       " and gating signal " + shape_to_string(g.shape()));
    }
  }
  require_single_channel_psi(p);
  return finish(x, layers::conv3d(x, p.wx), g, p, false);
}

template <typename T>
GateOutput<T> attention_gate_original(const Var<T>& x, const Var<T>& g, const AttentionGateParams<T>& p) {
  if (x.rank() != 5 || g.rank() != 5) throw ShapeError("attention gate: inputs must be (N,C,D,H,W)");
  bool ok = x.extent(0) == g.extent(0);
  for (std::size_t a = 2; a < 5; ++a) ok = ok && x.extent(a) == 2 * g.extent(a);
  if (!ok) {
    throw ShapeError("attention gate (original): skip extents " + shape_to_string(x.shape()) +
                     " must be exactly twice the gating extents " + shape_to_string(g.shape()));
  }
  require_single_channel_psi(p);
  layers::ConvParams<T> down = p.wx;
  down.stride = 2;
  down.padding = 0;
  return finish(x, layers::conv3d(x, down), g, p, true);
}

template GateOutput<float> attention_gate_same_level(const Var<float>&, const Var<float>&,
                                                     const AttentionGateParams<float>&);
template GateOutput<double> attention_gate_same_level(const Var<double>&, const Var<double>&,
                                                      const AttentionGateParams<double>&);
template GateOutput<float> attention_gate_original(const Var<float>&, const Var<float>&,
                                                   const AttentionGateParams<float>&);
template GateOutput<double> attention_gate_original(const Var<double>&, const Var<double>&,
                                                    const AttentionGateParams<double>&);

}  // namespace ddunet::attention
