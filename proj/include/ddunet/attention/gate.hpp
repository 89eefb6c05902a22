#pragma once

#include <cstddef>

#include "ddunet/layers/layers.hpp"

namespace ddunet::attention {

/// Parameters of one additive attention gate: 1x1x1 projections of the skip
/// features (wx) and the gating signal (wg) into F_int channels, and the
/// 1x1x1 projection psi down to a single attention channel.
template <typename T>
struct AttentionGateParams {
  layers::ConvParams<T> wx;
  layers::ConvParams<T> wg;
  layers::ConvParams<T> psi;
};

template <typename T>
struct GateOutput {
  Var<T> gated;  // x weighted by alpha, same shape as x
  Var<T> alpha;  // (N, 1, ...) on x's grid
  Var<T> preactivation;  // wx*x + wg*g, the input of the internal relu
};

// F_int = max(1, C_x / 2).
std::size_t intermediate_channels(std::size_t skip_channels);

// alpha = sigmoid(psi(relu(wx*x + wg*g))), with x and g on the same grid.
template <typename T>
GateOutput<T> attention_gate_same_level(const Var<T>& x, const Var<T>& g, const AttentionGateParams<T>& p);

// Gating signal from the coarser level: x is projected with stride 2 onto
// g's grid, alpha is computed there and replicated back up to x's grid.
template <typename T>
GateOutput<T> attention_gate_original(const Var<T>& x, const Var<T>& g, const AttentionGateParams<T>& p);

}  // namespace ddunet::attention
