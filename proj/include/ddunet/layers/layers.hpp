#pragma once

#include <cstddef>
#include <cstdint>

#include "ddunet/engine/tape.hpp"
#include "ddunet/layers/kernels.hpp"

namespace ddunet::layers {

/// Convolution weights and geometry.
///
/// For `conv3d` the weight is (C_out, C_in, k, k, k). For
/// `transposed_conv3d` it is (C_in, C_out, k, k, k), i.e. exactly the weight
/// of the strided convolution it is the adjoint of.
template <typename T>
struct ConvParams {
  Var<T> weight;
  Var<T> bias;  // (C_out); may be undefined for a bias-free convolution
  std::size_t stride = 1;
  std::size_t padding = 0;
};

template <typename T>
struct GroupNormParams {
  Var<T> gamma;  // (C)
  Var<T> beta;   // (C)
  std::size_t groups = 1;
  double eps = 1e-5;
};

enum class Mode { kTrain, kEval };

struct DropoutSpec {
  double rate = 0.0;
  Mode mode = Mode::kEval;
};

// Addresses one dropout layer invocation; masks are a pure function of it.
struct DropoutKey {
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  std::uint64_t layer = 0;
};

enum class Activation { kRelu, kSigmoid, kSoftmaxChannels };

// Default group count: min(8, C) when 8 divides C, otherwise one group per channel.
std::size_t default_groups(std::size_t channels);

template <typename T>
Var<T> conv3d(const Var<T>& x, const ConvParams<T>& p);

// Fixed decoder geometry: k = stride = 2, no padding; doubles D, H and W.
template <typename T>
Var<T> transposed_conv3d(const Var<T>& x, const ConvParams<T>& p);

// 2x2x2 max pooling with stride 2; gradient flows to the stored argmax.
template <typename T>
Var<T> maxpool3d(const Var<T>& x);

template <typename T>
Var<T> group_norm(const Var<T>& x, const GroupNormParams<T>& p);

template <typename T>
Var<T> relu(const Var<T>& x);
template <typename T>
Var<T> sigmoid(const Var<T>& x);
template <typename T>
Var<T> softmax_channels(const Var<T>& x);
template <typename T>
Var<T> activation(Activation kind, const Var<T>& x);

// Whole-channel (inverted) dropout. Identity in eval mode or at rate 0.
template <typename T>
Var<T> channel_dropout(const Var<T>& x, const DropoutSpec& spec, const DropoutKey& key);

// True when channel (n, c) is kept under the given key and rate.
bool dropout_keeps(const DropoutKey& key, double rate, std::size_t n, std::size_t c);

template <typename T>
Var<T> upsample_nearest2x(const Var<T>& x);

}  // namespace ddunet::layers
