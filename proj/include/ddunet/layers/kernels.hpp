#pragma once

#include <cstddef>
#include <vector>

#include "ddunet/engine/tensor.hpp"

// Forward and gradient kernels for the volumetric layers. All inputs are
// rank-5 (N, C, D, H, W) unless stated otherwise.
namespace ddunet::kernels {

struct ConvGeometry {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

std::size_t conv_out_extent(std::size_t in, std::size_t k, const ConvGeometry& g);

// weight: (C_out, C_in, k, k, k); bias: (C_out) or empty.
template <typename T>
Tensor<T> conv3d_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, ConvGeometry g);

// Gradient w.r.t. the input, whose shape is `x_shape`.
template <typename T>
Tensor<T> conv3d_backward_input(const Tensor<T>& grad_out, const Tensor<T>& weight, const Shape& x_shape,
                                ConvGeometry g);

template <typename T>
Tensor<T> conv3d_backward_weight(const Tensor<T>& x, const Tensor<T>& grad_out, const Shape& weight_shape,
                                 ConvGeometry g);

// Sum over batch and spatial axes, one value per channel.
template <typename T>
Tensor<T> channel_sum(const Tensor<T>& t);

template <typename T>
struct PoolResult {
  Tensor<T> output;
  std::vector<std::size_t> argmax;  // input offset chosen for each output element
};

// 2x2x2 window, stride 2. Ties resolve to the lowest input offset.
template <typename T>
PoolResult<T> maxpool3d_forward(const Tensor<T>& x);

template <typename T>
Tensor<T> maxpool3d_backward(const Tensor<T>& grad_out, const std::vector<std::size_t>& argmax, const Shape& x_shape);

template <typename T>
struct GroupNormCache {
  Tensor<T> normalized;         // (x - mean) / sqrt(var + eps)
  std::vector<double> inv_std;  // one per (sample, group)
};

template <typename T>
Tensor<T> group_norm_forward(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                             std::size_t groups, double eps, GroupNormCache<T>* cache);

template <typename T>
struct GroupNormGrads {
  Tensor<T> x;
  Tensor<T> gamma;
  Tensor<T> beta;
};

template <typename T>
GroupNormGrads<T> group_norm_backward(const Tensor<T>& grad_out, const Tensor<T>& gamma, std::size_t groups,
                                      const GroupNormCache<T>& cache);

// Softmax over the channel axis at every voxel, max-subtracted.
template <typename T>
Tensor<T> softmax_channels(const Tensor<T>& logits);

// Nearest-neighbour 2x upsampling of the three spatial axes.
template <typename T>
Tensor<T> upsample_nearest2x(const Tensor<T>& x);

// Adjoint of upsample_nearest2x: sums each 2x2x2 block.
template <typename T>
Tensor<T> downsample_sum2x(const Tensor<T>& x);

}  // namespace ddunet::kernels
