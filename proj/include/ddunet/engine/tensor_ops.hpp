#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "ddunet/engine/tensor.hpp"

// Pure, non-recording tensor kernels. The differentiable wrappers in ops.hpp
// and the data pipeline are both built on these.
namespace ddunet {

enum class ReduceOp { kSum, kMean, kMax };

// Output shape of a binary op; only singleton axes broadcast.
Shape broadcast_shape(const Shape& a, const Shape& b);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& a, T k);
template <typename T>
Tensor<T> map(const Tensor<T>& a, const std::function<T(T)>& f);

// a += b for identical shapes.
template <typename T>
void add_inplace(Tensor<T>& a, const Tensor<T>& b);

// Sums `grad` over the axes along which `target` was broadcast.
template <typename T>
Tensor<T> sum_to_shape(const Tensor<T>& grad, const Shape& target);

// Reduction over `axes` (all axes when empty). With keep_dims the reduced
// axes remain as extent 1; otherwise they are removed (a full reduction
// yields shape (1)).
template <typename T>
Tensor<T> reduce(const Tensor<T>& x, ReduceOp op, std::vector<std::size_t> axes, bool keep_dims);

template <typename T>
Tensor<T> concat(std::size_t axis, std::span<const Tensor<T>> parts);

template <typename T>
Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t start, std::size_t length);

// Per-axis window crop: one (start, extent) pair per axis.
template <typename T>
Tensor<T> crop(const Tensor<T>& x, const std::vector<std::size_t>& starts, const Shape& extents);

// Constant padding with per-axis (before, after) widths.
template <typename T>
Tensor<T> pad(const Tensor<T>& x, const std::vector<std::size_t>& before, const std::vector<std::size_t>& after,
              T value);

// Centred crop start floor((dim - target) / 2) for every axis.
std::vector<std::size_t> centered_starts(const Shape& dims, const Shape& target);

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
double dot(const Tensor<T>& a, const Tensor<T>& b);

}  // namespace ddunet
