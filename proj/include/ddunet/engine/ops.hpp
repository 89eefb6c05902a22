#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ddunet/engine/tape.hpp"
#include "ddunet/engine/tensor_ops.hpp"

// Differentiable wrappers over the tensor kernels.
namespace ddunet::ops {

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b);
// Elementwise product; a singleton axis on either side broadcasts.
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> scale(const Var<T>& a, T k);
// Applies f elementwise; df is its derivative evaluated at the input.
template <typename T>
Var<T> map(const Var<T>& a, std::function<T(T)> f, std::function<T(T)> df, std::string name = "map");
template <typename T>
Var<T> square(const Var<T>& a);

template <typename T>
Var<T> reduce(const Var<T>& x, ReduceOp op, std::vector<std::size_t> axes = {}, bool keep_dims = false);
template <typename T>
Var<T> sum(const Var<T>& x, std::vector<std::size_t> axes = {}, bool keep_dims = false) {
  return reduce(x, ReduceOp::kSum, std::move(axes), keep_dims);
}
template <typename T>
Var<T> mean(const Var<T>& x, std::vector<std::size_t> axes = {}, bool keep_dims = false) {
  return reduce(x, ReduceOp::kMean, std::move(axes), keep_dims);
}

template <typename T>
Var<T> concat(std::size_t axis, const std::vector<Var<T>>& parts);
template <typename T>
Var<T> slice(const Var<T>& x, std::size_t axis, std::size_t start, std::size_t length);
template <typename T>
Var<T> crop(const Var<T>& x, const std::vector<std::size_t>& starts, const Shape& extents);
template <typename T>
Var<T> pad(const Var<T>& x, const std::vector<std::size_t>& before, const std::vector<std::size_t>& after,
           T value = T(0));

}  // namespace ddunet::ops
