#pragma once

#include <algorithm>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ddunet/engine/error.hpp"

namespace ddunet {

class Rng;

constexpr std::size_t kMaxRank = 5;

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);

// Validates rank and extents; returns the element count.
std::size_t checked_numel(const Shape& shape);

// Row-major strides derived from the shape alone.
Shape row_major_strides(const Shape& shape);

/// Dense row-major array of up to five axes.
///
/// Five-axis data uses the N,C,D,H,W layout throughout the library. A
/// default-constructed tensor is an empty placeholder (`empty()` is true);
/// every constructed tensor has rank 1..5 and strictly positive extents.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T(0))
      : shape_(std::move(shape)), data_(checked_numel(shape_), fill) {}

  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (checked_numel(shape_) != data_.size()) {
      throw ShapeError("tensor buffer of " + std::to_string(data_.size()) +
                       " elements does not match shape " + shape_to_string(shape_));
    }
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), T(0)); }
  static Tensor full(Shape shape, T value) { return Tensor(std::move(shape), value); }
  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape(), T(0)); }
  // Samples from N(mean, std^2) using the supplied stream, in buffer order.
  static Tensor normal(Shape shape, double mean, double std, Rng& rng);

  bool empty() const { return data_.empty(); }
  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
  std::size_t numel() const { return data_.size(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  const std::vector<T>& buffer() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // Offset of a full multi-index (one entry per axis).
  std::size_t offset(std::initializer_list<std::size_t> index) const {
    std::size_t off = 0;
    std::size_t axis = 0;
    for (std::size_t i : index) {
      off = off * shape_[axis] + i;
      ++axis;
    }
    return off;
  }

  T& at(std::initializer_list<std::size_t> index) { return data_[offset(index)]; }
  const T& at(std::initializer_list<std::size_t> index) const { return data_[offset(index)]; }

  // Returns the same buffer under a new shape with equal element count.
  Tensor reshaped(Shape shape) const& { return Tensor(std::move(shape), data_); }
  Tensor reshaped(Shape shape) && { return Tensor(std::move(shape), std::move(data_)); }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.size());
    std::transform(data_.begin(), data_.end(), out.begin(), [](T v) { return static_cast<U>(v); });
    return Tensor<U>(shape_, std::move(out));
  }

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

// Spatial volume of a rank-5 tensor (D*H*W).
template <typename T>
std::size_t spatial_size(const Tensor<T>& t) {
  return t.extent(2) * t.extent(3) * t.extent(4);
}

}  // namespace ddunet
