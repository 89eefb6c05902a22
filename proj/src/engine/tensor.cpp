#include "ddunet/engine/tensor.hpp"

#include <sstream>

#include "ddunet/engine/rng.hpp"

namespace ddunet {

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

std::size_t checked_numel(const Shape& shape) {
  if (shape.empty() || shape.size() > kMaxRank) {
    throw ShapeError("tensor rank must be in [1, 5], got " + std::to_string(shape.size()));
  }
  std::size_t n = 1;
  for (std::size_t e : shape) {
    if (e == 0) throw ShapeError("zero extent in shape " + shape_to_string(shape));
    n *= e;
  }
  return n;
}

Shape row_major_strides(const Shape& shape) {
  Shape strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) strides[i - 1] = strides[i] * shape[i];
  return strides;
}

template <typename T>
Tensor<T> Tensor<T>::normal(Shape shape, double mean, double std, Rng& rng) {
  Tensor out(std::move(shape));
  for (T& v : out.data_) v = static_cast<T>(mean + std * rng.normal());
  return out;
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace ddunet
