#include "ddunet/engine/tensor_ops.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace ddunet {
namespace {

using Index5 = std::array<std::size_t, kMaxRank>;

// Left-pads a shape to five axes with unit extents.
Index5 pad5(const Shape& s) {
  Index5 out{1, 1, 1, 1, 1};
  std::copy(s.begin(), s.end(), out.begin() + static_cast<std::ptrdiff_t>(kMaxRank - s.size()));
  return out;
}

// Strides for reading `src` at output coordinates; broadcast axes get 0.
Index5 broadcast_strides(const Shape& src, const Shape& out) {
  const Index5 s = pad5(src);
  const Index5 o = pad5(out);
  Index5 strides{};
  std::size_t acc = 1;
  for (std::size_t i = kMaxRank; i-- > 0;) {
    strides[i] = (s[i] == o[i]) ? acc : 0;
    acc *= s[i];
  }
  return strides;
}

template <typename T, typename F>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, F f) {
  const Shape out_shape = broadcast_shape(a.shape(), b.shape());
  Tensor<T> out(out_shape);
  auto o = out.data();
  auto pa = a.data();
  auto pb = b.data();
  if (a.shape() == b.shape()) {
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = f(pa[i], pb[i]);
    return out;
  }
  const Index5 e = pad5(out_shape);
  const Index5 sa = broadcast_strides(a.shape(), out_shape);
  const Index5 sb = broadcast_strides(b.shape(), out_shape);
  std::size_t k = 0;
  for (std::size_t i0 = 0; i0 < e[0]; ++i0)
    for (std::size_t i1 = 0; i1 < e[1]; ++i1)
      for (std::size_t i2 = 0; i2 < e[2]; ++i2)
        for (std::size_t i3 = 0; i3 < e[3]; ++i3) {
          const std::size_t base_a = i0 * sa[0] + i1 * sa[1] + i2 * sa[2] + i3 * sa[3];
          const std::size_t base_b = i0 * sb[0] + i1 * sb[1] + i2 * sb[2] + i3 * sb[3];
          for (std::size_t i4 = 0; i4 < e[4]; ++i4) {
            o[k++] = f(pa[base_a + i4 * sa[4]], pb[base_b + i4 * sb[4]]);
          }
        }
  return out;
}

void check_axis(std::size_t axis, std::size_t rank, const char* op) {
  if (axis >= rank) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for rank " +
                     std::to_string(rank));
  }
}

}  // namespace

Shape broadcast_shape(const Shape& a, const Shape& b) {
  if (a.size() != b.size()) {
    throw ShapeError("incompatible shapes " + shape_to_string(a) + " and " + shape_to_string(b));
  }
  Shape out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == b[i] || b[i] == 1) {
      out[i] = a[i];
    } else if (a[i] == 1) {
      out[i] = b[i];
    } else {
      throw ShapeError("incompatible shapes " + shape_to_string(a) + " and " + shape_to_string(b));
    }
  }
  return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, [](T x, T y) { return x + y; });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, [](T x, T y) { return x - y; });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, [](T x, T y) { return x * y; });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T k) {
  Tensor<T> out(a.shape());
  auto o = out.data();
  auto p = a.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = p[i] * k;
  return out;
}

template <typename T>
Tensor<T> map(const Tensor<T>& a, const std::function<T(T)>& f) {
  Tensor<T> out(a.shape());
  std::transform(a.data().begin(), a.data().end(), out.data().begin(), f);
  return out;
}

template <typename T>
void add_inplace(Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add_inplace: shape " + shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
  }
  auto pa = a.data();
  auto pb = b.data();
  for (std::size_t i = 0; i < pa.size(); ++i) pa[i] += pb[i];
}

template <typename T>
Tensor<T> sum_to_shape(const Tensor<T>& grad, const Shape& target) {
  if (grad.shape() == target) return grad;
  std::vector<std::size_t> axes;
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i] == 1 && grad.extent(i) != 1) axes.push_back(i);
  }
  return reduce(grad, ReduceOp::kSum, axes, true);
}

template <typename T>
Tensor<T> reduce(const Tensor<T>& x, ReduceOp op, std::vector<std::size_t> axes, bool keep_dims) {
  const std::size_t rank = x.rank();
  if (axes.empty()) {
    axes.resize(rank);
    std::iota(axes.begin(), axes.end(), 0);
  }
  std::vector<bool> reduced(rank, false);
  for (std::size_t a : axes) {
    check_axis(a, rank, "reduce");
    reduced[a] = true;
  }
  Shape kept(rank);
  std::size_t count = 1;
  for (std::size_t i = 0; i < rank; ++i) {
    kept[i] = reduced[i] ? 1 : x.extent(i);
    if (reduced[i]) count *= x.extent(i);
  }
  Tensor<T> out(kept, op == ReduceOp::kMax ? -std::numeric_limits<T>::infinity() : T(0));
  const Index5 e = pad5(x.shape());
  const Index5 so = broadcast_strides(kept, x.shape());
  auto o = out.data();
  auto p = x.data();
  std::size_t k = 0;
  for (std::size_t i0 = 0; i0 < e[0]; ++i0)
    for (std::size_t i1 = 0; i1 < e[1]; ++i1)
      for (std::size_t i2 = 0; i2 < e[2]; ++i2)
        for (std::size_t i3 = 0; i3 < e[3]; ++i3)
          for (std::size_t i4 = 0; i4 < e[4]; ++i4) {
            const std::size_t j = i0 * so[0] + i1 * so[1] + i2 * so[2] + i3 * so[3] + i4 * so[4];
            if (op == ReduceOp::kMax) {
              o[j] = std::max(o[j], p[k]);
            } else {
              o[j] += p[k];
            }
            ++k;
          }
  if (op == ReduceOp::kMean) {
    for (T& v : o) v /= static_cast<T>(count);
  }
  if (keep_dims) return out;
  Shape squeezed;
  for (std::size_t i = 0; i < rank; ++i) {
    if (!reduced[i]) squeezed.push_back(x.extent(i));
  }
  if (squeezed.empty()) squeezed.push_back(1);
  return std::move(out).reshaped(std::move(squeezed));
}

template <typename T>
Tensor<T> concat(std::size_t axis, std::span<const Tensor<T>> parts) {
  if (parts.empty()) throw ShapeError("concat: no parts");
  const Shape& first = parts[0].shape();
  check_axis(axis, first.size(), "concat");
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const Tensor<T>& p : parts) {
    bool ok = p.rank() == first.size();
    for (std::size_t i = 0; ok && i < first.size(); ++i) {
      if (i != axis && p.extent(i) != first[i]) ok = false;
    }
    if (!ok) {
      throw ShapeError("concat: mismatched extents " + shape_to_string(p.shape()) + " vs " +
                       shape_to_string(first));
    }
    out_shape[axis] += p.extent(axis);
  }
  // outer = product of extents before axis, inner = after axis.
  std::size_t outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];
  Tensor<T> out(out_shape);
  auto o = out.data();
  std::size_t w = 0;
  for (std::size_t b = 0; b < outer; ++b) {
    for (const Tensor<T>& p : parts) {
      const std::size_t chunk = p.extent(axis) * inner;
      std::copy_n(p.data().begin() + static_cast<std::ptrdiff_t>(b * chunk), chunk,
                  o.begin() + static_cast<std::ptrdiff_t>(w));
      w += chunk;
    }
  }
  return out;
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t start, std::size_t length) {
  check_axis(axis, x.rank(), "slice");
  std::vector<std::size_t> starts(x.rank(), 0);
  Shape extents = x.shape();
  starts[axis] = start;
  extents[axis] = length;
  return crop(x, starts, extents);
}

template <typename T>
Tensor<T> crop(const Tensor<T>& x, const std::vector<std::size_t>& starts, const Shape& extents) {
  const std::size_t rank = x.rank();
  if (starts.size() != rank || extents.size() != rank) throw ShapeError("crop: window rank mismatch");
  for (std::size_t i = 0; i < rank; ++i) {
    if (extents[i] == 0 || starts[i] + extents[i] > x.extent(i)) {
      throw ShapeError("crop: window [" + std::to_string(starts[i]) + ", +" + std::to_string(extents[i]) +
                       ") exceeds extent " + std::to_string(x.extent(i)) + " on axis " + std::to_string(i));
    }
  }
  Tensor<T> out(extents);
  const Index5 e = pad5(extents);
  const Index5 st = pad5(row_major_strides(x.shape()));
  Index5 s0{};
  std::copy(starts.begin(), starts.end(), s0.begin() + static_cast<std::ptrdiff_t>(kMaxRank - rank));
  auto o = out.data();
  auto p = x.data();
  std::size_t k = 0;
  for (std::size_t i0 = 0; i0 < e[0]; ++i0)
    for (std::size_t i1 = 0; i1 < e[1]; ++i1)
      for (std::size_t i2 = 0; i2 < e[2]; ++i2)
        for (std::size_t i3 = 0; i3 < e[3]; ++i3) {
          const std::size_t base = (s0[0] + i0) * st[0] + (s0[1] + i1) * st[1] + (s0[2] + i2) * st[2] +
                                   (s0[3] + i3) * st[3] + s0[4];
          std::copy_n(p.begin() + static_cast<std::ptrdiff_t>(base), e[4], o.begin() + static_cast<std::ptrdiff_t>(k));
          k += e[4];
        }
  return out;
}

template <typename T>
Tensor<T> pad(const Tensor<T>& x, const std::vector<std::size_t>& before, const std::vector<std::size_t>& after,
              T value) {
  const std::size_t rank = x.rank();
  if (before.size() != rank || after.size() != rank) throw ShapeError("pad: width rank mismatch");
  Shape out_shape(rank);
  for (std::size_t i = 0; i < rank; ++i) out_shape[i] = x.extent(i) + before[i] + after[i];
  Tensor<T> out(out_shape, value);
  const Index5 e = pad5(x.shape());
  const Index5 so = pad5(row_major_strides(out_shape));
  Index5 b0{};
  std::copy(before.begin(), before.end(), b0.begin() + static_cast<std::ptrdiff_t>(kMaxRank - rank));
  auto o = out.data();
  auto p = x.data();
  std::size_t k = 0;
  for (std::size_t i0 = 0; i0 < e[0]; ++i0)
    for (std::size_t i1 = 0; i1 < e[1]; ++i1)
      for (std::size_t i2 = 0; i2 < e[2]; ++i2)
        for (std::size_t i3 = 0; i3 < e[3]; ++i3) {
          const std::size_t base = (b0[0] + i0) * so[0] + (b0[1] + i1) * so[1] + (b0[2] + i2) * so[2] +
                                   (b0[3] + i3) * so[3] + b0[4];
          std::copy_n(p.begin() + static_cast<std::ptrdiff_t>(k), e[4], o.begin() + static_cast<std::ptrdiff_t>(base));
          k += e[4];
        }
  return out;
}

std::vector<std::size_t> centered_starts(const Shape& dims, const Shape& target) {
  if (dims.size() != target.size()) throw ShapeError("centered_starts: rank mismatch");
  std::vector<std::size_t> starts(dims.size());
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (target[i] > dims[i]) {
      throw ShapeError("crop target " + shape_to_string(target) + " exceeds extents " + shape_to_string(dims));
    }
    starts[i] = (dims[i] - target[i]) / 2;
  }
  return starts;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) throw ShapeError("max_abs_diff: shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  }
  return m;
}

template <typename T>
double dot(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) throw ShapeError("dot: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return s;
}

#define DDUNET_INSTANTIATE(T)                                                                              \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                              \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                              \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                              \
  template Tensor<T> scale(const Tensor<T>&, T);                                                           \
  template Tensor<T> map(const Tensor<T>&, const std::function<T(T)>&);                                    \
  template void add_inplace(Tensor<T>&, const Tensor<T>&);                                                 \
  template Tensor<T> sum_to_shape(const Tensor<T>&, const Shape&);                                         \
  template Tensor<T> reduce(const Tensor<T>&, ReduceOp, std::vector<std::size_t>, bool);                   \
  template Tensor<T> concat(std::size_t, std::span<const Tensor<T>>);                                      \
  template Tensor<T> slice(const Tensor<T>&, std::size_t, std::size_t, std::size_t);                       \
  template Tensor<T> crop(const Tensor<T>&, const std::vector<std::size_t>&, const Shape&);                \
  template Tensor<T> pad(const Tensor<T>&, const std::vector<std::size_t>&, const std::vector<std::size_t>&, \
                         T);                                                                               \
  template double max_abs_diff(const Tensor<T>&, const Tensor<T>&);                                        \
  template double dot(const Tensor<T>&, const Tensor<T>&);

DDUNET_INSTANTIATE(float)
DDUNET_INSTANTIATE(double)

#undef DDUNET_INSTANTIATE

}  // namespace ddunet
