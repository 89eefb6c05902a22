#include "ddunet/engine/ops.hpp"

#include <cmath>

namespace ddunet::ops {

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  return make_result<T>("add", {&a, &b}, ddunet::add(a.value(), b.value()), [sa = a.shape(), sb = b.shape()] {
    return BackwardFn<T>([sa, sb](const Tensor<T>& g) {
      return std::vector<Tensor<T>>{sum_to_shape(g, sa), sum_to_shape(g, sb)};
    });
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  return make_result<T>("sub", {&a, &b}, ddunet::sub(a.value(), b.value()), [sa = a.shape(), sb = b.shape()] {
    return BackwardFn<T>([sa, sb](const Tensor<T>& g) {
      return std::vector<Tensor<T>>{sum_to_shape(g, sa), sum_to_shape(ddunet::scale(g, T(-1)), sb)};
    });
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  return make_result<T>("mul", {&a, &b}, ddunet::mul(a.value(), b.value()), [&a, &b] {
    return BackwardFn<T>([va = a.shared_value(), vb = b.shared_value()](const Tensor<T>& g) {
      return std::vector<Tensor<T>>{sum_to_shape(ddunet::mul(g, *vb), va->shape()),
                                    sum_to_shape(ddunet::mul(g, *va), vb->shape())};
    });
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T k) {
  return make_result<T>("scale", {&a}, ddunet::scale(a.value(), k), [k] {
    return BackwardFn<T>([k](const Tensor<T>& g) { return std::vector<Tensor<T>>{ddunet::scale(g, k)}; });
  });
}

template <typename T>
Var<T> map(const Var<T>& a, std::function<T(T)> f, std::function<T(T)> df, std::string name) {
  return make_result<T>(std::move(name), {&a}, ddunet::map(a.value(), f), [&a, df = std::move(df)] {
    return BackwardFn<T>([va = a.shared_value(), df](const Tensor<T>& g) {
      Tensor<T> out(g.shape());
      for (std::size_t i = 0; i < out.numel(); ++i) out[i] = g[i] * df((*va)[i]);
      return std::vector<Tensor<T>>{std::move(out)};
    });
  });
}

template <typename T>
Var<T> square(const Var<T>& a) {
  return map<T>(a, [](T v) { return v * v; }, [](T v) { return T(2) * v; }, "square");
}

template <typename T>
Var<T> reduce(const Var<T>& x, ReduceOp op, std::vector<std::size_t> axes, bool keep_dims) {
  Tensor<T> kept = ddunet::reduce(x.value(), op, axes, true);
  Tensor<T> value = keep_dims ? kept : ddunet::reduce(x.value(), op, axes, false);
  const char* name = op == ReduceOp::kSum ? "sum" : op == ReduceOp::kMean ? "mean" : "max";
  return make_result<T>(name, {&x}, std::move(value), [&x, op, kept = std::move(kept)] {
    return BackwardFn<T>([vx = x.shared_value(), op, kept](const Tensor<T>& g) {
      const Tensor<T> gk = g.reshaped(kept.shape());
      const Tensor<T> ones = Tensor<T>::full(vx->shape(), T(1));
      Tensor<T> spread = ddunet::mul(ones, gk);  // broadcast back to x's shape
      if (op == ReduceOp::kMean) {
        const T count = static_cast<T>(vx->numel() / kept.numel());
        for (T& v : spread.data()) v /= count;
      } else if (op == ReduceOp::kMax) {
        // Route to the first maximal element of each reduced group.
        const Tensor<T> maxes = ddunet::mul(ones, kept);
        Tensor<T> group_id(kept.shape());
        for (std::size_t i = 0; i < group_id.numel(); ++i) group_id[i] = static_cast<T>(i);
        const Tensor<T> gid = ddunet::mul(ones, group_id);
        std::vector<bool> taken(kept.numel(), false);
        for (std::size_t i = 0; i < spread.numel(); ++i) {
          const auto grp = static_cast<std::size_t>(gid[i]);
          if ((*vx)[i] == maxes[i] && !taken[grp]) {
            taken[grp] = true;
          } else {
            spread[i] = T(0);
          }
        }
      }
      return std::vector<Tensor<T>>{std::move(spread)};
    });
  });
}

template <typename T>
Var<T> concat(std::size_t axis, const std::vector<Var<T>>& parts) {
  std::vector<Tensor<T>> values;
  values.reserve(parts.size());
  std::vector<std::size_t> extents;
  for (const Var<T>& p : parts) {
    values.push_back(p.value());
    extents.push_back(p.extent(axis));
  }
  return make_result<T>("concat", parts, ddunet::concat<T>(axis, values), [axis, extents] {
    return BackwardFn<T>([axis, extents](const Tensor<T>& g) {
      std::vector<Tensor<T>> out;
      std::size_t start = 0;
      for (std::size_t e : extents) {
        out.push_back(ddunet::slice(g, axis, start, e));
        start += e;
      }
      return out;
    });
  });
}

template <typename T>
Var<T> slice(const Var<T>& x, std::size_t axis, std::size_t start, std::size_t length) {
  std::vector<std::size_t> starts(x.rank(), 0);
  Shape extents = x.shape();
  starts.at(axis) = start;
  extents[axis] = length;
  return crop(x, starts, extents);
}

template <typename T>
Var<T> crop(const Var<T>& x, const std::vector<std::size_t>& starts, const Shape& extents) {
  return make_result<T>("crop", {&x}, ddunet::crop(x.value(), starts, extents), [&x, starts, extents] {
    std::vector<std::size_t> after(extents.size());
    for (std::size_t i = 0; i < extents.size(); ++i) after[i] = x.extent(i) - starts[i] - extents[i];
    return BackwardFn<T>([starts, after](const Tensor<T>& g) {
      return std::vector<Tensor<T>>{ddunet::pad(g, starts, after, T(0))};
    });
  });
}

template <typename T>
Var<T> pad(const Var<T>& x, const std::vector<std::size_t>& before, const std::vector<std::size_t>& after,
           T value) {
  return make_result<T>("pad", {&x}, ddunet::pad(x.value(), before, after, value), [&x, before] {
    return BackwardFn<T>([before, shape = x.shape()](const Tensor<T>& g) {
      return std::vector<Tensor<T>>{ddunet::crop(g, before, shape)};
    });
  });
}

#define DDUNET_INSTANTIATE(T)                                                                                  \
  template Var<T> add(const Var<T>&, const Var<T>&);                                                           \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                                           \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                                           \
  template Var<T> scale(const Var<T>&, T);                                                                     \
  template Var<T> map(const Var<T>&, std::function<T(T)>, std::function<T(T)>, std::string);                   \
  template Var<T> square(const Var<T>&);                                                                       \
  template Var<T> reduce(const Var<T>&, ReduceOp, std::vector<std::size_t>, bool);                             \
  template Var<T> concat(std::size_t, const std::vector<Var<T>>&);                                             \
  template Var<T> slice(const Var<T>&, std::size_t, std::size_t, std::size_t);                                 \
  template Var<T> crop(const Var<T>&, const std::vector<std::size_t>&, const Shape&);                          \
  template Var<T> pad(const Var<T>&, const std::vector<std::size_t>&, const std::vector<std::size_t>&, T);

DDUNET_INSTANTIATE(float)
DDUNET_INSTANTIATE(double)

#undef DDUNET_INSTANTIATE

}  // namespace ddunet::ops
