#include "ddunet/layers/layers.hpp"

#include <cmath>
#include <memory>
#include <string>

#include "ddunet/engine/rng.hpp"
#include "ddunet/engine/tensor_ops.hpp"

namespace ddunet::layers {
namespace {

template <typename T>
const Tensor<T>& bias_or_empty(const Var<T>& b) {
  static const Tensor<T> kEmpty;
  return b.defined() ? b.value() : kEmpty;
}

template <typename T>
void add_channel_bias(Tensor<T>& y, const Tensor<T>& bias) {
  const std::size_t c = y.extent(1);
  const std::size_t vol = spatial_size(y);
  for (std::size_t n = 0; n < y.extent(0); ++n)
    for (std::size_t ch = 0; ch < c; ++ch) {
      T* p = y.data().data() + (n * c + ch) * vol;
      for (std::size_t i = 0; i < vol; ++i) p[i] += bias[ch];
    }
}

}  // namespace

std::size_t default_groups(std::size_t channels) {
  if (channels % 8 == 0) return 8;
  return channels;
}

template <typename T>
Var<T> conv3d(const Var<T>& x, const ConvParams<T>& p) {
  const kernels::ConvGeometry g{p.stride, p.padding};
  Tensor<T> y = kernels::conv3d_forward(x.value(), p.weight.value(), bias_or_empty(p.bias), g);
  return make_result<T>("conv3d", {&x, &p.weight, &p.bias}, std::move(y), [&] {
    return BackwardFn<T>([vx = x.shared_value(), vw = p.weight.shared_value(), has_bias = p.bias.defined(),
                          g](const Tensor<T>& gy) {
      std::vector<Tensor<T>> out;
      out.push_back(kernels::conv3d_backward_input(gy, *vw, vx->shape(), g));
      out.push_back(kernels::conv3d_backward_weight(*vx, gy, vw->shape(), g));
      out.push_back(has_bias ? kernels::channel_sum(gy) : Tensor<T>());
      return out;
    });
  });
}

template <typename T>
Var<T> transposed_conv3d(const Var<T>& x, const ConvParams<T>& p) {
  const Shape& ws = p.weight.shape();
  if (ws.size() != 5 || ws[2] != 2 || ws[3] != 2 || ws[4] != 2 || p.stride != 2 || p.padding != 0) {
    throw ShapeError("transposed_conv3d: requires a 2x2x2 kernel with stride 2 and no padding");
  }
  if (x.rank() != 5) throw ShapeError("transposed_conv3d: expected (N,C,D,H,W), got " + shape_to_string(x.shape()));
  if (x.extent(1) != ws[0]) {
    throw ShapeError("transposed_conv3d: channel mismatch, input has " + std::to_string(x.extent(1)) +
                     " channels but weight expects " + std::to_string(ws[0]));
  }
  const kernels::ConvGeometry g{2, 0};
  const Shape y_shape{x.extent(0), ws[1], 2 * x.extent(2), 2 * x.extent(3), 2 * x.extent(4)};
  Tensor<T> y = kernels::conv3d_backward_input(x.value(), p.weight.value(), y_shape, g);
  if (p.bias.defined()) add_channel_bias(y, p.bias.value());
  return make_result<T>("transposed_conv3d", {&x, &p.weight, &p.bias}, std::move(y), [&] {
    return BackwardFn<T>([vx = x.shared_value(), vw = p.weight.shared_value(), has_bias = p.bias.defined(),
                          g](const Tensor<T>& gy) {
      std::vector<Tensor<T>> out;
      out.push_back(kernels::conv3d_forward(gy, *vw, Tensor<T>(), g));
      out.push_back(kernels::conv3d_backward_weight(gy, *vx, vw->shape(), g));
      out.push_back(has_bias ? kernels::channel_sum(gy) : Tensor<T>());
      return out;
    });
  });
}

template <typename T>
Var<T> maxpool3d(const Var<T>& x) {
  auto pooled = kernels::maxpool3d_forward(x.value());
  auto argmax = std::make_shared<const std::vector<std::size_t>>(std::move(pooled.argmax));
  return make_result<T>("maxpool3d", {&x}, std::move(pooled.output), [&] {
    return BackwardFn<T>([argmax, shape = x.shape()](const Tensor<T>& gy) {
      return std::vector<Tensor<T>>{kernels::maxpool3d_backward(gy, *argmax, shape)};
    });
  });
}

template <typename T>
Var<T> group_norm(const Var<T>& x, const GroupNormParams<T>& p) {
  const bool record = x.tracked() || p.gamma.tracked() || p.beta.tracked();
  auto cache = std::make_shared<kernels::GroupNormCache<T>>();
  Tensor<T> y = kernels::group_norm_forward(x.value(), p.gamma.value(), p.beta.value(), p.groups, p.eps,
                                            record ? cache.get() : nullptr);
  return make_result<T>("group_norm", {&x, &p.gamma, &p.beta}, std::move(y), [&] {
    return BackwardFn<T>([cache, vg = p.gamma.shared_value(), groups = p.groups](const Tensor<T>& gy) {
      auto g = kernels::group_norm_backward(gy, *vg, groups, *cache);
      return std::vector<Tensor<T>>{std::move(g.x), std::move(g.gamma), std::move(g.beta)};
    });
  });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] = x.value()[i] > T(0) ? x.value()[i] : T(0);
  return make_result<T>("relu", {&x}, std::move(y), [&] {
    return BackwardFn<T>([vx = x.shared_value()](const Tensor<T>& gy) {
      Tensor<T> gx(gy.shape());
      // The derivative at exactly zero is taken as zero.
      for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] = (*vx)[i] > T(0) ? gy[i] : T(0);
      return std::vector<Tensor<T>>{std::move(gx)};
    });
  });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  auto y = std::make_shared<Tensor<T>>(x.shape());
  for (std::size_t i = 0; i < y->numel(); ++i) (*y)[i] = T(1) / (T(1) + std::exp(-x.value()[i]));
  Tensor<T> value = *y;
  return make_result<T>("sigmoid", {&x}, std::move(value), [y = std::shared_ptr<const Tensor<T>>(y)] {
    return BackwardFn<T>([y](const Tensor<T>& gy) {
      Tensor<T> gx(gy.shape());
      for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] = gy[i] * (*y)[i] * (T(1) - (*y)[i]);
      return std::vector<Tensor<T>>{std::move(gx)};
    });
  });
}

template <typename T>
Var<T> softmax_channels(const Var<T>& x) {
  auto p = std::make_shared<const Tensor<T>>(kernels::softmax_channels(x.value()));
  return make_result<T>("softmax_channels", {&x}, Tensor<T>(*p), [p] {
    return BackwardFn<T>([p](const Tensor<T>& gy) {
      const std::size_t N = p->extent(0), C = p->extent(1);
      const std::size_t vol = spatial_size(*p);
      Tensor<T> gx(p->shape());
      for (std::size_t n = 0; n < N; ++n) {
        const T* pp = p->data().data() + n * C * vol;
        const T* pg = gy.data().data() + n * C * vol;
        T* px = gx.data().data() + n * C * vol;
        for (std::size_t v = 0; v < vol; ++v) {
          T dotp = 0;
          for (std::size_t c = 0; c < C; ++c) dotp += pg[c * vol + v] * pp[c * vol + v];
          for (std::size_t c = 0; c < C; ++c) px[c * vol + v] = pp[c * vol + v] * (pg[c * vol + v] - dotp);
        }
      }
      return std::vector<Tensor<T>>{std::move(gx)};
    });
  });
}

template <typename T>
Var<T> activation(Activation kind, const Var<T>& x) {
  switch (kind) {
    case Activation::kRelu:
      return relu(x);
    case Activation::kSigmoid:
      return sigmoid(x);
    case Activation::kSoftmaxChannels:
      return softmax_channels(x);
  }
  throw ShapeError("activation: unknown kind");
}

bool dropout_keeps(const DropoutKey& key, double rate, std::size_t n, std::size_t c) {
  const double u = Rng::hash_uniform(
      {key.seed, static_cast<std::uint64_t>(Stream::kDropout), key.step, key.layer, n, c});
  return u >= rate;
}

template <typename T>
Var<T> channel_dropout(const Var<T>& x, const DropoutSpec& spec, const DropoutKey& key) {
  if (!(spec.rate >= 0.0 && spec.rate < 1.0)) throw ShapeError("channel_dropout: rate must lie in [0, 1)");
  if (spec.mode == Mode::kEval || spec.rate == 0.0) return x;
  if (x.rank() != 5) throw ShapeError("channel_dropout: expected (N,C,D,H,W)");
  const std::size_t N = x.extent(0), C = x.extent(1);
  Tensor<T> factors({N, C, 1, 1, 1});
  const T keep_scale = static_cast<T>(1.0 / (1.0 - spec.rate));
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c) factors[n * C + c] = dropout_keeps(key, spec.rate, n, c) ? keep_scale : T(0);
  Tensor<T> y = ddunet::mul(x.value(), factors);
  return make_result<T>("channel_dropout", {&x}, std::move(y), [f = std::move(factors)] {
    return BackwardFn<T>([f](const Tensor<T>& gy) { return std::vector<Tensor<T>>{ddunet::mul(gy, f)}; });
  });
}

template <typename T>
Var<T> upsample_nearest2x(const Var<T>& x) {
  return make_result<T>("upsample_nearest2x", {&x}, kernels::upsample_nearest2x(x.value()), [] {
    return BackwardFn<T>([](const Tensor<T>& gy) {
      return std::vector<Tensor<T>>{kernels::downsample_sum2x(gy)};
    });
  });
}

#define DDUNET_INSTANTIATE(T)                                                              \
  template Var<T> conv3d(const Var<T>&, const ConvParams<T>&);                             \
  template Var<T> transposed_conv3d(const Var<T>&, const ConvParams<T>&);                  \
  template Var<T> maxpool3d(const Var<T>&);                                                \
  template Var<T> group_norm(const Var<T>&, const GroupNormParams<T>&);                    \
  template Var<T> relu(const Var<T>&);                                                     \
  template Var<T> sigmoid(const Var<T>&);                                                  \
  template Var<T> softmax_channels(const Var<T>&);                                         \
  template Var<T> activation(Activation, const Var<T>&);                                   \
  template Var<T> channel_dropout(const Var<T>&, const DropoutSpec&, const DropoutKey&);   \
  template Var<T> upsample_nearest2x(const Var<T>&);

DDUNET_INSTANTIATE(float)
DDUNET_INSTANTIATE(double)

#undef DDUNET_INSTANTIATE

}  // namespace ddunet::layers
