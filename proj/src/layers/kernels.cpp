#include "ddunet/layers/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ddunet::kernels {
namespace {

struct Range {
  std::size_t lo;
  std::size_t hi;  // exclusive
};

// Output positions o whose tap o*stride + k - pad lands inside [0, in).
Range valid_outputs(std::size_t in, std::size_t out, std::size_t k, const ConvGeometry& g) {
  const std::size_t s = g.stride;
  const std::size_t p = g.padding;
  const std::size_t lo = p > k ? (p - k + s - 1) / s : 0;
  if (in - 1 + p < k) return {0, 0};
  const std::size_t hi = std::min(out, (in - 1 + p - k) / s + 1);
  return {lo, std::max(lo, hi)};
}

void require_rank5(const Shape& s, const char* op) {
  if (s.size() != 5) throw ShapeError(std::string(op) + ": expected (N,C,D,H,W), got " + shape_to_string(s));
}

struct ConvDims {
  std::size_t n, ci, co, k;
  std::size_t id, ih, iw;
  std::size_t od, oh, ow;
};

ConvDims conv_dims(const Shape& x, const Shape& w, const ConvGeometry& g, const char* op) {
  require_rank5(x, op);
  if (w.size() != 5 || w[2] != w[3] || w[2] != w[4]) {
    throw ShapeError(std::string(op) + ": weight must be (C_out, C_in, k, k, k), got " + shape_to_string(w));
  }
  if (w[1] != x[1]) {
    throw ShapeError(std::string(op) + ": channel mismatch, input has " + std::to_string(x[1]) +
                     " channels but weight expects " + std::to_string(w[1]));
  }
  if (g.stride == 0) throw ShapeError(std::string(op) + ": stride must be >= 1");
  ConvDims d{x[0], x[1], w[0], w[2], x[2], x[3], x[4], 0, 0, 0};
  d.od = conv_out_extent(d.id, d.k, g);
  d.oh = conv_out_extent(d.ih, d.k, g);
  d.ow = conv_out_extent(d.iw, d.k, g);
  return d;
}

}  // namespace

std::size_t conv_out_extent(std::size_t in, std::size_t k, const ConvGeometry& g) {
  if (in + 2 * g.padding < k) {
    throw ShapeError("conv3d: window underflow, extent " + std::to_string(in) + " with padding " +
                     std::to_string(g.padding) + " is smaller than kernel " + std::to_string(k));
  }
  return (in + 2 * g.padding - k) / g.stride + 1;
}

template <typename T>
Tensor<T> conv3d_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, ConvGeometry g) {
  const ConvDims d = conv_dims(x.shape(), weight.shape(), g, "conv3d");
  if (!bias.empty() && (bias.rank() != 1 || bias.extent(0) != d.co)) {
    throw ShapeError("conv3d: bias must have shape (" + std::to_string(d.co) + ")");
  }
  Tensor<T> y({d.n, d.co, d.od, d.oh, d.ow});
  const std::size_t in_vol = d.id * d.ih * d.iw;
  const std::size_t out_vol = d.od * d.oh * d.ow;
  const std::size_t k3 = d.k * d.k * d.k;
  const T* px = x.data().data();
  const T* pw = weight.data().data();
  T* py = y.data().data();
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t co = 0; co < d.co; ++co) {
      T* out = py + (n * d.co + co) * out_vol;
      std::fill_n(out, out_vol, bias.empty() ? T(0) : bias[co]);
      for (std::size_t ci = 0; ci < d.ci; ++ci) {
        const T* in = px + (n * d.ci + ci) * in_vol;
        const T* wk = pw + (co * d.ci + ci) * k3;
        for (std::size_t kd = 0; kd < d.k; ++kd) {
          const Range rd = valid_outputs(d.id, d.od, kd, g);
          for (std::size_t kh = 0; kh < d.k; ++kh) {
            const Range rh = valid_outputs(d.ih, d.oh, kh, g);
            for (std::size_t kw = 0; kw < d.k; ++kw) {
              const Range rw = valid_outputs(d.iw, d.ow, kw, g);
              const T wv = wk[(kd * d.k + kh) * d.k + kw];
              for (std::size_t od = rd.lo; od < rd.hi; ++od) {
                const std::size_t zi = od * g.stride + kd - g.padding;
                for (std::size_t oh = rh.lo; oh < rh.hi; ++oh) {
                  const std::size_t yi = oh * g.stride + kh - g.padding;
                  T* dst = out + (od * d.oh + oh) * d.ow + rw.lo;
                  const T* src = in + (zi * d.ih + yi) * d.iw + (rw.lo * g.stride + kw - g.padding);
                  const std::size_t len = rw.hi - rw.lo;
                  if (g.stride == 1) {
                    for (std::size_t j = 0; j < len; ++j) dst[j] += wv * src[j];
                  } else {
                    for (std::size_t j = 0; j < len; ++j) dst[j] += wv * src[j * g.stride];
                  }
                }
              }
            }
          }
        }
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> conv3d_backward_input(const Tensor<T>& grad_out, const Tensor<T>& weight, const Shape& x_shape,
                                ConvGeometry g) {
  const ConvDims d = conv_dims(x_shape, weight.shape(), g, "conv3d_backward_input");
  if (grad_out.shape() != Shape{d.n, d.co, d.od, d.oh, d.ow}) {
    throw ShapeError("conv3d_backward_input: gradient shape " + shape_to_string(grad_out.shape()) +
                     " does not match output geometry");
  }
  Tensor<T> gx(x_shape);
  const std::size_t in_vol = d.id * d.ih * d.iw;
  const std::size_t out_vol = d.od * d.oh * d.ow;
  const std::size_t k3 = d.k * d.k * d.k;
  const T* pg = grad_out.data().data();
  const T* pw = weight.data().data();
  T* px = gx.data().data();
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t ci = 0; ci < d.ci; ++ci) {
      T* in = px + (n * d.ci + ci) * in_vol;
      for (std::size_t co = 0; co < d.co; ++co) {
        const T* out = pg + (n * d.co + co) * out_vol;
        const T* wk = pw + (co * d.ci + ci) * k3;
        for (std::size_t kd = 0; kd < d.k; ++kd) {
          const Range rd = valid_outputs(d.id, d.od, kd, g);
          for (std::size_t kh = 0; kh < d.k; ++kh) {
            const Range rh = valid_outputs(d.ih, d.oh, kh, g);
            for (std::size_t kw = 0; kw < d.k; ++kw) {
              const Range rw = valid_outputs(d.iw, d.ow, kw, g);
              const T wv = wk[(kd * d.k + kh) * d.k + kw];
              for (std::size_t od = rd.lo; od < rd.hi; ++od) {
                const std::size_t zi = od * g.stride + kd - g.padding;
                for (std::size_t oh = rh.lo; oh < rh.hi; ++oh) {
                  const std::size_t yi = oh * g.stride + kh - g.padding;
                  const T* src = out + (od * d.oh + oh) * d.ow + rw.lo;
                  T* dst = in + (zi * d.ih + yi) * d.iw + (rw.lo * g.stride + kw - g.padding);
                  const std::size_t len = rw.hi - rw.lo;
                  if (g.stride == 1) {
                    for (std::size_t j = 0; j < len; ++j) dst[j] += wv * src[j];
                  } else {
                    for (std::size_t j = 0; j < len; ++j) dst[j * g.stride] += wv * src[j];
                  }
                }
              }
            }
          }
        }
      }
    }
  }
  return gx;
}

template <typename T>
Tensor<T> conv3d_backward_weight(const Tensor<T>& x, const Tensor<T>& grad_out, const Shape& weight_shape,
                                 ConvGeometry g) {
  const ConvDims d = conv_dims(x.shape(), weight_shape, g, "conv3d_backward_weight");
  if (grad_out.shape() != Shape{d.n, d.co, d.od, d.oh, d.ow}) {
    throw ShapeError("conv3d_backward_weight: gradient shape " + shape_to_string(grad_out.shape()) +
                     " does not match output geometry");
  }
  Tensor<T> gw(weight_shape);
  const std::size_t in_vol = d.id * d.ih * d.iw;
  const std::size_t out_vol = d.od * d.oh * d.ow;
  const std::size_t k3 = d.k * d.k * d.k;
  const T* pg = grad_out.data().data();
  const T* px = x.data().data();
  T* pw = gw.data().data();
  for (std::size_t co = 0; co < d.co; ++co) {
    for (std::size_t ci = 0; ci < d.ci; ++ci) {
      T* wk = pw + (co * d.ci + ci) * k3;
      for (std::size_t kd = 0; kd < d.k; ++kd) {
        const Range rd = valid_outputs(d.id, d.od, kd, g);
        for (std::size_t kh = 0; kh < d.k; ++kh) {
          const Range rh = valid_outputs(d.ih, d.oh, kh, g);
          for (std::size_t kw = 0; kw < d.k; ++kw) {
            const Range rw = valid_outputs(d.iw, d.ow, kw, g);
            T acc = 0;
            for (std::size_t n = 0; n < d.n; ++n) {
              const T* out = pg + (n * d.co + co) * out_vol;
              const T* in = px + (n * d.ci + ci) * in_vol;
              for (std::size_t od = rd.lo; od < rd.hi; ++od) {
                const std::size_t zi = od * g.stride + kd - g.padding;
                for (std::size_t oh = rh.lo; oh < rh.hi; ++oh) {
                  const std::size_t yi = oh * g.stride + kh - g.padding;
                  const T* orow = out + (od * d.oh + oh) * d.ow + rw.lo;
                  const T* irow = in + (zi * d.ih + yi) * d.iw + (rw.lo * g.stride + kw - g.padding);
                  const std::size_t len = rw.hi - rw.lo;
                  // Four partial sums keep the reduction order fixed while
                  // letting the compiler overlap the multiplies.
                  T s0 = 0, s1 = 0, s2 = 0, s3 = 0;
                  std::size_t j = 0;
                  if (g.stride == 1) {
                    for (; j + 4 <= len; j += 4) {
                      s0 += orow[j] * irow[j];
                      s1 += orow[j + 1] * irow[j + 1];
                      s2 += orow[j + 2] * irow[j + 2];
                      s3 += orow[j + 3] * irow[j + 3];
                    }
                  }
                  for (; j < len; ++j) s0 += orow[j] * irow[j * g.stride];
                  acc += (s0 + s1) + (s2 + s3);
                }
              }
            }
            wk[(kd * d.k + kh) * d.k + kw] = acc;
          }
        }
      }
    }
  }
  return gw;
}

template <typename T>
Tensor<T> channel_sum(const Tensor<T>& t) {
  require_rank5(t.shape(), "channel_sum");
  const std::size_t c = t.extent(1);
  const std::size_t vol = spatial_size(t);
  Tensor<T> out({c});
  for (std::size_t n = 0; n < t.extent(0); ++n) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T* p = t.data().data() + (n * c + ch) * vol;
      T acc = 0;
      for (std::size_t i = 0; i < vol; ++i) acc += p[i];
      out[ch] += acc;
    }
  }
  return out;
}

template <typename T>
PoolResult<T> maxpool3d_forward(const Tensor<T>& x) {
  require_rank5(x.shape(), "maxpool3d");
  const std::size_t D = x.extent(2), H = x.extent(3), W = x.extent(4);
  if (D % 2 || H % 2 || W % 2) {
    throw ShapeError("maxpool3d: spatial extents must be even, got " + shape_to_string(x.shape()));
  }
  const std::size_t nc = x.extent(0) * x.extent(1);
  const std::size_t od = D / 2, oh = H / 2, ow = W / 2;
  PoolResult<T> r{Tensor<T>({x.extent(0), x.extent(1), od, oh, ow}), {}};
  r.argmax.resize(r.output.numel());
  std::size_t o = 0;
  for (std::size_t p = 0; p < nc; ++p) {
    const std::size_t base = p * D * H * W;
    for (std::size_t z = 0; z < od; ++z)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t w = 0; w < ow; ++w) {
          std::size_t best = base + ((2 * z) * H + 2 * y) * W + 2 * w;
          T best_v = x[best];
          // Window visited in increasing offset order; strict > keeps the first maximum.
          for (std::size_t dz = 0; dz < 2; ++dz)
            for (std::size_t dy = 0; dy < 2; ++dy)
              for (std::size_t dx = 0; dx < 2; ++dx) {
                const std::size_t off = base + ((2 * z + dz) * H + 2 * y + dy) * W + 2 * w + dx;
                if (x[off] > best_v) {
                  best_v = x[off];
                  best = off;
                }
              }
          r.output[o] = best_v;
          r.argmax[o] = best;
          ++o;
        }
  }
  return r;
}

template <typename T>
Tensor<T> maxpool3d_backward(const Tensor<T>& grad_out, const std::vector<std::size_t>& argmax, const Shape& x_shape) {
  Tensor<T> gx(x_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) gx[argmax[i]] += grad_out[i];
  return gx;
}

template <typename T>
Tensor<T> group_norm_forward(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                             std::size_t groups, double eps, GroupNormCache<T>* cache) {
  require_rank5(x.shape(), "group_norm");
  const std::size_t N = x.extent(0), C = x.extent(1);
  if (groups == 0 || C % groups != 0) {
    throw ShapeError("group_norm: " + std::to_string(groups) + " groups do not divide " + std::to_string(C) +
                     " channels");
  }
  if (gamma.numel() != C || beta.numel() != C) throw ShapeError("group_norm: gamma/beta must have C elements");
  if (!(eps > 0.0)) throw ShapeError("group_norm: eps must be positive");
  const std::size_t vol = spatial_size(x);
  const std::size_t cpg = C / groups;
  const std::size_t count = cpg * vol;
  Tensor<T> y(x.shape());
  Tensor<T> xhat(x.shape());
  std::vector<double> inv_std(N * groups);
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t gi = 0; gi < groups; ++gi) {
      const std::size_t start = (n * C + gi * cpg) * vol;
      const T* px = x.data().data() + start;
      double mean = 0.0;
      for (std::size_t i = 0; i < count; ++i) mean += px[i];
      mean /= static_cast<double>(count);
      double var = 0.0;
      for (std::size_t i = 0; i < count; ++i) {
        const double dv = px[i] - mean;
        var += dv * dv;
      }
      var /= static_cast<double>(count);
      const double istd = 1.0 / std::sqrt(var + eps);
      inv_std[n * groups + gi] = istd;
      for (std::size_t c = 0; c < cpg; ++c) {
        const std::size_t ch = gi * cpg + c;
        const T gm = gamma[ch];
        const T bt = beta[ch];
        T* ph = xhat.data().data() + start + c * vol;
        T* py = y.data().data() + start + c * vol;
        const T* pc = px + c * vol;
        for (std::size_t i = 0; i < vol; ++i) {
          ph[i] = static_cast<T>((pc[i] - mean) * istd);
          py[i] = gm * ph[i] + bt;
        }
      }
    }
  }
  if (cache) {
    cache->normalized = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

template <typename T>
GroupNormGrads<T> group_norm_backward(const Tensor<T>& grad_out, const Tensor<T>& gamma, std::size_t groups,
                                      const GroupNormCache<T>& cache) {
  const Tensor<T>& xhat = cache.normalized;
  const std::size_t N = xhat.extent(0), C = xhat.extent(1);
  const std::size_t vol = spatial_size(xhat);
  const std::size_t cpg = C / groups;
  const std::size_t count = cpg * vol;
  GroupNormGrads<T> g{Tensor<T>(xhat.shape()), Tensor<T>({C}), Tensor<T>({C})};
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t gi = 0; gi < groups; ++gi) {
      const std::size_t start = (n * C + gi * cpg) * vol;
      double mean_g = 0.0;
      double mean_gx = 0.0;
      for (std::size_t c = 0; c < cpg; ++c) {
        const std::size_t ch = gi * cpg + c;
        const T* pg = grad_out.data().data() + start + c * vol;
        const T* ph = xhat.data().data() + start + c * vol;
        double sg = 0.0, sgx = 0.0;
        for (std::size_t i = 0; i < vol; ++i) {
          sg += pg[i];
          sgx += static_cast<double>(pg[i]) * ph[i];
        }
        g.beta[ch] += static_cast<T>(sg);
        g.gamma[ch] += static_cast<T>(sgx);
        mean_g += sg * gamma[ch];
        mean_gx += sgx * gamma[ch];
      }
      mean_g /= static_cast<double>(count);
      mean_gx /= static_cast<double>(count);
      const double istd = cache.inv_std[n * groups + gi];
      for (std::size_t c = 0; c < cpg; ++c) {
        const std::size_t ch = gi * cpg + c;
        const double gm = gamma[ch];
        const T* pg = grad_out.data().data() + start + c * vol;
        const T* ph = xhat.data().data() + start + c * vol;
        T* px = g.x.data().data() + start + c * vol;
        for (std::size_t i = 0; i < vol; ++i) {
          px[i] = static_cast<T>(istd * (gm * pg[i] - mean_g - ph[i] * mean_gx));
        }
      }
    }
  }
  return g;
}

template <typename T>
Tensor<T> softmax_channels(const Tensor<T>& logits) {
  require_rank5(logits.shape(), "softmax_channels");
  const std::size_t N = logits.extent(0), C = logits.extent(1);
  const std::size_t vol = spatial_size(logits);
  Tensor<T> p(logits.shape());
  for (std::size_t n = 0; n < N; ++n) {
    const T* in = logits.data().data() + n * C * vol;
    T* out = p.data().data() + n * C * vol;
    for (std::size_t v = 0; v < vol; ++v) {
      T mx = in[v];
      for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, in[c * vol + v]);
      T sum = 0;
      for (std::size_t c = 0; c < C; ++c) {
        out[c * vol + v] = std::exp(in[c * vol + v] - mx);
        sum += out[c * vol + v];
      }
      for (std::size_t c = 0; c < C; ++c) out[c * vol + v] /= sum;
    }
  }
  return p;
}

template <typename T>
Tensor<T> upsample_nearest2x(const Tensor<T>& x) {
  require_rank5(x.shape(), "upsample_nearest2x");
  const std::size_t nc = x.extent(0) * x.extent(1);
  const std::size_t D = x.extent(2), H = x.extent(3), W = x.extent(4);
  Tensor<T> y({x.extent(0), x.extent(1), 2 * D, 2 * H, 2 * W});
  std::size_t o = 0;
  for (std::size_t p = 0; p < nc; ++p)
    for (std::size_t z = 0; z < 2 * D; ++z)
      for (std::size_t yy = 0; yy < 2 * H; ++yy) {
        const T* row = x.data().data() + ((p * D + z / 2) * H + yy / 2) * W;
        for (std::size_t w = 0; w < 2 * W; ++w) y[o++] = row[w / 2];
      }
  return y;
}

template <typename T>
Tensor<T> downsample_sum2x(const Tensor<T>& x) {
  require_rank5(x.shape(), "downsample_sum2x");
  const std::size_t D = x.extent(2), H = x.extent(3), W = x.extent(4);
  if (D % 2 || H % 2 || W % 2) throw ShapeError("downsample_sum2x: spatial extents must be even");
  const std::size_t nc = x.extent(0) * x.extent(1);
  Tensor<T> y({x.extent(0), x.extent(1), D / 2, H / 2, W / 2});
  std::size_t i = 0;
  for (std::size_t p = 0; p < nc; ++p)
    for (std::size_t z = 0; z < D; ++z)
      for (std::size_t yy = 0; yy < H; ++yy)
        for (std::size_t w = 0; w < W; ++w) {
          y[((p * (D / 2) + z / 2) * (H / 2) + yy / 2) * (W / 2) + w / 2] += x[i++];
        }
  return y;
}

#define DDUNET_INSTANTIATE(T)                                                                                     \
  template Tensor<T> conv3d_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, ConvGeometry);          \
  template Tensor<T> conv3d_backward_input(const Tensor<T>&, const Tensor<T>&, const Shape&, ConvGeometry);       \
  template Tensor<T> conv3d_backward_weight(const Tensor<T>&, const Tensor<T>&, const Shape&, ConvGeometry);      \
  template Tensor<T> channel_sum(const Tensor<T>&);                                                               \
  template PoolResult<T> maxpool3d_forward(const Tensor<T>&);                                                     \
  template Tensor<T> maxpool3d_backward(const Tensor<T>&, const std::vector<std::size_t>&, const Shape&);         \
  template Tensor<T> group_norm_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t, double, \
                                        GroupNormCache<T>*);                                                      \
  template GroupNormGrads<T> group_norm_backward(const Tensor<T>&, const Tensor<T>&, std::size_t,                 \
                                                 const GroupNormCache<T>&);                                       \
  template Tensor<T> softmax_channels(const Tensor<T>&);                                                          \
  template Tensor<T> upsample_nearest2x(const Tensor<T>&);                                                        \
  template Tensor<T> downsample_sum2x(const Tensor<T>&);

DDUNET_INSTANTIATE(float)
DDUNET_INSTANTIATE(double)

#undef DDUNET_INSTANTIATE

}  // namespace ddunet::kernels
