#include "ddunet/network/model.hpp"

#include <cmath>
#include <sstream>

#include "ddunet/attention/gate.hpp"
#include "ddunet/engine/ops.hpp"
#include "ddunet/engine/rng.hpp"

namespace ddunet::network {
namespace {

std::string down_prefix(std::size_t stage) { return "down/" + std::to_string(stage); }
std::string dec_prefix(std::size_t decoder, std::size_t level) {
  return std::string("dec") + decoder_letter(decoder) + "/" + std::to_string(level);
}
std::string gate_prefix(const ArchitectureConfig& c, std::size_t decoder, std::size_t level) {
  if (c.attention == AttentionMode::kShared) return "gate/" + std::to_string(level);
  return std::string("gate") + decoder_letter(decoder) + "/" + std::to_string(level);
}
std::string head_prefix(std::size_t decoder) { return std::string("head") + decoder_letter(decoder); }

// Walks a config once, collecting parameter shapes, fan-ins and layer specs.
struct Planner {
  std::map<std::string, Shape> shapes;
  std::map<std::string, std::size_t> fan_in;
  std::vector<LayerSpec> layers;

  void conv(const std::string& prefix, std::size_t cin, std::size_t cout, std::size_t k, std::size_t level,
            const std::string& kind = "conv3d") {
    shapes[prefix + "/w"] = {cout, cin, k, k, k};
    shapes[prefix + "/b"] = {cout};
    fan_in[prefix + "/w"] = cin * k * k * k;
    layers.push_back({prefix, kind, cin, cout, level, 0.0});
  }

  void transposed(const std::string& prefix, std::size_t cin, std::size_t cout, std::size_t level) {
    shapes[prefix + "/w"] = {cin, cout, 2, 2, 2};
    shapes[prefix + "/b"] = {cout};
    fan_in[prefix + "/w"] = cin * 8;
    layers.push_back({prefix, "transposed_conv3d", cin, cout, level, 0.0});
  }

  void norm(const std::string& prefix, std::size_t channels, std::size_t level) {
    shapes[prefix + "/gamma"] = {channels};
    shapes[prefix + "/beta"] = {channels};
    layers.push_back({prefix, "group_norm(" + std::to_string(layers::default_groups(channels)) + ")", channels,
                      channels, level, 0.0});
  }

  void block(const std::string& prefix_base, std::size_t cin, std::size_t cout, std::size_t convs,
             std::size_t level, double dropout) {
    for (std::size_t i = 0; i < convs; ++i) {
      const std::string prefix = prefix_base + "/" + std::to_string(i);
      conv(prefix, i == 0 ? cin : cout, cout, 3, level);
      norm(prefix, cout, level);
    }
    layers.push_back({prefix_base + "/dropout", "dropout", cout, cout, level, dropout});
  }

  void gate(const std::string& prefix, std::size_t cx, std::size_t cg, std::size_t level) {
    const std::size_t f = attention::intermediate_channels(cx);
    conv(prefix + "/wx", cx, f, 1, level);
    conv(prefix + "/wg", cg, f, 1, level);
    conv(prefix + "/psi", f, 1, 1, level);
  }

  explicit Planner(const ArchitectureConfig& c) {
    c.validate();
    const std::size_t S = c.stages();
    const auto& ch = c.stage_channels;
    for (std::size_t s = 0; s < S; ++s) {
      if (s > 0) {
        if (c.downsample == Downsample::kStridedConv) {
          conv(down_prefix(s - 1), ch[s - 1], ch[s - 1], 2, s - 1, "conv3d(stride 2)");
        } else {
          layers.push_back({"pool/" + std::to_string(s - 1), "maxpool3d", ch[s - 1], ch[s - 1], s - 1, 0.0});
        }
      }
      block("enc/" + std::to_string(s), s == 0 ? c.in_channels : ch[s - 1], ch[s], c.convs_per_stage[s], s,
            c.dropout.rate_for(ch[s]));
    }
    for (std::size_t d = 0; d < c.decoders; ++d) {
      for (std::size_t l = S - 1; l-- > 0;) {
        transposed(dec_prefix(d, l) + "/up", ch[l + 1], ch[l], l);
        if (c.attention != AttentionMode::kNone) {
          const std::string gp = gate_prefix(c, d, l);
          const std::size_t cg = c.gating == Gating::kSameLevel ? ch[l] : ch[l + 1];
          if (!shapes.count(gp + "/wx/w")) {
            gate(gp, ch[l], cg, l);
          } else {
            layers.push_back({gp, "gate(shared)", ch[l], ch[l], l, 0.0});
          }
        }
        block(dec_prefix(d, l), 2 * ch[l], ch[l], c.convs_per_stage[l], l, c.dropout.rate_for(ch[l]));
      }
      conv(head_prefix(d), ch[0], c.num_classes, 1, 0);
    }
    if (c.decoders == 2) conv("fuse", 2 * c.num_classes, c.num_classes, 1, 0);
  }
};

template <typename T>
layers::ConvParams<T> conv_params(const ParamBinding<T>& p, const std::string& prefix, std::size_t stride,
                                  std::size_t padding) {
  const auto w = p.find(prefix + "/w");
  const auto b = p.find(prefix + "/b");
  if (w == p.end() || b == p.end()) throw ShapeError("forward: missing parameters for '" + prefix + "'");
  return {w->second, b->second, stride, padding};
}

template <typename T>
layers::GroupNormParams<T> norm_params(const ParamBinding<T>& p, const std::string& prefix, std::size_t channels) {
  const auto g = p.find(prefix + "/gamma");
  const auto b = p.find(prefix + "/beta");
  if (g == p.end() || b == p.end()) throw ShapeError("forward: missing parameters for '" + prefix + "'");
  return {g->second, b->second, layers::default_groups(channels), 1e-5};
}

template <typename T>
void lower_margin(double* margin, const Tensor<T>& preact) {
  if (!margin) return;
  for (T v : preact.data()) *margin = std::min(*margin, std::abs(static_cast<double>(v)));
}

template <typename T>
void lower_pool_margin(double* margin, const Tensor<T>& x) {
  if (!margin) return;
  const std::size_t D = x.extent(2), H = x.extent(3), W = x.extent(4);
  const std::size_t planes = x.extent(0) * x.extent(1);
  for (std::size_t p = 0; p < planes; ++p) {
    const T* base = x.data().data() + p * D * H * W;
    for (std::size_t d = 0; d < D; d += 2) {
      for (std::size_t h = 0; h < H; h += 2) {
        for (std::size_t w = 0; w < W; w += 2) {
          double best = -INFINITY;
          double second = -INFINITY;
          for (std::size_t k = 0; k < 8; ++k) {
            const double v = base[((d + (k >> 2)) * H + h + ((k >> 1) & 1)) * W + w + (k & 1)];
            if (v > best) {
              second = best;
              best = v;
            } else if (v > second) {
              second = v;
            }
          }
          *margin = std::min(*margin, best - second);
        }
      }
    }
  }
}

template <typename T>
struct Forward {
  const ParamBinding<T>& p;
  const ArchitectureConfig& c;
  const ForwardOptions& opt;
  std::uint64_t dropout_layer = 0;

  Var<T> block(Var<T> h, const std::string& base, std::size_t channels, std::size_t convs) {
    for (std::size_t i = 0; i < convs; ++i) {
      const std::string prefix = base + "/" + std::to_string(i);
      h = layers::conv3d(h, conv_params(p, prefix, 1, 1));
      h = layers::group_norm(h, norm_params(p, prefix, channels));
      lower_margin(opt.kink_margin, h.value());
      h = layers::relu(h);
    }
    const layers::DropoutSpec spec{c.dropout.rate_for(channels), opt.mode};
    return layers::channel_dropout(h, spec, {opt.dropout_seed, opt.step, dropout_layer++});
  }

  attention::AttentionGateParams<T> gate(const std::string& prefix) {
    return {conv_params(p, prefix + "/wx", 1, 0), conv_params(p, prefix + "/wg", 1, 0),
            conv_params(p, prefix + "/psi", 1, 0)};
  }
};

}  // namespace

std::map<std::string, Shape> parameter_shapes(const ArchitectureConfig& config) { return Planner(config).shapes; }

std::vector<LayerSpec> describe_layers(const ArchitectureConfig& config) { return Planner(config).layers; }

template <typename T>
Model<T> build_model(const ArchitectureConfig& config, std::uint64_t seed) {
  Planner plan(config);
  Model<T> m{config, {}, plan.layers};
  for (const auto& [name, shape] : plan.shapes) {
    const auto fan = plan.fan_in.find(name);
    if (fan != plan.fan_in.end()) {
      // Keyed by name so every tensor is independent of construction order.
      Rng rng(seed, Stream::kInit, fnv1a64(name));
      m.params.emplace(name, Tensor<T>::normal(shape, 0.0, std::sqrt(2.0 / static_cast<double>(fan->second)), rng));
    } else if (name.ends_with("/gamma")) {
      m.params.emplace(name, Tensor<T>::full(shape, T(1)));
    } else {
      m.params.emplace(name, Tensor<T>::zeros(shape));
    }
  }
  return m;
}

template <typename T>
ParamBinding<T> bind_parameters(const ParamSet<T>& params, Tape<T>* tape) {
  ParamBinding<T> out;
  for (const auto& [name, t] : params) {
    out.emplace(name, tape ? tape->leaf(t, name) : Var<T>(t));
  }
  return out;
}

template <typename T>
ForwardArtifacts<T> forward(const ParamBinding<T>& params, const ArchitectureConfig& config, const Var<T>& x,
                            const ForwardOptions& options) {
  config.validate();
  if (x.rank() != 5) throw ShapeError("forward: input must be (N,C,D,H,W), got " + shape_to_string(x.shape()));
  if (x.extent(1) != config.in_channels) {
    throw ShapeError("forward: input has " + std::to_string(x.extent(1)) + " channels, config expects " +
                     std::to_string(config.in_channels));
  }
  const std::size_t div = config.spatial_divisor();
  for (std::size_t a = 2; a < 5; ++a) {
    if (x.extent(a) % div != 0) {
      throw ShapeError("forward: spatial extent " + std::to_string(x.extent(a)) + " is not divisible by " +
                       std::to_string(div) + " as required by " + std::to_string(config.stages()) + " stages");
    }
  }
  if (options.mode == layers::Mode::kTrain) {
    bool any_tracked = x.tracked();
    for (const auto& [name, v] : params) any_tracked = any_tracked || v.tracked();
    if (!any_tracked) throw ShapeError("forward: train mode requires parameters recorded on a tape");
  }

  Forward<T> f{params, config, options};
  const std::size_t S = config.stages();
  const auto& ch = config.stage_channels;

  std::vector<Var<T>> skips;
  Var<T> h = x;
  for (std::size_t s = 0; s < S; ++s) {
    if (s > 0) {
      if (config.downsample == Downsample::kMaxPool) lower_pool_margin(options.kink_margin, h.value());
      h = config.downsample == Downsample::kStridedConv ? layers::conv3d(h, conv_params(params, down_prefix(s - 1), 2, 0))
                                                       : layers::maxpool3d(h);
    }
    h = f.block(h, "enc/" + std::to_string(s), ch[s], config.convs_per_stage[s]);
    skips.push_back(h);
  }

  ForwardArtifacts<T> out;
  std::vector<Var<T>> heads;
  const bool gated = config.attention != AttentionMode::kNone;
  if (options.capture_attention && gated) out.attention.assign(config.decoders, std::vector<Var<T>>(S - 1));
  for (std::size_t d = 0; d < config.decoders; ++d) {
    h = skips.back();
    for (std::size_t l = S - 1; l-- > 0;) {
      const Var<T> up = layers::transposed_conv3d(h, conv_params(params, dec_prefix(d, l) + "/up", 2, 0));
      Var<T> skip = skips[l];
      if (gated) {
        const auto gp = f.gate(gate_prefix(config, d, l));
        auto g = config.gating == Gating::kSameLevel ? attention::attention_gate_same_level(skip, up, gp)
                                                     : attention::attention_gate_original(skip, h, gp);
        skip = g.gated;
        lower_margin(options.kink_margin, g.preactivation.value());
        if (options.capture_attention) out.attention[d][l] = g.alpha;
      }
      h = f.block(ops::concat<T>(1, {up, skip}), dec_prefix(d, l), ch[l], config.convs_per_stage[l]);
    }
    heads.push_back(layers::conv3d(h, conv_params(params, head_prefix(d), 1, 0)));
  }
  out.logits = config.decoders == 2 ? layers::conv3d(ops::concat<T>(1, heads), conv_params(params, "fuse", 1, 0))
                                    : heads[0];
  return out;
}

std::string model_description(const ArchitectureConfig& config) {
  const Planner plan(config);
  std::ostringstream os;
  os << "architecture: decoders=" << config.decoders << " attention=" << to_string(config.attention)
     << " gating=" << to_string(config.gating) << " downsample=" << to_string(config.downsample) << '\n';
  os << "input channels: " << config.in_channels << ", classes: " << config.num_classes
     << ", spatial divisor: " << config.spatial_divisor() << '\n';
  os << "layers:\n";
  for (const LayerSpec& l : plan.layers) {
    os << "  " << l.name << "  " << l.kind << "  " << l.in_channels << " -> " << l.out_channels << "  level "
       << l.level;
    if (l.kind == "dropout") os << "  p=" << l.dropout;
    os << '\n';
  }
  std::size_t total = 0;
  os << "parameters:\n";
  for (const auto& [name, shape] : plan.shapes) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    total += n;
    os << "  " << name << "  " << shape_to_string(shape) << '\n';
  }
  os << "parameter count: " << total << '\n';
  return os.str();
}

template Model<float> build_model(const ArchitectureConfig&, std::uint64_t);
template Model<double> build_model(const ArchitectureConfig&, std::uint64_t);
template ParamBinding<float> bind_parameters(const ParamSet<float>&, Tape<float>*);
template ParamBinding<double> bind_parameters(const ParamSet<double>&, Tape<double>*);
template ForwardArtifacts<float> forward(const ParamBinding<float>&, const ArchitectureConfig&, const Var<float>&,
                                         const ForwardOptions&);
template ForwardArtifacts<double> forward(const ParamBinding<double>&, const ArchitectureConfig&,
                                          const Var<double>&, const ForwardOptions&);

}  // namespace ddunet::network
