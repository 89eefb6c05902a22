#include "ddunet/app/gradcheck_suite.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>

#include "ddunet/attention/gate.hpp"
#include "ddunet/engine/error.hpp"
#include "ddunet/engine/gradcheck.hpp"
#include "ddunet/engine/ops.hpp"
#include "ddunet/engine/rng.hpp"
#include "ddunet/layers/layers.hpp"
#include "ddunet/network/model.hpp"
#include "ddunet/objectives/losses.hpp"

namespace ddunet::app {
namespace {

using V = Var<double>;
using Vs = std::vector<V>;
using Tn = Tensor<double>;

struct Case {
  MultiScalarFn fn;
  std::vector<Tn> inputs;
};

using CaseFactory = std::function<Case(Rng&)>;

Tn randn(Shape shape, Rng& rng, double sd = 1.0) { return Tn::normal(std::move(shape), 0.0, sd, rng); }

// Scalar probe of a tensor-valued op: sum(out * r) for a fixed random r.
V project(const V& out, const Tn& r) { return ops::sum(ops::mul(out, V(r))); }

Tn random_one_hot(Shape shape, Rng& rng) {
  Tn t(shape);
  const std::size_t C = shape[1];
  const std::size_t vol = shape[2] * shape[3] * shape[4];
  for (std::size_t n = 0; n < shape[0]; ++n) {
    for (std::size_t v = 0; v < vol; ++v) t[(n * C + rng.below(C)) * vol + v] = 1.0;
  }
  return t;
}

// Values at least `gap` apart, so no finite-difference step reorders them.
Tn spaced_values(Shape shape, Rng& rng, double gap) {
  Tn t(shape);
  std::vector<std::size_t> perm(t.numel());
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t i = perm.size() - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
  const double mid = static_cast<double>(perm.size()) / 2.0;
  for (std::size_t i = 0; i < perm.size(); ++i) {
    t[i] = (static_cast<double>(perm[i]) - mid) * 2.0 * gap + rng.uniform(0.0, gap);
  }
  return t;
}

// Values bounded away from zero by `margin`.
Tn away_from_zero(Shape shape, Rng& rng, double margin) {
  Tn t = randn(std::move(shape), rng);
  for (double& v : t.data()) v = (v < 0 ? -1.0 : 1.0) * (margin + std::abs(v));
  return t;
}

layers::ConvParams<double> conv_params(const Vs& v, std::size_t w, std::size_t b, std::size_t stride,
                                       std::size_t padding) {
  return {v[w], v[b], stride, padding};
}

attention::AttentionGateParams<double> gate_params(const Vs& v, std::size_t first) {
  return {conv_params(v, first, first + 1, 1, 0), conv_params(v, first + 2, first + 3, 1, 0),
          conv_params(v, first + 4, first + 5, 1, 0)};
}

std::vector<Tn> gate_tensors(std::size_t cx, std::size_t cg, Rng& rng) {
  const std::size_t f = attention::intermediate_channels(cx);
  return {randn({f, cx, 1, 1, 1}, rng), randn({f}, rng, 0.5), randn({f, cg, 1, 1, 1}, rng),
          randn({f}, rng, 0.5),         randn({1, f, 1, 1, 1}, rng), randn({1}, rng, 0.5)};
}

// Instances whose relu or max-pool kinks sit closer than this to the
// evaluation point are redrawn: central differences straddling a kink do not
// estimate the derivative.
constexpr double kKinkMargin = 1e-2;

double gate_margin(const Tn& x, const Tn& g, const std::vector<Tn>& gp, bool original) {
  std::vector<V> v{V(x), V(g)};
  for (const Tn& t : gp) v.emplace_back(t);
  const auto out = original ? attention::attention_gate_original(v[0], v[1], gate_params(v, 2))
                            : attention::attention_gate_same_level(v[0], v[1], gate_params(v, 2));
  double m = INFINITY;
  for (double q : out.preactivation.value().data()) m = std::min(m, std::abs(q));
  return m;
}

Case conv3d_case(Rng& rng) {
  const std::size_t stride = 1 + rng.below(2);
  const std::size_t padding = rng.below(2);
  const std::size_t k = stride == 2 ? 2 + rng.below(2) : 3;
  const std::size_t cin = 1 + rng.below(3);
  const std::size_t cout = 1 + rng.below(3);
  const std::size_t n = 1 + rng.below(2);
  Tn x = randn({n, cin, 4, 4, 5}, rng);
  Tn w = randn({cout, cin, k, k, k}, rng, 0.5);
  Tn b = randn({cout}, rng, 0.5);
  const std::size_t d = (4 + 2 * padding - k) / stride + 1;
  const std::size_t wd = (5 + 2 * padding - k) / stride + 1;
  Tn r = randn({n, cout, d, d, wd}, rng);
  return {[=](const Vs& v) { return project(layers::conv3d(v[0], conv_params(v, 1, 2, stride, padding)), r); },
          {x, w, b}};
}

Case transposed_case(Rng& rng) {
  const std::size_t cin = 1 + rng.below(3);
  const std::size_t cout = 1 + rng.below(3);
  const std::size_t n = 1 + rng.below(2);
  Tn x = randn({n, cin, 2, 3, 2}, rng);
  Tn w = randn({cin, cout, 2, 2, 2}, rng, 0.5);
  Tn b = randn({cout}, rng, 0.5);
  Tn r = randn({n, cout, 4, 6, 4}, rng);
  return {[=](const Vs& v) { return project(layers::transposed_conv3d(v[0], conv_params(v, 1, 2, 2, 0)), r); },
          {x, w, b}};
}

Case maxpool_case(Rng& rng) {
  const std::size_t c = 1 + rng.below(3);
  Tn x = spaced_values({1, c, 4, 4, 2}, rng, 1e-2);
  Tn r = randn({1, c, 2, 2, 1}, rng);
  return {[=](const Vs& v) { return project(layers::maxpool3d(v[0]), r); }, {x}};
}

Case group_norm_case(Rng& rng) {
  const std::size_t groups = 1 + rng.below(2);
  const std::size_t c = groups * (1 + rng.below(3));
  Tn x = randn({2, c, 3, 2, 3}, rng, 2.0);
  for (double& v : x.data()) v += 0.5;
  Tn gamma = randn({c}, rng);
  Tn beta = randn({c}, rng);
  Tn r = randn({2, c, 3, 2, 3}, rng);
  return {[=](const Vs& v) {
            return project(layers::group_norm(v[0], layers::GroupNormParams<double>{v[1], v[2], groups, 1e-5}), r);
          },
          {x, gamma, beta}};
}

Case relu_case(Rng& rng) {
  Tn x = away_from_zero({1, 2, 3, 3, 3}, rng, kKinkMargin);
  Tn r = randn({1, 2, 3, 3, 3}, rng);
  return {[=](const Vs& v) { return project(layers::relu(v[0]), r); }, {x}};
}

Case sigmoid_case(Rng& rng) {
  Tn x = randn({1, 2, 3, 3, 3}, rng, 2.0);
  Tn r = randn({1, 2, 3, 3, 3}, rng);
  return {[=](const Vs& v) { return project(layers::sigmoid(v[0]), r); }, {x}};
}

Case softmax_case(Rng& rng) {
  const std::size_t c = 2 + rng.below(3);
  Tn x = randn({2, c, 2, 3, 2}, rng, 2.0);
  Tn r = randn({2, c, 2, 3, 2}, rng);
  return {[=](const Vs& v) { return project(layers::softmax_channels(v[0]), r); }, {x}};
}

Case dropout_case(Rng& rng) {
  const bool train = rng.uniform() < 0.5;
  const double rate = rng.uniform(0.1, 0.6);
  const layers::DropoutKey key{rng.next_u64(), rng.below(100), rng.below(10)};
  Tn x = randn({2, 4, 2, 2, 3}, rng);
  Tn r = randn({2, 4, 2, 2, 3}, rng);
  const layers::DropoutSpec spec{rate, train ? layers::Mode::kTrain : layers::Mode::kEval};
  return {[=](const Vs& v) { return project(layers::channel_dropout(v[0], spec, key), r); }, {x}};
}

Case gate_case(Rng& rng, bool original) {
  for (;;) {
    const std::size_t cx = 1 + rng.below(4);
    const std::size_t cg = 1 + rng.below(4);
    const std::size_t n = 1 + rng.below(2);
    Tn x = randn({n, cx, 4, 4, 2}, rng);
    Tn g = original ? randn({n, cg, 2, 2, 1}, rng) : randn({n, cg, 4, 4, 2}, rng);
    std::vector<Tn> gp = gate_tensors(cx, cg, rng);
    if (gate_margin(x, g, gp, original) < kKinkMargin) continue;
    Tn r = randn(x.shape(), rng);
    Tn ra = randn({n, 1, 4, 4, 2}, rng);
    std::vector<Tn> inputs{x, g};
    inputs.insert(inputs.end(), gp.begin(), gp.end());
    return {[=](const Vs& v) {
              const auto out = original ? attention::attention_gate_original(v[0], v[1], gate_params(v, 2))
                                        : attention::attention_gate_same_level(v[0], v[1], gate_params(v, 2));
              return ops::add(project(out.gated, r), project(out.alpha, ra));
            },
            inputs};
  }
}

enum class LossKind { kDice, kFocal, kTotal };

Case loss_case(Rng& rng, LossKind kind) {
  const std::size_t c = 2 + rng.below(3);
  const std::size_t n = 1 + rng.below(2);
  Tn logits = randn({n, c, 2, 2, 3}, rng, 1.5);
  Tn target = random_one_hot({n, c, 2, 2, 3}, rng);
  return {[=](const Vs& v) {
            const V p = layers::softmax_channels(v[0]);
            switch (kind) {
              case LossKind::kDice:
                return objectives::dice_loss(p, target);
              case LossKind::kFocal:
                return objectives::focal_loss(p, target);
              case LossKind::kTotal:
                break;
            }
            return objectives::total_loss(p, target);
          },
          {logits}};
}

network::ArchitectureConfig tiny_network() {
  network::ArchitectureConfig c;
  c.in_channels = 1;
  c.num_classes = 2;
  c.stage_channels = {2, 4};
  c.convs_per_stage = {1, 1};
  c.decoders = 2;
  c.attention = network::AttentionMode::kPerDecoder;
  c.gating = network::Gating::kSameLevel;
  return c;
}

Case network_case(Rng& rng) {
  const network::ArchitectureConfig cfg = tiny_network();
  const auto shapes = network::parameter_shapes(cfg);
  std::vector<std::string> names;
  for (const auto& [name, shape] : shapes) names.push_back(name);
  std::vector<Tn> inputs;
  for (;;) {
    inputs.assign(1, randn({1, 1, 4, 4, 4}, rng));
    network::ParamBinding<double> binding;
    for (const auto& [name, shape] : shapes) {
      Tn t = randn(shape, rng, 0.6);
      if (name.ends_with("gamma")) {
        for (double& v : t.data()) v += 1.0;
      }
      binding.emplace(name, V(t));
      inputs.push_back(std::move(t));
    }
    double margin = INFINITY;
    network::ForwardOptions probe;
    probe.kink_margin = &margin;
    network::forward(binding, cfg, V(inputs[0]), probe);
    if (margin >= kKinkMargin) break;
  }
  Tn target = random_one_hot({1, 2, 4, 4, 4}, rng);
  return {[=](const Vs& v) {
            network::ParamBinding<double> binding;
            for (std::size_t i = 0; i < names.size(); ++i) binding.emplace(names[i], v[i + 1]);
            const auto out = network::forward(binding, cfg, v[0]);
            return objectives::total_loss(layers::softmax_channels(out.logits), target);
          },
          inputs};
}

const std::map<std::string, CaseFactory>& factories() {
  static const std::map<std::string, CaseFactory> table{
      {"conv3d", conv3d_case},
      {"transposed_conv3d", transposed_case},
      {"maxpool3d", maxpool_case},
      {"group_norm", group_norm_case},
      {"relu", relu_case},
      {"sigmoid", sigmoid_case},
      {"softmax", softmax_case},
      {"channel_dropout", dropout_case},
      {"attention_same_level", [](Rng& r) { return gate_case(r, false); }},
      {"attention_original", [](Rng& r) { return gate_case(r, true); }},
      {"dice_loss", [](Rng& r) { return loss_case(r, LossKind::kDice); }},
      {"focal_loss", [](Rng& r) { return loss_case(r, LossKind::kFocal); }},
      {"total_loss", [](Rng& r) { return loss_case(r, LossKind::kTotal); }},
      {"network", network_case},
  };
  return table;
}

}  // namespace

const std::vector<std::string>& gradcheck_scopes() {
  static const std::vector<std::string> scopes{
      "conv3d",  "transposed_conv3d", "maxpool3d",         "group_norm",           "relu",
      "sigmoid", "softmax",           "channel_dropout",   "attention_same_level", "attention_original",
      "dice_loss", "focal_loss",      "total_loss",        "network"};
  return scopes;
}

bool is_gradcheck_scope(const std::string& scope) { return factories().count(scope) > 0; }

GradcheckReport run_gradcheck(const std::string& scope, std::size_t instances, std::uint64_t seed, double tol) {
  const auto it = factories().find(scope);
  if (it == factories().end()) throw ShapeError("unknown gradcheck scope '" + scope + "'");
  const auto t0 = std::chrono::steady_clock::now();
  GradcheckReport report;
  report.scope = scope;
  for (std::size_t i = 0; i < instances; ++i) {
    Rng rng(seed, Stream::kInit, Rng::hash({fnv1a64(scope), i}));
    const Case c = it->second(rng);
    const GradCheckResult r = finite_diff_check(c.fn, c.inputs, 1e-4, tol);
    ++report.instances;
    report.elements += r.checked;
    if (r.passed) ++report.passed;
    if (!(r.max_rel_error <= report.max_rel_error)) {
      report.max_rel_error = r.max_rel_error;
      std::ostringstream os;
      os << "instance " << i << ", input " << r.worst_input << "[" << r.worst_index << "]: analytic " << r.analytic
         << " vs numeric " << r.numeric;
      report.worst = os.str();
    }
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace ddunet::app
