// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "../support/helpers.hpp"
#include "../support/oracles.hpp"
#include "ddunet/app/checkpoint.hpp"
#include "ddunet/app/gradcheck_suite.hpp"
#include "ddunet/app/pipeline.hpp"
#include "ddunet/app/run_config.hpp"
#include "ddunet/data/augment.hpp"
#include "ddunet/data/nifti.hpp"
#include "ddunet/data/phantom.hpp"
#include "ddunet/engine/tensor_ops.hpp"
#include "ddunet/layers/kernels.hpp"
#include "ddunet/objectives/metrics.hpp"
#include "ddunet/optim/schedule.hpp"

using namespace ddunet;
using namespace testing_support;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  // Records a failed sub-check; keeps going so the detail lists every failure.
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------

void gradient_suite(Outcome& o) {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::size_t instances = 0;
  for (const std::string& scope : app::gradcheck_scopes()) {
    const app::GradcheckReport r = app::run_gradcheck(scope, 10, 0, 1e-4);
    instances += r.instances;
    worst = std::max(worst, r.max_rel_error);
    o.require(r.ok() && r.instances >= 10, scope + " " + std::to_string(r.passed) + "/" + std::to_string(r.instances) +
                                               " worst " + r.worst);
  }
  const double secs = seconds_since(t0);
  o.require(secs <= 300.0, "runtime over 5 minutes");
  o.detail << app::gradcheck_scopes().size() << " scopes, " << instances << " instances, max rel err " << worst
           << ", " << secs << " s";
}

void conv_oracle(Outcome& o) {
  struct Case {
    Shape x;
    std::size_t cout, k, stride, pad;
  };
  const std::vector<Case> cases = {
      {{1, 1, 3, 3, 3}, 1, 3, 1, 1}, {{2, 3, 5, 5, 5}, 2, 3, 1, 1}, {{2, 3, 5, 5, 5}, 4, 3, 2, 1},
      {{2, 3, 5, 5, 5}, 3, 1, 1, 0}, {{2, 3, 4, 4, 4}, 2, 2, 2, 0}, {{1, 2, 5, 4, 3}, 3, 3, 1, 0},
  };
  double worst_fwd = 0.0, worst_adj = 0.0;
  std::uint64_t key = 0;
  for (const Case& c : cases) {
    const Tensor<double> x = random_tensor(c.x, ++key);
    const Tensor<double> w = random_tensor({c.cout, c.x[1], c.k, c.k, c.k}, ++key);
    const Tensor<double> b = random_tensor({c.cout}, ++key);
    layers::ConvParams<double> p{Var<double>(w), Var<double>(b), c.stride, c.pad};
    const Tensor<double> got = layers::conv3d(Var<double>(x), p).value();
    const Tensor<double> want = oracle::conv3d(x, w, b, c.stride, c.pad);
    worst_fwd = std::max(worst_fwd, got.shape() == want.shape() ? max_abs_diff(got, want) : 1e300);

    // <A u, y> = <u, A^T y> for the bias-free convolution A
    const kernels::ConvGeometry g{c.stride, c.pad};
    const Tensor<double> y = random_tensor(want.shape(), ++key);
    const double lhs = dot(kernels::conv3d_forward(x, w, Tensor<double>(), g), y);
    const double rhs = dot(x, kernels::conv3d_backward_input(y, w, x.shape(), g));
    worst_adj = std::max(worst_adj, std::abs(lhs - rhs));
  }
  const std::vector<Shape> tshapes = {{1, 1, 2, 2, 2}, {2, 3, 5, 5, 5}, {1, 2, 3, 4, 5}};
  for (const Shape& s : tshapes) {
    const std::size_t cout = 2;
    const Tensor<double> x = random_tensor(s, ++key);
    const Tensor<double> w = random_tensor({s[1], cout, 2, 2, 2}, ++key);
    const Tensor<double> b = random_tensor({cout}, ++key);
    layers::ConvParams<double> p{Var<double>(w), Var<double>(b), 2, 0};
    const Tensor<double> got = layers::transposed_conv3d(Var<double>(x), p).value();
    const Tensor<double> want = oracle::transposed_conv3d(x, w, b);
    worst_fwd = std::max(worst_fwd, got.shape() == want.shape() ? max_abs_diff(got, want) : 1e300);

    // the transposed convolution is the adjoint of the stride-2 convolution with the same weight
    const Tensor<double> u = random_tensor(want.shape(), ++key);
    layers::ConvParams<double> nob{Var<double>(w), Var<double>(), 2, 0};
    const double lhs = dot(layers::transposed_conv3d(Var<double>(x), nob).value(), u);
    const double rhs = dot(x, oracle::conv3d(u, w, Tensor<double>(), 2, 0));
    worst_adj = std::max(worst_adj, std::abs(lhs - rhs));
  }
  o.require(worst_fwd <= 1e-10, "direct evaluation");
  o.require(worst_adj <= 1e-10, "adjoint identity");
  o.detail << "max |conv - naive| " << worst_fwd << ", max adjoint gap " << worst_adj;
}

void loss_oracle(Outcome& o) {
  double worst = 0.0;
  for (std::uint64_t i = 0; i < 50; ++i) {
    const Tensor<double> probs = softmax_reference(random_tensor({1, 2, 2, 2, 2}, 100 + i, -3.0, 3.0));
    const Tensor<double> target = random_one_hot({1, 2, 2, 2, 2}, i);
    const oracle::LossTerms want = oracle::loss_terms(probs, target);
    const Var<double> p(probs);
    worst = std::max({worst, std::abs(objectives::total_loss(p, target).value()[0] - want.total),
                      std::abs(objectives::dice_loss(p, target).value()[0] - want.dice),
                      std::abs(objectives::focal_loss(p, target).value()[0] - want.focal)});
  }
  o.require(worst <= 1e-9, "random instances");

  // perfect prediction
  const Tensor<double> t = random_one_hot({1, 2, 2, 2, 2}, 7);
  const double perfect = objectives::total_loss(Var<double>(t), t).value()[0];
  o.require(std::abs(perfect) <= 1e-12, "loss 0 at perfect prediction");

  // class Dice loss 0.5 at half overlap: truth on voxels 0..3, prediction on 2..5
  Tensor<double> truth({1, 2, 2, 2, 2}), pred({1, 2, 2, 2, 2});
  for (std::size_t v = 0; v < 8; ++v) {
    truth[(v < 4 ? 1 : 0) * 8 + v] = 1.0;
    pred[(v >= 2 && v < 6 ? 1 : 0) * 8 + v] = 1.0;
  }
  const double half = objectives::dice_loss(Var<double>(pred), truth, 0.0).value()[0];
  const double half_smoothed = objectives::dice_loss(Var<double>(pred), truth).value()[0];
  o.require(half == 0.5, "Dice loss 0.5 at half overlap");
  o.require(std::abs(half_smoothed - 0.5) <= 1e-6, "smoothed Dice loss near 0.5");

  // focal at p_t = 0.5
  const Tensor<double> even = Tensor<double>::full({1, 2, 2, 2, 2}, 0.5);
  const double focal = objectives::focal_loss(Var<double>(even), t).value()[0];
  const double anchor = 0.25 * 0.25 * std::numbers::ln2;
  o.require(std::abs(focal - anchor) <= 1e-15, "focal 0.25*0.25*ln2");

  o.detail << "max |loss - scalar| " << worst << " over 50 instances; anchors " << perfect << ", " << half << ", "
           << focal << " (want " << anchor << ")";
}

void metrics_oracle(Outcome& o) {
  using objectives::LabelVolume;
  LabelVolume truth{{4, 4, 4}, std::vector<std::uint8_t>(64, 0)};
  LabelVolume pred = truth;
  for (std::size_t i = 0; i < 10; ++i) truth.labels[i] = 1;
  for (std::size_t i = 10; i < 20; ++i) truth.labels[i] = 2;
  for (std::size_t i = 20; i < 25; ++i) truth.labels[i] = 3;
  const std::uint8_t p[28] = {1, 1, 1, 1, 1, 1, 1, 1, 3, 3, 2, 2, 2, 2, 2, 0, 0, 0, 0, 0, 3, 3, 3, 1, 1, 2, 2, 2};
  std::copy(std::begin(p), std::end(p), pred.labels.begin());

  // Hand counts, written out per set.
  const objectives::ConfusionCounts wt{20, 3, 36, 5}, tc{15, 0, 49, 0}, et{3, 2, 57, 2};
  const objectives::ConfusionCounts c0{36, 5, 20, 3}, c1{8, 2, 52, 2}, c2{5, 3, 51, 5}, c3{3, 2, 57, 2};
  const objectives::MetricsReport r = objectives::evaluate_volume(pred, truth);
  o.require(r.regions[0].counts == wt && r.regions[1].counts == tc && r.regions[2].counts == et, "region counts");
  o.require(r.classes[0].counts == c0 && r.classes[1].counts == c1 && r.classes[2].counts == c2 &&
                r.classes[3].counts == c3,
            "class counts");
  o.require(r.regions[0].scores.dice == 40.0 / 48.0 && r.regions[0].scores.sensitivity == 20.0 / 25.0 &&
                r.regions[0].scores.specificity == 36.0 / 39.0,
            "WT scores");

  o.require(objectives::region_positive_set(objectives::Region::kWT) == objectives::LabelSet{1, 2, 3} &&
                objectives::region_positive_set(objectives::Region::kTC) == objectives::LabelSet{1, 3} &&
                objectives::region_positive_set(objectives::Region::kET) == objectives::LabelSet{3},
            "region sets");

  const std::vector<std::vector<int>> unions = {{1, 2, 3}, {1, 3}, {3}};
  std::size_t agree = 0;
  for (std::uint64_t m = 0; m < 100; ++m) {
    Rng rng(5, Stream::kInit, m);
    LabelVolume a{{4, 4, 4}, std::vector<std::uint8_t>(64)}, b = a;
    for (std::size_t i = 0; i < 64; ++i) {
      a.labels[i] = static_cast<std::uint8_t>(rng.below(4));
      b.labels[i] = static_cast<std::uint8_t>(rng.below(4));
    }
    const auto rep = objectives::evaluate_volume(a, b);
    bool same = true;
    for (std::size_t k = 0; k < 3; ++k) {
      const auto u = oracle::region_counts_by_union(a.labels, b.labels, unions[k]);
      const auto& c = rep.regions[k].counts;
      same = same && c.tp == u.tp && c.fp == u.fp && c.tn == u.tn && c.fn == u.fn;
    }
    agree += same;
  }
  o.require(agree == 100, "two-path region equivalence");
  o.detail << "hand-counted 4^3 case, " << agree << "/100 random masks agree";
}

void overfit(Outcome& o) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto dir = scratch_dir("overfit");
  app::RunConfig c = app::resolve_config({app::parse_settings(
      "variant = 2ag\nstages = 8,16,32\nconvs = 1,1,2\ngating = same_level\n"
      "phantom_count = 1\nphantom_size = 32\ncrop = 32\nsplit_ratio = 1\naugment = false\n"
      "schedule = onecycle\nmax_lr = 0.01\nepochs = 300\neval_every = 300\nseed = 0\n",
      "overfit")});
  c.out_dir = dir.string();
  std::ostringstream log;
  const app::TrainOutcome out = app::train(c, log);
  const app::MetricsRow& last = out.rows.back();
  const double wt = last.scores.regions[0].dice;
  const double secs = seconds_since(t0);
  o.require(out.steps <= 300, "step budget");
  o.require(last.split == "train" && wt >= 0.90, "training WT Dice >= 0.90");
  o.require(secs <= 900.0, "runtime over 15 minutes");
  o.detail << out.steps << " steps, train WT Dice " << wt << ", final loss " << last.loss << ", " << secs << " s";
}

void variant_matrix(Outcome& o) {
  const Tensor<float> x = random_tensor<float>({1, 4, 16, 16, 16}, 1);
  const Tensor<float> target = random_one_hot<float>({1, 4, 16, 16, 16}, 2);
  for (const char* name : {"unet", "1ag", "2ag", "2ag-original", "2ag-strided"}) {
    const network::ArchitectureConfig arch = tiny_arch(name);
    network::Model<float> model = network::build_model<float>(arch, 0);
    const network::ParamSet<float> before = model.params;
    optim::AdamWState<float> opt = optim::make_adamw_state(model.params);
    const StepResult r = train_step(model, opt, x, target, 1e-3);
    const Shape want{1, 4, 16, 16, 16};
    bool finite = std::isfinite(r.loss);
    for (float v : r.out.logits.value().data()) finite = finite && std::isfinite(v);
    o.require(r.out.logits.shape() == want && finite, std::string(name) + " logits");
    o.require(model.params != before, std::string(name) + " update");

    const std::size_t gated = arch.attention == network::AttentionMode::kNone ? 0 : arch.decoders;
    bool maps = r.out.attention.size() == gated;
    for (const auto& levels : r.out.attention) {
      maps = maps && levels.size() == arch.stages() - 1;
      for (std::size_t l = 0; l < levels.size() && maps; ++l) {
        const std::size_t e = 16 >> l;
        maps = levels[l].shape() == Shape{1, 1, e, e, e};
        // float32 sigmoid rounds to exactly 0 or 1 once |z| exceeds about 16.6
        for (float a : levels[l].value().data()) maps = maps && a >= 0.0f && a <= 1.0f;
      }
    }
    o.require(maps, std::string(name) + " attention maps");
    o.detail << name << " loss " << r.loss << "; ";
  }

  // Decoder B's gates cannot reach the output once B's head is zeroed.
  network::Model<float> m = network::build_model<float>(tiny_arch("2ag"), 3);
  for (auto& [name, t] : m.params)
    if (name.starts_with("headB/")) std::fill(t.data().begin(), t.data().end(), 0.0f);
  const Tensor<float> ref = eval_logits(m.params, m.config, x);
  network::ParamSet<float> pb = m.params, pa = m.params;
  std::uint64_t key = 50;
  for (auto& [name, t] : pb)
    if (name.starts_with("gateB/")) t = add(t, random_tensor<float>(t.shape(), ++key));
  for (auto& [name, t] : pa)
    if (name.starts_with("gateA/")) t = add(t, random_tensor<float>(t.shape(), ++key));
  const double diff_b = max_abs_diff(ref, eval_logits(pb, m.config, x));
  const double diff_a = max_abs_diff(ref, eval_logits(pa, m.config, x));
  o.require(diff_b == 0.0, "gate disjointness");
  o.require(diff_a > 0.0, "decoder A gates influence the output");
  o.detail << "gate-B perturbation max abs diff " << diff_b << " (gate-A control " << diff_a << ")";
}

void schedule(Outcome& o) {
  optim::ScheduleConfig s;
  s.total_steps = 1000;
  s.max_lr = 3e-3;
  const std::size_t peak = 300;
  const double e0 = std::abs(optim::onecycle_lr(0, s) - s.max_lr / s.div_factor);
  const double ep = std::abs(optim::onecycle_lr(peak, s) - s.max_lr);
  const double ee = std::abs(optim::onecycle_lr(s.total_steps, s) - s.max_lr / s.final_div_factor);
  o.require(e0 <= 1e-12 && ep <= 1e-12 && ee <= 1e-12, "onecycle boundaries");
  double worst = std::max({e0, ep, ee});
  for (std::size_t i = 1; i < s.total_steps; ++i) {
    const double a = optim::onecycle_lr(i - 1, s), b = optim::onecycle_lr(i, s);
    if ((i <= peak && b < a) || (i > peak && b > a)) o.require(false, "onecycle monotone phases");
  }

  optim::ScheduleConfig c;
  c.kind = optim::ScheduleKind::kCawr;
  c.max_lr = 1e-3;
  c.min_lr = 1e-6;
  c.t0 = 10;
  c.total_steps = 1000;
  std::size_t restarts = 0;
  for (std::size_t mult : {1, 2}) {
    c.t_mult = mult;
    std::size_t boundary = 0, len = c.t0;
    while (boundary <= 600) {
      const double e = std::abs(optim::cawr_lr(boundary, c) - c.max_lr);
      worst = std::max(worst, e);
      o.require(e <= 1e-12, "cawr restart at " + std::to_string(boundary) + " (T_mult " + std::to_string(mult) + ")");
      o.require(optim::cawr_lr(boundary + len - 1, c) < c.max_lr * 0.1, "cawr decays within a cycle");
      ++restarts;
      boundary += len;
      len *= mult;
    }
  }
  o.detail << "max boundary error " << worst << " over " << restarts << " cawr restarts";
}

void optimizer(Outcome& o) {
  using PS = network::ParamSet<double>;
  optim::AdamWConfig hp;  // 0.9, 0.999, 1e-8, 1e-4
  PS theta{{"w", Tensor<double>({1}, 0.5)}};
  optim::AdamWState<double> st = optim::make_adamw_state(theta, hp);
  const double lr = 1e-2;
  const double g[3] = {0.1, -0.2, 0.3};
  for (double gi : g) optim::adamw_step(theta, PS{{"w", Tensor<double>({1}, gi)}}, st, lr);

  // Hand trace, step by step.
  double t = 0.5, m = 0.0, v = 0.0, vmax = 0.0;
  m = 0.9 * m + 0.1 * 0.1;    // 0.01
  v = 0.999 * v + 0.001 * 0.01;  // 1e-5
  vmax = std::max(vmax, v);
  t = t - lr * (m / 0.1) / (std::sqrt(vmax / 0.001) + 1e-8) - lr * 1e-4 * t;
  m = 0.9 * m + 0.1 * -0.2;
  v = 0.999 * v + 0.001 * 0.04;
  vmax = std::max(vmax, v);
  t = t - lr * (m / (1 - 0.81)) / (std::sqrt(vmax / (1 - 0.998001)) + 1e-8) - lr * 1e-4 * t;
  m = 0.9 * m + 0.1 * 0.3;
  v = 0.999 * v + 0.001 * 0.09;
  vmax = std::max(vmax, v);
  t = t - lr * (m / (1 - 0.729)) / (std::sqrt(vmax / (1 - 0.997002999)) + 1e-8) - lr * 1e-4 * t;
  const double trace_err = std::abs(theta.at("w")[0] - t);
  o.require(trace_err <= 1e-12, "hand trace");

  // v_max never decreases, including when gradients shrink.
  PS p{{"a", random_tensor({3, 4}, 1)}, {"b", random_tensor({5}, 2)}};
  optim::AdamWState<double> s2 = optim::make_adamw_state(p, hp);
  bool monotone = true;
  for (std::uint64_t k = 0; k < 1000; ++k) {
    const double amp = (k / 100) % 2 == 0 ? 1.0 : 1e-3;
    PS grads{{"a", random_tensor({3, 4}, 10 + 2 * k, -amp, amp)}, {"b", random_tensor({5}, 11 + 2 * k, -amp, amp)}};
    const PS prev = s2.v_max;
    optim::adamw_step(p, grads, s2, 1e-3);
    for (const auto& [name, vm] : s2.v_max)
      for (std::size_t i = 0; i < vm.numel(); ++i)
        monotone = monotone && vm[i] >= prev.at(name)[i] && vm[i] >= s2.v.at(name)[i];
  }
  o.require(monotone, "v_max monotonicity");

  // With zero gradients only the decoupled decay acts: theta <- theta * (1 - lr * wd).
  PS z{{"w", random_tensor({10}, 3, -5.0, 5.0)}};
  const PS z0 = z;
  optim::AdamWState<double> s3 = optim::make_adamw_state(z, hp);
  optim::adamw_step(z, PS{{"w", Tensor<double>({10})}}, s3, 0.1);
  double decay_err = 0.0;
  for (std::size_t i = 0; i < 10; ++i)
    decay_err = std::max(decay_err, std::abs(z.at("w")[i] / (z0.at("w")[i] * (1.0 - 0.1 * hp.weight_decay)) - 1.0));
  o.require(decay_err <= 1e-15, "decoupled decay");
  o.detail << "trace error " << trace_err << ", v_max monotone over 1000 steps, relative decay error " << decay_err;
}

bool python_check(const std::string& args) {
  const std::string cmd = std::string(DDUNET_PYTHON) + " " + DDUNET_SCRIPTS_DIR + "/nifti_reader.py " + args + " >/dev/null";
  return std::system(cmd.c_str()) == 0;
}

void determinism(Outcome& o) {
  // training runs
  const auto dir = scratch_dir("determinism");
  app::RunConfig c = app::resolve_config({app::parse_settings(
      "stages = 4,8\nconvs = 1,1\nphantom_count = 3\nphantom_size = 16\ncrop = 16\naugment_p = 0.5\n"
      "epochs = 2\nseed = 11\n",
      "determinism")});
  c.out_dir = dir.string();
  std::ostringstream log;
  const app::TrainOutcome first = app::train(c, log);
  const auto last1 = read_bytes(first.last), best1 = read_bytes(first.best), csv1 = read_bytes(dir / "metrics.csv");
  const app::TrainOutcome second = app::train(c, log);
  o.require(!last1.empty() && last1 == read_bytes(second.last) && best1 == read_bytes(second.best),
            "bit-identical checkpoints");
  o.require(csv1 == read_bytes(dir / "metrics.csv"), "identical metrics");

  // checkpoint round trip
  const app::Checkpoint ck = app::load_checkpoint(second.last);
  o.require(app::serialize(ck) == last1, "save-load-save byte identity");
  const data::Sample sample = data::preprocess_subject(data::phantom_subject(c.seed, 16, 0), {16, 16, 16});
  const Tensor<float> x = sample.image.reshaped({1, 4, 16, 16, 16});
  const Tensor<float> a = eval_logits(second.final_params, c.arch, x);
  const Tensor<float> b = eval_logits(ck.params, c.arch, x);
  o.require(std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(float)) == 0, "eval logits");

  // NIfTI
  const auto ndir = scratch_dir("nifti");
  const std::array<std::size_t, 3> dims{7, 5, 3};
  std::vector<float> ramp(105);
  std::vector<std::uint8_t> labels(105);
  for (std::size_t i = 0; i < 105; ++i) {
    ramp[i] = 0.5f * static_cast<float>(i);
    labels[i] = static_cast<std::uint8_t>(i % 4);
  }
  bool lossless = true, independent = true;
  for (const char* ext : {".nii", ".nii.gz"}) {
    const auto fp = ndir / (std::string("ramp") + ext);
    const auto lp = ndir / (std::string("labels") + ext);
    data::save_nifti(data::NiftiVolume::from_float32(dims, ramp), fp);
    data::save_nifti(data::NiftiVolume::from_uint8(dims, labels), lp);
    const auto rf = data::load_nifti(fp);
    const auto rl = data::load_nifti(lp);
    lossless = lossless && rf.dims == dims && rf.type == data::NiftiType::kFloat32 && rf.values<float>() == ramp &&
               rl.type == data::NiftiType::kUint8 && rl.values<float>() == std::vector<float>(labels.begin(), labels.end());
    independent = independent && python_check("check " + fp.string() + " 7 5 3 ramp") &&
                  python_check("check " + lp.string() + " 7 5 3 labels");
  }
  const auto foreign = ndir / "foreign.nii.gz";
  bool reads_foreign = python_check("write " + foreign.string());
  if (reads_foreign) {
    const auto v = data::load_nifti(foreign);
    const auto vals = v.values<float>();
    reads_foreign = v.dims == std::array<std::size_t, 3>{8, 6, 4} && vals.size() == 192;
    for (std::size_t i = 0; i < vals.size() && reads_foreign; ++i) reads_foreign = vals[i] == 0.5f * i;
  }
  o.require(lossless, "NIfTI lossless round trip");
  o.require(independent, "independent reader");
  o.require(reads_foreign, "reads independently written file");
  o.detail << "2 runs x " << first.steps << " steps bit-identical (" << last1.size()
           << " byte checkpoint), logits bit-exact after reload, NIfTI checked by an independent reader";
}

void preprocessing(Outcome& o) {
  // (x, y, z) = (240, 240, 155) is (D, H, W) = (155, 240, 240)
  const auto starts = centered_starts({155, 240, 240}, {128, 128, 128});
  o.require(starts == std::vector<std::size_t>{13, 56, 56}, "crop starts");

  data::Subject s;
  s.id = "brats_like";
  s.dims = {155, 240, 240};
  const std::size_t n = s.voxels();
  s.mask.assign(n, 0);
  for (std::size_t m = 0; m < data::kNumModalities; ++m) {
    Rng rng(8, Stream::kInit, m);
    s.modalities[m].resize(n);
    for (std::size_t i = 0; i < n; ++i) s.modalities[m][i] = static_cast<float>(100.0 * (m + 1) + 30.0 * rng.normal());
  }
  const std::uint8_t raw[4] = {0, 1, 2, 4};
  for (std::size_t i = 0; i < n; ++i) s.mask[i] = raw[(i / 7) % 4];
  const data::Sample sm = data::preprocess_subject(s, {128, 128, 128});
  o.require(sm.image.shape() == Shape{4, 128, 128, 128} && sm.target.shape() == Shape{4, 128, 128, 128}, "shapes");

  double worst_mean = 0.0, worst_std = 0.0, worst_pos = 0.0;
  const std::size_t V = 128 * 128 * 128;
  for (std::size_t m = 0; m < 4; ++m) {
    long double sum = 0.0L, sq = 0.0L, osum = 0.0L, osq = 0.0L;
    for (std::size_t i = 0; i < V; ++i) {
      const double v = sm.image[m * V + i];
      sum += v;
      sq += static_cast<long double>(v) * v;
    }
    const double mean = static_cast<double>(sum / V);
    const double sd = std::sqrt(static_cast<double>(sq / V) - mean * mean);
    worst_mean = std::max(worst_mean, std::abs(mean));
    worst_std = std::max(worst_std, std::abs(sd - 1.0));
    // the crop window of the raw volume, normalized independently
    for (std::size_t d = 0; d < 128; ++d)
      for (std::size_t h = 0; h < 128; ++h)
        for (std::size_t w = 0; w < 128; ++w) {
          const double v = s.modalities[m][((d + 13) * 240 + h + 56) * 240 + w + 56];
          osum += v;
          osq += static_cast<long double>(v) * v;
        }
    const double omean = static_cast<double>(osum / V);
    const double osd = std::sqrt(static_cast<double>(osq / V) - omean * omean);
    for (std::size_t i : {std::size_t{0}, V / 3, V - 1}) {
      const std::size_t d = i / (128 * 128), h = (i / 128) % 128, w = i % 128;
      const double raw_v = s.modalities[m][((d + 13) * 240 + h + 56) * 240 + w + 56];
      worst_pos = std::max(worst_pos, std::abs(sm.image[m * V + i] - (raw_v - omean) / osd));
    }
  }
  o.require(worst_mean < 1e-4 && worst_std < 1e-3, "z-score statistics");
  o.require(worst_pos < 1e-4, "crop window alignment");

  const auto remapped = data::remap_labels(s.mask);
  const bool no_four = std::find(remapped.begin(), remapped.end(), 4) == remapped.end();
  bool target_ok = data::is_one_hot(sm.target);
  for (std::size_t d = 0; d < 128 && target_ok; d += 17)
    for (std::size_t h = 0; h < 128; h += 13)
      for (std::size_t w = 0; w < 128; ++w) {
        const std::uint8_t r = s.mask[((d + 13) * 240 + h + 56) * 240 + w + 56];
        const std::size_t cls = r == 4 ? 3 : r;
        target_ok = target_ok && sm.target[(cls * 128 + d) * 128 * 128 + h * 128 + w] == 1.0f;
      }
  o.require(no_four && target_ok, "label remap");

  const data::Sample small = data::preprocess_subject(data::phantom_subject(0, 32, 0), {32, 32, 32});
  std::size_t valid = 0, flips = 0, rotations = 0;
  for (std::uint64_t k = 0; k < 1000; ++k) {
    data::AugmentConfig cfg;
    cfg.probability = k % 2 == 0 ? 0.2 : 0.9;
    Rng rng = data::augment_rng(21, k % 7, k);
    Rng peek = rng;
    const data::AugmentPlan plan = data::draw_plan(peek, cfg);
    flips += plan.flip;
    rotations += plan.rotate;
    const data::Sample a = data::augment(small, rng, cfg);
    valid += a.image.shape() == small.image.shape() && data::is_one_hot(a.target);
  }
  o.require(valid == 1000, "one-hot validity under augmentation");
  o.detail << "starts (56,56,13), |mean| " << worst_mean << ", |std-1| " << worst_std << ", " << valid
           << "/1000 augmented targets one-hot (" << flips << " flips, " << rotations << " rotations)";
}

}  // namespace

// Optional argument: run only the criteria whose name contains it.
int main(int argc, char** argv) {
  const std::string only = argc > 1 ? argv[1] : "";
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria = {
      {"gradient suite", gradient_suite},
      {"convolution oracle", conv_oracle},
      {"loss oracle", loss_oracle},
      {"metrics oracle", metrics_oracle},
      {"overfit smoke test", overfit},
      {"variant matrix", variant_matrix},
      {"schedule conformance", schedule},
      {"optimizer conformance", optimizer},
      {"determinism and persistence", determinism},
      {"preprocessing conformance", preprocessing},
  };
  int failed = 0;
  std::size_t ran = 0;
  for (const auto& [name, check] : criteria) {
    if (name.find(only) == std::string::npos) continue;
    ++ran;
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      check(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " [exception: " << e.what() << "]";
    }
    failed += !o.pass;
    std::printf("%s  %-28s %s  (%.1f s)\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.str().c_str(),
                seconds_since(t0));
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", ran - failed, ran);
  return failed == 0 ? 0 : 1;
}
