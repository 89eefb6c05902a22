#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "ddunet/engine/rng.hpp"
#include "ddunet/engine/tape.hpp"
#include "ddunet/layers/layers.hpp"
#include "ddunet/network/model.hpp"
#include "ddunet/objectives/losses.hpp"
#include "ddunet/optim/adamw.hpp"

namespace testing_support {

using namespace ddunet;

template <typename T = double>
inline Tensor<T> random_tensor(const Shape& shape, std::uint64_t key, double lo = -1.0, double hi = 1.0) {
  Rng rng(1234, Stream::kInit, key);
  Tensor<T> t(shape);
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

// Random one-hot (N, C, D, H, W) target.
template <typename T = double>
inline Tensor<T> random_one_hot(const Shape& shape, std::uint64_t key) {
  Rng rng(99, Stream::kInit, key);
  Tensor<T> t(shape);
  const std::size_t N = shape[0], C = shape[1], V = t.numel() / (N * C);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t v = 0; v < V; ++v) t[(n * C + rng.below(C)) * V + v] = T(1);
  return t;
}

// Per-voxel softmax over channels computed directly from the definition.
inline Tensor<double> softmax_reference(const Tensor<double>& logits) {
  Tensor<double> p(logits.shape());
  const std::size_t N = logits.extent(0), C = logits.extent(1), V = logits.numel() / (N * C);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t v = 0; v < V; ++v) {
      double z = 0.0;
      for (std::size_t c = 0; c < C; ++c) z += std::exp(logits[(n * C + c) * V + v]);
      for (std::size_t c = 0; c < C; ++c) p[(n * C + c) * V + v] = std::exp(logits[(n * C + c) * V + v]) / z;
    }
  return p;
}

// A small architecture that keeps forward passes in the millisecond range.
inline network::ArchitectureConfig tiny_arch(const std::string& variant = "2ag") {
  network::ArchitectureConfig c = network::preset(variant);
  c.stage_channels = {4, 8, 16};
  c.convs_per_stage = {1, 1, 1};
  return c;
}

struct StepResult {
  double loss = 0.0;
  network::ForwardArtifacts<float> out;
};

// One train-mode forward, backward and AdamW update on (x, target).
inline StepResult train_step(network::Model<float>& model, optim::AdamWState<float>& opt, const Tensor<float>& x,
                             const Tensor<float>& target, double lr, std::uint64_t step = 0) {
  Tape<float> tape;
  const auto binding = network::bind_parameters(model.params, &tape);
  network::ForwardOptions fo;
  fo.mode = layers::Mode::kTrain;
  fo.capture_attention = true;
  fo.step = step;
  StepResult r;
  r.out = network::forward(binding, model.config, Var<float>(x), fo);
  const Var<float> loss = objectives::total_loss(layers::softmax_channels(r.out.logits), target);
  r.loss = loss.value()[0];
  const Gradients<float> grads = backward(tape, loss);
  network::ParamSet<float> g;
  for (const auto& [name, var] : binding) g.emplace(name, grads.of(var));
  optim::adamw_step(model.params, g, opt, lr);
  return r;
}

inline Tensor<float> eval_logits(const network::ParamSet<float>& params, const network::ArchitectureConfig& arch,
                                 const Tensor<float>& x) {
  return network::forward(network::bind_parameters<float>(params, nullptr), arch, Var<float>(x)).logits.value();
}

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("ddunet_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing_support
