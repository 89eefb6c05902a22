#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ddunet/engine/tape.hpp"
#include "ddunet/layers/layers.hpp"
#include "ddunet/network/config.hpp"

namespace ddunet::network {

// Named parameter tensors; ordered so iteration is deterministic.
template <typename T>
using ParamSet = std::map<std::string, Tensor<T>>;

// The same names bound to Vars for one forward pass.
template <typename T>
using ParamBinding = std::map<std::string, Var<T>>;

// One entry of the human-readable model description.
struct LayerSpec {
  std::string name;
  std::string kind;  // conv3d, group_norm, dropout, maxpool3d, transposed_conv3d, gate, concat
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t level = 0;  // resolution level, 0 = full resolution
  double dropout = 0.0;   // only for dropout entries
};

template <typename T>
struct Model {
  ArchitectureConfig config;
  ParamSet<T> params;
  std::vector<LayerSpec> layers;
};

struct ForwardOptions {
  layers::Mode mode = layers::Mode::kEval;
  bool capture_attention = false;
  std::uint64_t dropout_seed = 0;
  std::uint64_t step = 0;
  // When set, lowered to the smallest distance of any relu input from zero
  // and of any max-pool winner from its runner-up.
  double* kink_margin = nullptr;
};

template <typename T>
struct ForwardArtifacts {
  Var<T> logits;  // (N, num_classes, D, H, W)
  // attention[decoder][level], level 0 being the final (full-resolution)
  // decoder level. Empty unless capture_attention is set and gates exist.
  std::vector<std::vector<Var<T>>> attention;
};

// Parameter shapes implied by a config, in name order.
std::map<std::string, Shape> parameter_shapes(const ArchitectureConfig& config);

// Layer list implied by a config (independent of any parameter values).
std::vector<LayerSpec> describe_layers(const ArchitectureConfig& config);

template <typename T>
Model<T> build_model(const ArchitectureConfig& config, std::uint64_t seed);

// Leaves on `tape` when given, untracked constants otherwise.
template <typename T>
ParamBinding<T> bind_parameters(const ParamSet<T>& params, Tape<T>* tape);

template <typename T>
ForwardArtifacts<T> forward(const ParamBinding<T>& params, const ArchitectureConfig& config, const Var<T>& x,
                            const ForwardOptions& options = {});

template <typename T>
std::size_t count_parameters(const ParamSet<T>& params) {
  std::size_t n = 0;
  for (const auto& [name, t] : params) n += t.numel();
  return n;
}

// Multi-line text: config summary, layer list with dropout rates, parameter count.
std::string model_description(const ArchitectureConfig& config);

}  // namespace ddunet::network
