#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "ddunet/app/run_config.hpp"
#include "ddunet/data/subject.hpp"
#include "ddunet/network/model.hpp"
#include "ddunet/objectives/metrics.hpp"

namespace ddunet::app {

// Subjects addressed by index; loaded lazily so full-size datasets need not fit in memory.
struct Dataset {
  std::vector<std::string> ids;
  std::function<data::Subject(std::size_t)> load;
  bool phantom = false;
  std::string source;
};

Dataset open_dataset(const RunConfig& config);

// Crop extents used for a dataset. Phantom cubes smaller than the configured
// crop are used whole.
std::array<std::size_t, 3> effective_crop(const RunConfig& config, const Dataset& dataset);

// Throws ShapeError when the crop does not suit the architecture.
void check_input_extents(const network::ArchitectureConfig& arch, const std::array<std::size_t, 3>& crop);

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

SplitIndices split_indices(const RunConfig& config, const Dataset& dataset);

struct MetricsRow {
  std::size_t epoch = 0;
  std::string split;
  double loss = 0.0;
  double lr = 0.0;
  objectives::ScoreSummary scores;
};

std::string csv_header();
std::string csv_row(const MetricsRow& row);

struct EvalResult {
  double loss = 0.0;
  objectives::ScoreSummary mean;
  std::vector<objectives::ScoreSummary> per_subject;
};

// Eval-mode forward per subject, no gradient recording; macro average over subjects.
EvalResult evaluate_subjects(const network::ParamSet<float>& params, const RunConfig& config, const Dataset& dataset,
                             const std::vector<std::size_t>& indices);

struct TrainOutcome {
  std::vector<MetricsRow> rows;
  std::size_t steps = 0;
  std::filesystem::path best;
  std::filesystem::path last;
  network::ParamSet<float> final_params;
};

// Full training run writing config.txt, split.txt, metrics.csv, best.ckpt and
// last.ckpt into config.out_dir. Progress goes to `log`.
TrainOutcome train(const RunConfig& config, std::ostream& log);

// Eval-mode softmax probabilities for one preprocessed sample; `attention`
// receives the final-level maps per decoder when non-null.
Tensor<float> predict_probabilities(const network::ParamSet<float>& params, const network::ArchitectureConfig& arch,
                                    const data::Sample& sample, std::vector<Tensor<float>>* attention = nullptr);

}  // namespace ddunet::app
