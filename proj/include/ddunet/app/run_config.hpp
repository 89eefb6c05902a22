#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ddunet/network/config.hpp"
#include "ddunet/objectives/losses.hpp"
#include "ddunet/optim/adamw.hpp"
#include "ddunet/optim/schedule.hpp"

namespace ddunet::app {

// Bad command-line usage or configuration (exit code 1).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct RunConfig {
  // model
  std::string variant = "2ag";
  network::ArchitectureConfig arch;
  // loss
  objectives::LossConfig loss;
  // optimizer and schedule; schedule.total_steps and schedule.t0 are derived at train time
  optim::AdamWConfig adamw;
  optim::ScheduleConfig schedule;
  std::size_t cawr_t0_epochs = 10;
  // data
  std::string dataset;  // empty: generate phantoms in memory
  std::size_t phantom_count = 8;
  std::size_t phantom_size = 32;
  std::array<std::size_t, 3> crop{128, 128, 128};
  double split_ratio = 0.75;
  bool augment = true;
  double augment_p = 0.2;
  // run
  std::uint64_t seed = 0;
  std::size_t epochs = 50;
  std::size_t batch_size = 1;
  std::size_t eval_every = 1;
  std::string out_dir = "runs/default";
};

using Setting = std::pair<std::string, std::string>;

// Every key in canonical order.
const std::vector<std::string>& config_keys();

// Parses flat `key = value` text with `#` comments. Unknown keys and malformed
// lines throw UsageError naming `origin` and the line number.
std::vector<Setting> parse_settings(const std::string& text, const std::string& origin);

// "key=value" as given to --set.
Setting parse_assignment(const std::string& assignment);

// DDUNET_<KEY> environment overrides, e.g. DDUNET_MAX_LR=3e-4.
std::vector<Setting> environment_settings();

// Applies layers in order (later wins). A `variant` from any layer is applied
// first so that explicit architecture keys refine the preset.
RunConfig resolve_config(const std::vector<std::vector<Setting>>& layers);

// Canonical text listing every key; resolve_config(parse_settings(to_text(c))) == c.
std::string to_text(const RunConfig& config);

// Throws UsageError for out-of-range values.
void validate(const RunConfig& config);

}  // namespace ddunet::app
