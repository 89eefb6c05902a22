#pragma once

#include <cstddef>
#include <string>
#include <string_view>

namespace ddunet::optim {

enum class ScheduleKind { kOneCycle, kCawr, kConstant };

// All step counts are optimizer steps.
struct ScheduleConfig {
  ScheduleKind kind = ScheduleKind::kOneCycle;
  std::size_t total_steps = 1;
  double max_lr = 1e-3;
  // OneCycle
  double pct_start = 0.3;
  double div_factor = 25.0;
  double final_div_factor = 1e4;
  // Cosine annealing with warm restarts
  std::size_t t0 = 10;
  std::size_t t_mult = 2;
  double min_lr = 0.0;

  void validate() const;
};

// Cosine warm-up from max_lr/div_factor to max_lr over the first
// pct_start * total_steps steps, then cosine decay to max_lr/final_div_factor.
double onecycle_lr(std::size_t step, const ScheduleConfig& cfg);

// Cosine from max_lr to min_lr within each cycle; cycles last t0, t0*t_mult, ...
double cawr_lr(std::size_t step, const ScheduleConfig& cfg);

double scheduled_lr(std::size_t step, const ScheduleConfig& cfg);

std::string to_string(ScheduleKind k);
ScheduleKind parse_schedule(std::string_view s);

}  // namespace ddunet::optim
