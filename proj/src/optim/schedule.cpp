#include "ddunet/optim/schedule.hpp"

#include <cmath>
#include <numbers>

#include "ddunet/engine/error.hpp"

namespace ddunet::optim {
namespace {

// Moves from `start` (pct = 0) to `end` (pct = 1) along half a cosine.
double cosine_anneal(double start, double end, double pct) {
  return end + (start - end) / 2.0 * (1.0 + std::cos(std::numbers::pi * pct));
}

}  // namespace

void ScheduleConfig::validate() const {
  if (total_steps == 0) throw ShapeError("schedule: total_steps must be >= 1");
  if (!(max_lr > 0.0)) throw ShapeError("schedule: max_lr must be > 0");
  if (!(pct_start > 0.0 && pct_start < 1.0)) throw ShapeError("schedule: pct_start must lie in (0, 1)");
  if (!(div_factor > 1.0) || !(final_div_factor > 1.0)) throw ShapeError("schedule: div factors must be > 1");
  if (t0 == 0) throw ShapeError("schedule: T0 must be >= 1");
  if (t_mult == 0) throw ShapeError("schedule: T_mult must be >= 1");
  if (!(min_lr >= 0.0 && min_lr <= max_lr)) throw ShapeError("schedule: min_lr must lie in [0, max_lr]");
}

double onecycle_lr(std::size_t step, const ScheduleConfig& cfg) {
  if (step > cfg.total_steps) {
    throw ShapeError("onecycle_lr: step " + std::to_string(step) + " beyond total_steps " +
                     std::to_string(cfg.total_steps));
  }
  const double initial = cfg.max_lr / cfg.div_factor;
  const double final_lr = cfg.max_lr / cfg.final_div_factor;
  const double total = static_cast<double>(cfg.total_steps);
  const double peak = cfg.pct_start * total;
  const double s = static_cast<double>(step);
  if (s <= peak) return cosine_anneal(initial, cfg.max_lr, s / peak);
  return cosine_anneal(cfg.max_lr, final_lr, (s - peak) / (total - peak));
}

double cawr_lr(std::size_t step, const ScheduleConfig& cfg) {
  std::size_t s = step;
  std::size_t cycle = cfg.t0;
  while (s >= cycle) {
    s -= cycle;
    cycle *= cfg.t_mult;
  }
  return cosine_anneal(cfg.max_lr, cfg.min_lr, static_cast<double>(s) / static_cast<double>(cycle));
}

double scheduled_lr(std::size_t step, const ScheduleConfig& cfg) {
  switch (cfg.kind) {
    case ScheduleKind::kOneCycle:
      return onecycle_lr(step, cfg);
    case ScheduleKind::kCawr:
      return cawr_lr(step, cfg);
    case ScheduleKind::kConstant:
      return cfg.max_lr;
  }
  return cfg.max_lr;
}

std::string to_string(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::kOneCycle:
      return "onecycle";
    case ScheduleKind::kCawr:
      return "cawr";
    case ScheduleKind::kConstant:
      return "constant";
  }
  return "?";
}

ScheduleKind parse_schedule(std::string_view s) {
  if (s == "onecycle") return ScheduleKind::kOneCycle;
  if (s == "cawr") return ScheduleKind::kCawr;
  if (s == "constant") return ScheduleKind::kConstant;
  throw ShapeError("schedule must be onecycle, cawr or constant; got '" + std::string(s) + "'");
}

}  // namespace ddunet::optim
