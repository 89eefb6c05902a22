#include "ddunet/app/run_config.hpp"

#include <charconv>
#include <cstdlib>
#include <functional>
#include <map>
#include <sstream>

#include "ddunet/engine/error.hpp"

namespace ddunet::app {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

std::string fmt(std::uint64_t v) { return std::to_string(v); }

std::string fmt_list(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& what) {
  throw UsageError("invalid value '" + value + "' for '" + key + "': expected " + what);
}

double to_double(const std::string& key, const std::string& value) {
  double v = 0.0;
  const auto r = std::from_chars(value.data(), value.data() + value.size(), v);
  if (r.ec != std::errc() || r.ptr != value.data() + value.size()) bad_value(key, value, "a number");
  return v;
}

std::uint64_t to_uint(const std::string& key, const std::string& value) {
  std::uint64_t v = 0;
  const auto r = std::from_chars(value.data(), value.data() + value.size(), v);
  if (r.ec != std::errc() || r.ptr != value.data() + value.size()) bad_value(key, value, "a non-negative integer");
  return v;
}

std::vector<std::size_t> to_list(const std::string& key, const std::string& value) {
  std::vector<std::size_t> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_uint(key, trim(item)));
  if (out.empty()) bad_value(key, value, "a comma-separated list of integers");
  return out;
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  bad_value(key, value, "true or false");
}

struct Entry {
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
};

template <typename F>
auto wrap_enum(F parse) {
  return [parse](const std::string& key, const std::string& value) {
    try {
      return parse(value);
    } catch (const ShapeError& e) {
      throw UsageError(key + ": " + e.what());
    }
  };
}

#define DOUBLE_FIELD(key, member) \
  {key, {[](const RunConfig& c) { return fmt(c.member); }, [](RunConfig& c, const std::string& k, const std::string& v) { c.member = to_double(k, v); }}}
#define UINT_FIELD(key, member) \
  {key, {[](const RunConfig& c) { return fmt(static_cast<std::uint64_t>(c.member)); }, [](RunConfig& c, const std::string& k, const std::string& v) { c.member = to_uint(k, v); }}}

const std::vector<std::pair<std::string, Entry>>& entries() {
  static const std::vector<std::pair<std::string, Entry>> table{
      {"variant",
       {[](const RunConfig& c) { return c.variant; },
        [](RunConfig& c, const std::string& k, const std::string& v) {
          c.arch = wrap_enum(network::preset)(k, v);
          c.variant = v;
        }}},
      UINT_FIELD("in_channels", arch.in_channels),
      UINT_FIELD("num_classes", arch.num_classes),
      {"stages",
       {[](const RunConfig& c) { return fmt_list(c.arch.stage_channels); },
        [](RunConfig& c, const std::string& k, const std::string& v) { c.arch.stage_channels = to_list(k, v); }}},
      {"convs",
       {[](const RunConfig& c) { return fmt_list(c.arch.convs_per_stage); },
        [](RunConfig& c, const std::string& k, const std::string& v) { c.arch.convs_per_stage = to_list(k, v); }}},
      UINT_FIELD("decoders", arch.decoders),
      {"attention",
       {[](const RunConfig& c) { return network::to_string(c.arch.attention); },
        [](RunConfig& c, const std::string& k, const std::string& v) {
          c.arch.attention = wrap_enum(network::parse_attention)(k, v);
        }}},
      {"gating",
       {[](const RunConfig& c) { return network::to_string(c.arch.gating); },
        [](RunConfig& c, const std::string& k, const std::string& v) {
          c.arch.gating = wrap_enum(network::parse_gating)(k, v);
        }}},
      {"downsample",
       {[](const RunConfig& c) { return network::to_string(c.arch.downsample); },
        [](RunConfig& c, const std::string& k, const std::string& v) {
          c.arch.downsample = wrap_enum(network::parse_downsample)(k, v);
        }}},
      DOUBLE_FIELD("dropout_small", arch.dropout.rate_small),
      DOUBLE_FIELD("dropout_medium", arch.dropout.rate_medium),
      DOUBLE_FIELD("dropout_large", arch.dropout.rate_large),
      DOUBLE_FIELD("lambda_dice", loss.lambda_dice),
      DOUBLE_FIELD("lambda_focal", loss.lambda_focal),
      DOUBLE_FIELD("focal_gamma", loss.gamma),
      DOUBLE_FIELD("focal_alpha", loss.alpha),
      DOUBLE_FIELD("dice_smooth", loss.dice_smooth),
      DOUBLE_FIELD("prob_clamp", loss.prob_clamp),
      {"schedule",
       {[](const RunConfig& c) { return optim::to_string(c.schedule.kind); },
        [](RunConfig& c, const std::string& k, const std::string& v) {
          c.schedule.kind = wrap_enum(optim::parse_schedule)(k, v);
        }}},
      DOUBLE_FIELD("max_lr", schedule.max_lr),
      DOUBLE_FIELD("pct_start", schedule.pct_start),
      DOUBLE_FIELD("div_factor", schedule.div_factor),
      DOUBLE_FIELD("final_div_factor", schedule.final_div_factor),
      UINT_FIELD("cawr_t0", cawr_t0_epochs),
      UINT_FIELD("cawr_t_mult", schedule.t_mult),
      DOUBLE_FIELD("min_lr", schedule.min_lr),
      DOUBLE_FIELD("weight_decay", adamw.weight_decay),
      DOUBLE_FIELD("beta1", adamw.beta1),
      DOUBLE_FIELD("beta2", adamw.beta2),
      DOUBLE_FIELD("adam_eps", adamw.eps),
      {"dataset",
       {[](const RunConfig& c) { return c.dataset; },
        [](RunConfig& c, const std::string&, const std::string& v) { c.dataset = v; }}},
      UINT_FIELD("phantom_count", phantom_count),
      UINT_FIELD("phantom_size", phantom_size),
      {"crop",
       {[](const RunConfig& c) { return fmt_list({c.crop[0], c.crop[1], c.crop[2]}); },
        [](RunConfig& c, const std::string& k, const std::string& v) {
          const auto l = to_list(k, v);
          if (l.size() == 1) {
            c.crop = {l[0], l[0], l[0]};
          } else if (l.size() == 3) {
            c.crop = {l[0], l[1], l[2]};
          } else {
            bad_value(k, v, "one extent or three comma-separated extents");
          }
        }}},
      DOUBLE_FIELD("split_ratio", split_ratio),
      {"augment",
       {[](const RunConfig& c) { return std::string(c.augment ? "true" : "false"); },
        [](RunConfig& c, const std::string& k, const std::string& v) { c.augment = to_bool(k, v); }}},
      DOUBLE_FIELD("augment_p", augment_p),
      UINT_FIELD("seed", seed),
      UINT_FIELD("epochs", epochs),
      UINT_FIELD("batch_size", batch_size),
      UINT_FIELD("eval_every", eval_every),
      {"out_dir",
       {[](const RunConfig& c) { return c.out_dir; },
        [](RunConfig& c, const std::string&, const std::string& v) { c.out_dir = v; }}},
  };
  return table;
}

#undef DOUBLE_FIELD
#undef UINT_FIELD

const Entry& entry(const std::string& key) {
  for (const auto& [k, e] : entries()) {
    if (k == key) return e;
  }
  throw UsageError("unknown config key '" + key + "'");
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> out;
    for (const auto& [k, e] : entries()) out.push_back(k);
    return out;
  }();
  return keys;
}

std::vector<Setting> parse_settings(const std::string& text, const std::string& origin) {
  std::vector<Setting> out;
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = origin + ":" + std::to_string(number);
    if (eq == std::string::npos) throw UsageError(where + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    try {
      entry(key);
    } catch (const UsageError& e) {
      throw UsageError(where + ": " + e.what());
    }
    out.emplace_back(key, trim(line.substr(eq + 1)));
  }
  return out;
}

Setting parse_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + assignment + "'");
  const std::string key = trim(assignment.substr(0, eq));
  entry(key);
  return {key, trim(assignment.substr(eq + 1))};
}

std::vector<Setting> environment_settings() {
  std::vector<Setting> out;
  for (const std::string& key : config_keys()) {
    std::string name = "DDUNET_";
    for (char ch : key) name += static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    if (const char* v = std::getenv(name.c_str())) out.emplace_back(key, trim(v));
  }
  return out;
}

RunConfig resolve_config(const std::vector<std::vector<Setting>>& layers) {
  RunConfig c;
  c.arch = network::preset(c.variant);
  for (const auto& layer : layers) {
    for (const auto& [k, v] : layer) {
      if (k == "variant") entry(k).set(c, k, v);
    }
  }
  for (const auto& layer : layers) {
    for (const auto& [k, v] : layer) {
      if (k != "variant") entry(k).set(c, k, v);
    }
  }
  validate(c);
  return c;
}

std::string to_text(const RunConfig& config) {
  std::string out;
  for (const auto& [k, e] : entries()) out += k + " = " + e.get(config) + "\n";
  return out;
}

void validate(const RunConfig& c) {
  try {
    c.arch.validate();
    c.loss.validate();
    optim::ScheduleConfig s = c.schedule;
    s.total_steps = 1;
    s.t0 = c.cawr_t0_epochs;
    s.validate();
  } catch (const ShapeError& e) {
    throw UsageError(std::string("invalid configuration: ") + e.what());
  }
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw UsageError("invalid configuration: " + msg);
  };
  require(c.adamw.beta1 >= 0.0 && c.adamw.beta1 < 1.0, "beta1 must lie in [0, 1)");
  require(c.adamw.beta2 >= 0.0 && c.adamw.beta2 < 1.0, "beta2 must lie in [0, 1)");
  require(c.adamw.eps > 0.0, "adam_eps must be > 0");
  require(c.adamw.weight_decay >= 0.0, "weight_decay must be >= 0");
  require(c.split_ratio > 0.0 && c.split_ratio <= 1.0, "split_ratio must lie in (0, 1]");
  require(c.augment_p >= 0.0 && c.augment_p <= 1.0, "augment_p must lie in [0, 1]");
  require(c.batch_size >= 1, "batch_size must be >= 1");
  require(c.eval_every >= 1, "eval_every must be >= 1");
  require(c.phantom_count >= 1, "phantom_count must be >= 1");
  require(c.crop[0] > 0 && c.crop[1] > 0 && c.crop[2] > 0, "crop extents must be positive");
  require(!c.out_dir.empty(), "out_dir must not be empty");
}

}  // namespace ddunet::app
