#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ddunet/network/model.hpp"
#include "ddunet/optim/adamw.hpp"

namespace ddunet::app {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary layout, all integers little-endian:
///   "DDUN" | u32 version | u64 config length | config text | u64 param count
///   | records | u8 has_optimizer [| u64 step | f64 beta1 beta2 eps wd
///   | m records | v records | v_max records] | u64 FNV-1a of everything before
/// record: u32 name length | name | u32 rank | u64 extents | u32 type (16 = f32) | raw data
/// Optimizer record lists carry the parameter count of the main section.
struct Checkpoint {
  std::string config_text;
  network::ParamSet<float> params;
  std::optional<optim::AdamWState<float>> optimizer;
};

std::vector<std::uint8_t> serialize(const Checkpoint& ckpt);
// Throws DataError on bad magic, version, checksum or truncation.
Checkpoint deserialize(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ddunet::app
