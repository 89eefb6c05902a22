#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace ddunet::data {

enum class NiftiType : std::int16_t {
  kUint8 = 2,
  kInt16 = 4,
  kInt32 = 8,
  kFloat32 = 16,
  kFloat64 = 64,
};

std::size_t element_size(NiftiType type);
std::string to_string(NiftiType type);

// Single-file NIfTI-1 volume. `dims` are in file order (x fastest) and
// `bytes` holds the little-endian payload exactly as stored.
struct NiftiVolume {
  std::array<std::size_t, 3> dims{1, 1, 1};
  NiftiType type = NiftiType::kFloat32;
  std::vector<std::uint8_t> bytes;
  std::array<float, 3> spacing{1.0f, 1.0f, 1.0f};
  float scl_slope = 0.0f;
  float scl_inter = 0.0f;
  std::size_t data_offset = 352;
  bool gzip = false;

  std::size_t numel() const { return dims[0] * dims[1] * dims[2]; }

  // Voxel values with the scale slope and intercept applied when the slope is nonzero.
  template <typename T>
  std::vector<T> values() const;

  static NiftiVolume from_float32(std::array<std::size_t, 3> dims, std::span<const float> voxels);
  static NiftiVolume from_uint8(std::array<std::size_t, 3> dims, std::span<const std::uint8_t> voxels);
  static NiftiVolume from_int16(std::array<std::size_t, 3> dims, std::span<const std::int16_t> voxels);
};

// Reads .nii or .nii.gz. Throws DataError on bad magic, unsupported datatype
// or a truncated payload.
NiftiVolume load_nifti(const std::filesystem::path& path);

// Writes a minimal single-file header plus payload; gzip when the path ends in ".gz".
void save_nifti(const NiftiVolume& volume, const std::filesystem::path& path);

}  // namespace ddunet::data
