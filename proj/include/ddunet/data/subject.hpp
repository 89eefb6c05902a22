#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ddunet/engine/tensor.hpp"

namespace ddunet::data {

inline constexpr std::size_t kNumModalities = 4;
inline constexpr std::array<const char*, kNumModalities> kModalityNames{"t1", "t1ce", "t2", "flair"};

// kRawBrats masks use {0,1,2,4}; kRemapped masks use {0,1,2,3}.
enum class LabelConvention { kRawBrats, kRemapped };

// Volumes are row-major (D, H, W) with W fastest, i.e. NIfTI (x, y, z) reversed.
struct Subject {
  std::string id;
  std::array<std::size_t, 3> dims{};
  std::array<std::vector<float>, kNumModalities> modalities;
  std::vector<std::uint8_t> mask;
  LabelConvention labels = LabelConvention::kRawBrats;

  std::size_t voxels() const { return dims[0] * dims[1] * dims[2]; }
  void validate() const;
};

// image: (4, D, H, W) normalized intensities. target: (4, D, H, W) one-hot.
struct Sample {
  Tensor<float> image;
  Tensor<float> target;
};

// {0,1,2,4} -> {0,1,2,3}. Any other raw value throws DataError.
std::vector<std::uint8_t> remap_labels(const std::vector<std::uint8_t>& raw);
// {0,1,2,3} -> {0,1,2,4}.
std::vector<std::uint8_t> unmap_labels(const std::vector<std::uint8_t>& remapped);

std::vector<std::uint8_t> remapped_mask(const Subject& subject);

// Centered crop (start = floor((dim - target) / 2)), per-modality z-score over
// the cropped volume with std guarded at 1e-6, label remap and one-hot encoding.
Sample preprocess_subject(const Subject& subject, std::array<std::size_t, 3> crop_to = {128, 128, 128});

Tensor<float> one_hot(const std::vector<std::uint8_t>& labels, std::array<std::size_t, 3> dims);

// True when every voxel of `target` holds exactly one 1 and zeros elsewhere.
bool is_one_hot(const Tensor<float>& target);

// <dir>/<id>_{t1,t1ce,t2,flair,seg}.nii(.gz), where <id> is the directory name.
Subject load_subject(const std::filesystem::path& dir);
void save_subject(const Subject& subject, const std::filesystem::path& root);

// Subject directories under `root`, sorted by name.
std::vector<std::filesystem::path> list_subjects(const std::filesystem::path& root);

}  // namespace ddunet::data
