#include "ddunet/data/phantom.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "ddunet/engine/error.hpp"
#include "ddunet/engine/rng.hpp"

namespace ddunet::data {
namespace {

// Base intensity per modality (rows) and label (columns).
constexpr double kBase[kNumModalities][4] = {
    {1.0, 0.55, 0.80, 0.90},
    {1.0, 0.70, 0.95, 2.10},
    {1.0, 1.70, 1.90, 1.30},
    {1.0, 1.45, 2.20, 1.55},
};
constexpr double kNoise = 0.05;
constexpr double kBias = 0.08;

}  // namespace

std::string phantom_id(std::size_t index) {
  char id[32];
  std::snprintf(id, sizeof(id), "phantom_%03zu", index);
  return id;
}

Subject phantom_subject(std::uint64_t seed, std::size_t size, std::size_t index) {
  if (size < kMinPhantomSize) {
    throw ShapeError("phantom size " + std::to_string(size) + " is below the minimum of " +
                     std::to_string(kMinPhantomSize));
  }
  Rng rng(seed, Stream::kPhantom, index);
  const double n = static_cast<double>(size);
  double center[3];
  double axes[3];
  double phase[3];
  for (int a = 0; a < 3; ++a) center[a] = n / 2.0 + rng.uniform(-0.1, 0.1) * n;
  for (int a = 0; a < 3; ++a) axes[a] = rng.uniform(0.22, 0.32) * n;
  for (int a = 0; a < 3; ++a) phase[a] = rng.uniform(0.0, 2.0 * std::numbers::pi);

  Subject s;
  s.id = phantom_id(index);
  s.dims = {size, size, size};
  s.labels = LabelConvention::kRemapped;
  const std::size_t vox = size * size * size;
  s.mask.resize(vox);
  for (auto& m : s.modalities) m.resize(vox);

  std::size_t i = 0;
  for (std::size_t d = 0; d < size; ++d) {
    for (std::size_t h = 0; h < size; ++h) {
      for (std::size_t w = 0; w < size; ++w, ++i) {
        const double p[3] = {static_cast<double>(d), static_cast<double>(h), static_cast<double>(w)};
        double r2 = 0.0;
        for (int a = 0; a < 3; ++a) r2 += (p[a] - center[a]) * (p[a] - center[a]) / (axes[a] * axes[a]);
        const double r = std::sqrt(r2);
        std::uint8_t label = 0;
        if (r < 0.35) {
          label = 3;
        } else if (r < 0.65) {
          label = 1;
        } else if (r < 1.0) {
          label = 2;
        }
        s.mask[i] = label;
        double bias = 0.0;
        for (int a = 0; a < 3; ++a) bias += std::sin(2.0 * std::numbers::pi * p[a] / n + phase[a]);
        for (std::size_t m = 0; m < kNumModalities; ++m) {
          s.modalities[m][i] = static_cast<float>(kBase[m][label] + kBias * bias / 3.0 + kNoise * rng.normal());
        }
      }
    }
  }
  return s;
}

std::vector<Subject> generate_phantom(std::uint64_t seed, std::size_t size, std::size_t count) {
  std::vector<Subject> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(phantom_subject(seed, size, i));
  return out;
}

}  // namespace ddunet::data
