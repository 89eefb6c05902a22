#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace ddunet::network {

enum class AttentionMode {
  kNone,        // plain skip connections
  kShared,      // one gate per level, shared by every decoder (1AG)
  kPerDecoder,  // an independent gate per decoder per level (2AG)
};

enum class Gating {
  kSameLevel,  // gating signal is the decoder's upsampled features at the skip's resolution
  kOriginal,   // gating signal is the coarser, pre-upsample decoder features
};

enum class Downsample { kMaxPool, kStridedConv };

// Channel-dropout rate as a function of a block's output channels.
struct DropoutSchedule {
  double rate_small = 0.1;  // channels <= small_max
  double rate_medium = 0.2;  // channels <= medium_max
  double rate_large = 0.3;
  std::size_t small_max = 32;
  std::size_t medium_max = 128;

  double rate_for(std::size_t channels) const;
};

struct ArchitectureConfig {
  std::size_t in_channels = 4;
  std::size_t num_classes = 4;
  std::vector<std::size_t> stage_channels{16, 32, 64, 128, 256};
  std::vector<std::size_t> convs_per_stage{2, 2, 3, 3, 4};
  std::size_t decoders = 2;
  AttentionMode attention = AttentionMode::kPerDecoder;
  Gating gating = Gating::kSameLevel;
  Downsample downsample = Downsample::kMaxPool;
  DropoutSchedule dropout;

  std::size_t stages() const { return stage_channels.size(); }
  // Every input spatial extent must be a multiple of this.
  std::size_t spatial_divisor() const { return std::size_t{1} << (stages() - 1); }

  // Throws ShapeError describing the first violated constraint.
  void validate() const;
};

// Named variants: "unet", "1ag", "2ag", "2ag-original", "2ag-strided".
ArchitectureConfig preset(std::string_view name);

std::string to_string(AttentionMode m);
std::string to_string(Gating g);
std::string to_string(Downsample d);
AttentionMode parse_attention(std::string_view s);
Gating parse_gating(std::string_view s);
Downsample parse_downsample(std::string_view s);

char decoder_letter(std::size_t decoder);

}  // namespace ddunet::network
