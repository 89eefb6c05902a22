#include "ddunet/network/config.hpp"

#include "ddunet/engine/error.hpp"

namespace ddunet::network {

double DropoutSchedule::rate_for(std::size_t channels) const {
  if (channels <= small_max) return rate_small;
  if (channels <= medium_max) return rate_medium;
  return rate_large;
}

void ArchitectureConfig::validate() const {
  if (in_channels == 0) throw ShapeError("config: in_channels must be >= 1");
  if (num_classes < 2) throw ShapeError("config: num_classes must be >= 2");
  if (stage_channels.size() < 2) throw ShapeError("config: at least two stages are required");
  if (stage_channels.size() != convs_per_stage.size()) {
    throw ShapeError("config: stage_channels and convs_per_stage must have equal length");
  }
  for (std::size_t c : stage_channels) {
    if (c == 0) throw ShapeError("config: stage channel counts must be >= 1");
  }
  for (std::size_t n : convs_per_stage) {
    if (n == 0) throw ShapeError("config: every stage needs at least one convolution");
  }
  if (decoders != 1 && decoders != 2) throw ShapeError("config: decoders must be 1 or 2");
  if (attention == AttentionMode::kPerDecoder && decoders != 2) {
    throw ShapeError("config: per-decoder attention gates require two decoders");
  }
  for (double r : {dropout.rate_small, dropout.rate_medium, dropout.rate_large}) {
    if (!(r >= 0.0 && r < 1.0)) throw ShapeError("config: dropout rates must lie in [0, 1)");
  }
}

ArchitectureConfig preset(std::string_view name) {
  ArchitectureConfig c;
  if (name == "2ag") return c;
  if (name == "unet") {
    c.decoders = 1;
    c.attention = AttentionMode::kNone;
  } else if (name == "1ag") {
    c.attention = AttentionMode::kShared;
  } else if (name == "2ag-original") {
    c.gating = Gating::kOriginal;
  } else if (name == "2ag-strided") {
    c.downsample = Downsample::kStridedConv;
  } else {
    throw ShapeError("unknown architecture preset '" + std::string(name) +
                     "' (expected unet, 1ag, 2ag, 2ag-original, 2ag-strided)");
  }
  return c;
}

std::string to_string(AttentionMode m) {
  switch (m) {
    case AttentionMode::kNone:
      return "none";
    case AttentionMode::kShared:
      return "shared";
    case AttentionMode::kPerDecoder:
      return "per_decoder";
  }
  return "?";
}

std::string to_string(Gating g) { return g == Gating::kSameLevel ? "same_level" : "original"; }

std::string to_string(Downsample d) { return d == Downsample::kMaxPool ? "maxpool" : "strided_conv"; }

AttentionMode parse_attention(std::string_view s) {
  if (s == "none") return AttentionMode::kNone;
  if (s == "shared" || s == "1ag") return AttentionMode::kShared;
  if (s == "per_decoder" || s == "2ag") return AttentionMode::kPerDecoder;
  throw ShapeError("attention must be none, shared or per_decoder; got '" + std::string(s) + "'");
}

Gating parse_gating(std::string_view s) {
  if (s == "same_level") return Gating::kSameLevel;
  if (s == "original") return Gating::kOriginal;
  throw ShapeError("gating must be same_level or original; got '" + std::string(s) + "'");
}

Downsample parse_downsample(std::string_view s) {
  if (s == "maxpool") return Downsample::kMaxPool;
  if (s == "strided_conv") return Downsample::kStridedConv;
  throw ShapeError("downsample must be maxpool or strided_conv; got '" + std::string(s) + "'");
}

char decoder_letter(std::size_t decoder) { return static_cast<char>('A' + decoder); }

}  // namespace ddunet::network
