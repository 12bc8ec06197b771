#pragma once

#include <cstdint>

#include "tslm/autoencoder.hpp"
#include "tslm/decoder.hpp"
#include "tslm/encoder.hpp"
#include "tslm/error.hpp"
#include "tslm/optim.hpp"

namespace tslm {

// Shared knobs for the pipeline stages; defaults follow the desk-scale
// choices (the paper-scale counterparts are noted at the CLI).
struct PipelineConfig {
  std::int64_t d = 128;
  std::int64_t heads = 4;
  std::int64_t prototypes = 64;
  std::int64_t enc_blocks = 2;
  std::int64_t dec_blocks = 2;
  std::int64_t l_max = 24;  // canonical length; f = l_max / 4
  std::int64_t c1_channels = 32;
  std::int64_t c2_channels = 16;
  std::int64_t max_positions = 96;
  AdamWConfig optimizer;
  SamplingConfig sampling;
  double denoise_threshold = 0.0;  // Th
  std::uint64_t seed = 0;

  std::int64_t f() const { return l_max / 4; }

  void validate() const {
    if (d <= 0 || heads <= 0 || d % heads != 0) {
      throw ParameterError("config: d must be a positive multiple of heads");
    }
    if (l_max % 4 != 0) throw ParameterError("config: l_max must be divisible by 4");
  }

  AutoencoderConfig autoencoder() const {
    AutoencoderConfig cfg;
    cfg.canonical_length = l_max;
    cfg.c1_channels = c1_channels;
    cfg.c2_channels = c2_channels;
    cfg.embed_dim = d;
    return cfg;
  }

  EncoderConfig encoder(EncoderVariant variant = EncoderVariant::joint) const {
    EncoderConfig cfg;
    cfg.d = d;
    cfg.heads = heads;
    cfg.prototypes = prototypes;
    cfg.blocks = enc_blocks;
    cfg.max_positions = max_positions;
    cfg.variant = variant;
    return cfg;
  }

  DecoderConfig decoder() const {
    DecoderConfig cfg;
    cfg.blocks = dec_blocks;
    cfg.max_len = sampling.max_len;
    cfg.max_positions = sampling.max_len + 2;
    return cfg;
  }
};

}  // namespace tslm
