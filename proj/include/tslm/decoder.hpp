#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tslm/autoencoder.hpp"
#include "tslm/encoder.hpp"
#include "tslm/optim.hpp"
#include "tslm/timeseries.hpp"

namespace tslm {

struct SamplingConfig {
  std::int64_t captions = 3;  // K
  std::int64_t top_k = 50;
  double top_p = 0.95;
  double temperature = 0.95;
  std::int64_t max_len = 16;
  std::uint64_t seed = 0;
};

struct DecoderConfig {
  std::int64_t blocks = 2;  // N_dec
  std::int64_t max_len = 16;
  std::int64_t max_positions = 32;
};

struct DecoderBlock {
  std::vector<AttentionHead> self_heads;
  Tensor self_wo;
  Tensor ln_self_g, ln_self_b;
  std::vector<AttentionHead> cross_heads;
  Tensor cross_wo;
  Tensor ln_cross_g, ln_cross_b;
  Tensor ln_ff_g, ln_ff_b;
  Tensor ff1_w, ff1_b, ff2_w, ff2_b;
};

// Caption decoder: causal self-attention over the generated prefix,
// cross-attention over the encoder output X, feed-forward, and an LM head
// tied to the shared token embedding table.
class TslmModel {
 public:
  TslmModel(MultiModalEncoderModel encoder, const DecoderConfig& config, Rng& rng);

  const MultiModalEncoderModel& encoder() const { return encoder_; }
  MultiModalEncoderModel& encoder() { return encoder_; }
  const DecoderConfig& decoder_config() const { return dec_config_; }

  // Logits for every prefix position, shape (|prefix| x |V|).
  Tensor forward_logits(const std::vector<std::int64_t>& prefix_ids, const Tensor& x) const;
  // Next-token logits after the full prefix, shape (|V|,). Prefix must start
  // with [BOS].
  Tensor decode_logits(const std::vector<std::int64_t>& prefix_ids, const Tensor& x) const;

  std::vector<Tensor> parameters();  // encoder + decoder, shared tensors once
  std::vector<std::pair<std::string, Tensor>> named_tensors();

 private:
  MultiModalEncoderModel encoder_;
  DecoderConfig dec_config_;
  Tensor dec_positional_;  // (max_positions x d)
  std::vector<DecoderBlock> blocks_;
};

struct TslmTrainStats {
  std::vector<double> epoch_losses;
  std::int64_t truncated_captions = 0;
};

// Teacher-forced next-token training over [BOS] caption [EOS]; the frozen
// autoencoder supplies the embedding rows and is never updated.
TslmTrainStats train_tslm(TslmModel& model, const AutoencoderModel& ae,
                          const std::vector<CaptionedPair>& pairs, std::int64_t epochs,
                          std::int64_t batch, std::uint64_t seed,
                          const AdamWConfig& opt_config);

// Keeps the intersection of the top_k most probable tokens and the smallest
// top_p cumulative-mass prefix, then renormalizes. probs is a normalized
// rank-1 tensor over the vocabulary.
Tensor truncate_distribution(const Tensor& probs, std::int64_t top_k, double top_p);

// Temperature-scaled sampling through truncate_distribution until [EOS] or
// cfg.max_len tokens.
std::string sample_caption(const TimeSeries& series, const TslmModel& model,
                           const AutoencoderModel& ae, const SamplingConfig& cfg);

// K independent samples with derived child seeds.
std::vector<std::string> generate_captions(const TimeSeries& series, const TslmModel& model,
                                           const AutoencoderModel& ae,
                                           const SamplingConfig& cfg);

// Greedy decode (argmax at each step), used by overfit checks.
std::string greedy_caption(const TimeSeries& series, const TslmModel& model,
                           const AutoencoderModel& ae, std::int64_t max_len = 16);

}  // namespace tslm
