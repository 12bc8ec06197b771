#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tslm/autoencoder.hpp"
#include "tslm/rng.hpp"
#include "tslm/tensor.hpp"
#include "tslm/textrep.hpp"
#include "tslm/timeseries.hpp"

namespace tslm {

// Which modalities feed the encoder. text_only consumes the tagged prompt
// without the reprogrammed rows; timeseries_only consumes [CLS] plus the
// reprogrammed rows without the prompt text.
enum class EncoderVariant { joint, text_only, timeseries_only };

std::string to_string(EncoderVariant v);
EncoderVariant encoder_variant_from_string(const std::string& s);

struct EncoderConfig {
  std::int64_t d = 128;           // embedding width
  std::int64_t heads = 4;         // H, d % H == 0
  std::int64_t prototypes = 64;   // p, p < |V|
  std::int64_t blocks = 2;        // N_enc
  std::int64_t max_positions = 96;
  std::int64_t ff_multiplier = 2;
  EncoderVariant variant = EncoderVariant::joint;
};

struct AttentionHead {
  Tensor wq, wk, wv;  // each (d x d_h)
};

struct TransformerBlock {
  std::vector<AttentionHead> heads;
  Tensor wo;            // (d x d)
  Tensor ln1_g, ln1_b;  // pre-norm before attention
  Tensor ln2_g, ln2_b;  // pre-norm before feed-forward
  Tensor ff1_w, ff1_b;  // (d x ff*d)
  Tensor ff2_w, ff2_b;  // (ff*d x d)
};

struct EncoderOutput {
  Tensor matrix;  // (rows x d)

  Tensor cls() const { return slice_rows(matrix, 0, 1); }  // (1 x d)
  std::int64_t rows() const { return matrix.dim(0); }
};

// Eqs. 5-9: shared token embedding, learned positions, text prototypes
// E_p = P V, per-head reprogramming cross-attention, then bidirectional
// self-attention blocks over the concatenated rows.
class MultiModalEncoderModel {
 public:
  MultiModalEncoderModel(Vocabulary vocab, const EncoderConfig& config, Rng& rng);

  // (n x d): token embedding plus positional rows [0, n).
  Tensor embed_joint_text(const JointText& jt) const;
  // E_p = P V, shape (p x d).
  Tensor text_prototypes() const;
  // Cross-attention of the time-series rows against the prototypes; (f x d).
  Tensor reprogram(const Tensor& ts_emb) const;
  // Per-head attention matrices (softmax rows), for inspection/tests.
  std::vector<Tensor> reprogram_attention(const Tensor& ts_emb) const;

  // Full forward; the autoencoder runs frozen (no gradients flow into it).
  EncoderOutput encode_joint(const TimeSeries& series, const AutoencoderModel& ae) const;

  // Self-attention stack over arbitrary rows (also used by the caption path).
  Tensor run_blocks(const Tensor& rows) const;
  // Embedding + positions for a raw token-id sequence starting at position 0.
  Tensor embed_tokens_at(const std::vector<std::int64_t>& ids, std::int64_t first_position) const;

  const Vocabulary& vocab() const { return vocab_; }
  const EncoderConfig& config() const { return config_; }
  const Tensor& token_embedding() const { return token_embedding_; }

  std::vector<Tensor> parameters();
  std::vector<std::pair<std::string, Tensor>> named_tensors();

 private:
  Vocabulary vocab_;
  EncoderConfig config_;
  Tensor token_embedding_;  // (|V| x d), shared with decoders and caption path
  Tensor positional_;       // (max_positions x d)
  Tensor prototype_proj_;   // (p x |V|)
  std::vector<AttentionHead> reprogram_heads_;
  std::vector<TransformerBlock> blocks_;
};

// Shared helpers for decoder blocks as well.
TransformerBlock make_transformer_block(std::int64_t d, std::int64_t heads,
                                        std::int64_t ff_multiplier, Rng& rng);
// Multi-head attention: queries from `q_rows`, keys/values from `kv_rows`;
// optional additive mask (q x kv) applied to the scaled logits.
Tensor multi_head_attention(const std::vector<AttentionHead>& heads, const Tensor& wo,
                            const Tensor& q_rows, const Tensor& kv_rows, const Tensor* mask);
void collect_block_params(TransformerBlock& block, std::vector<Tensor>& out);
void collect_block_tensors(const std::string& prefix, TransformerBlock& block,
                           std::vector<std::pair<std::string, Tensor>>& out);

}  // namespace tslm
