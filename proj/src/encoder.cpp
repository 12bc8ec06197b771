#include "tslm/encoder.hpp"

#include <cmath>

#include "tslm/error.hpp"

namespace tslm {

namespace {

Tensor init_weight(std::vector<std::int64_t> shape, std::int64_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return Tensor::rand_uniform(std::move(shape), -bound, bound, rng, /*requires_grad=*/true);
}

}  // namespace

std::string to_string(EncoderVariant v) {
  switch (v) {
    case EncoderVariant::joint: return "joint";
    case EncoderVariant::text_only: return "text";
    case EncoderVariant::timeseries_only: return "timeseries";
  }
  return "joint";
}

EncoderVariant encoder_variant_from_string(const std::string& s) {
  if (s == "joint") return EncoderVariant::joint;
  if (s == "text") return EncoderVariant::text_only;
  if (s == "timeseries") return EncoderVariant::timeseries_only;
  throw ParameterError("unknown encoder variant: " + s);
}

TransformerBlock make_transformer_block(std::int64_t d, std::int64_t heads,
                                        std::int64_t ff_multiplier, Rng& rng) {
  TransformerBlock block;
  const std::int64_t d_h = d / heads;
  for (std::int64_t h = 0; h < heads; ++h) {
    block.heads.push_back({init_weight({d, d_h}, d, rng), init_weight({d, d_h}, d, rng),
                           init_weight({d, d_h}, d, rng)});
  }
  block.wo = init_weight({d, d}, d, rng);
  block.ln1_g = Tensor::full({d}, 1.0, true);
  block.ln1_b = Tensor::zeros({d}, true);
  block.ln2_g = Tensor::full({d}, 1.0, true);
  block.ln2_b = Tensor::zeros({d}, true);
  const std::int64_t ff = ff_multiplier * d;
  block.ff1_w = init_weight({d, ff}, d, rng);
  block.ff1_b = Tensor::zeros({ff}, true);
  block.ff2_w = init_weight({ff, d}, ff, rng);
  block.ff2_b = Tensor::zeros({d}, true);
  return block;
}

Tensor multi_head_attention(const std::vector<AttentionHead>& heads, const Tensor& wo,
                            const Tensor& q_rows, const Tensor& kv_rows, const Tensor* mask) {
  const std::int64_t d_h = heads.front().wq.dim(1);
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(d_h));
  std::vector<Tensor> per_head;
  per_head.reserve(heads.size());
  for (const auto& head : heads) {
    Tensor q = matmul(q_rows, head.wq);
    Tensor k = matmul(kv_rows, head.wk);
    Tensor v = matmul(kv_rows, head.wv);
    Tensor logits = scale(matmul(q, transpose(k)), inv_scale);
    if (mask) logits = add(logits, *mask);
    per_head.push_back(matmul(softmax(logits, 1), v));
  }
  return matmul(concat_cols(per_head), wo);
}

void collect_block_params(TransformerBlock& block, std::vector<Tensor>& out) {
  for (auto& head : block.heads) {
    out.push_back(head.wq);
    out.push_back(head.wk);
    out.push_back(head.wv);
  }
  out.push_back(block.wo);
  out.push_back(block.ln1_g);
  out.push_back(block.ln1_b);
  out.push_back(block.ln2_g);
  out.push_back(block.ln2_b);
  out.push_back(block.ff1_w);
  out.push_back(block.ff1_b);
  out.push_back(block.ff2_w);
  out.push_back(block.ff2_b);
}

void collect_block_tensors(const std::string& prefix, TransformerBlock& block,
                           std::vector<std::pair<std::string, Tensor>>& out) {
  for (std::size_t h = 0; h < block.heads.size(); ++h) {
    out.emplace_back(prefix + ".h" + std::to_string(h) + ".wq", block.heads[h].wq);
    out.emplace_back(prefix + ".h" + std::to_string(h) + ".wk", block.heads[h].wk);
    out.emplace_back(prefix + ".h" + std::to_string(h) + ".wv", block.heads[h].wv);
  }
  out.emplace_back(prefix + ".wo", block.wo);
  out.emplace_back(prefix + ".ln1.g", block.ln1_g);
  out.emplace_back(prefix + ".ln1.b", block.ln1_b);
  out.emplace_back(prefix + ".ln2.g", block.ln2_g);
  out.emplace_back(prefix + ".ln2.b", block.ln2_b);
  out.emplace_back(prefix + ".ff1.w", block.ff1_w);
  out.emplace_back(prefix + ".ff1.b", block.ff1_b);
  out.emplace_back(prefix + ".ff2.w", block.ff2_w);
  out.emplace_back(prefix + ".ff2.b", block.ff2_b);
}

MultiModalEncoderModel::MultiModalEncoderModel(Vocabulary vocab, const EncoderConfig& config,
                                               Rng& rng)
    : vocab_(std::move(vocab)), config_(config) {
  if (config.d % config.heads != 0) throw ParameterError("encoder: d must be divisible by H");
  if (config.prototypes >= vocab_.size()) {
    throw ParameterError("encoder: prototype count must stay below |V|");
  }
  const std::int64_t d = config.d;
  const std::int64_t d_h = d / config.heads;

  token_embedding_ = init_weight({vocab_.size(), d}, d, rng);
  positional_ = init_weight({config.max_positions, d}, d, rng);
  prototype_proj_ = init_weight({config.prototypes, vocab_.size()}, vocab_.size(), rng);
  for (std::int64_t h = 0; h < config.heads; ++h) {
    reprogram_heads_.push_back({init_weight({d, d_h}, d, rng), init_weight({d, d_h}, d, rng),
                                init_weight({d, d_h}, d, rng)});
  }
  for (std::int64_t b = 0; b < config.blocks; ++b) {
    blocks_.push_back(make_transformer_block(d, config.heads, config.ff_multiplier, rng));
  }
}

Tensor MultiModalEncoderModel::embed_tokens_at(const std::vector<std::int64_t>& ids,
                                               std::int64_t first_position) const {
  const std::int64_t n = static_cast<std::int64_t>(ids.size());
  if (first_position + n > config_.max_positions) {
    throw ShapeError("encoder: sequence of " + std::to_string(n) + " tokens at position " +
                     std::to_string(first_position) + " exceeds max_positions");
  }
  Tensor tok = embedding_lookup(token_embedding_, ids);
  Tensor pos = slice_rows(positional_, first_position, n);
  return add(tok, pos);
}

Tensor MultiModalEncoderModel::embed_joint_text(const JointText& jt) const {
  return embed_tokens_at(jt.ids, 0);
}

Tensor MultiModalEncoderModel::text_prototypes() const {
  return matmul(prototype_proj_, token_embedding_);
}

Tensor MultiModalEncoderModel::reprogram(const Tensor& ts_emb) const {
  if (ts_emb.rank() != 2 || ts_emb.dim(1) != config_.d) {
    throw ShapeError("reprogram: expected (f x d) time-series embedding");
  }
  Tensor prototypes = text_prototypes();
  const std::int64_t d_h = config_.d / config_.heads;
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(d_h));
  std::vector<Tensor> per_head;
  per_head.reserve(reprogram_heads_.size());
  for (const auto& head : reprogram_heads_) {
    Tensor q = matmul(ts_emb, head.wq);
    Tensor k = matmul(prototypes, head.wk);
    Tensor v = matmul(prototypes, head.wv);
    Tensor attn = softmax(scale(matmul(q, transpose(k)), inv_scale), 1);
    per_head.push_back(matmul(attn, v));
  }
  // Eq.-7 layout: plain concatenation over heads, no output projection.
  return concat_cols(per_head);
}

std::vector<Tensor> MultiModalEncoderModel::reprogram_attention(const Tensor& ts_emb) const {
  Tensor prototypes = text_prototypes();
  const std::int64_t d_h = config_.d / config_.heads;
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(d_h));
  std::vector<Tensor> out;
  for (const auto& head : reprogram_heads_) {
    Tensor q = matmul(ts_emb, head.wq);
    Tensor k = matmul(prototypes, head.wk);
    out.push_back(softmax(scale(matmul(q, transpose(k)), inv_scale), 1));
  }
  return out;
}

Tensor MultiModalEncoderModel::run_blocks(const Tensor& rows) const {
  Tensor h = rows;
  for (const auto& block : blocks_) {
    Tensor attn_in = layer_norm(h, block.ln1_g, block.ln1_b);
    h = add(h, multi_head_attention(block.heads, block.wo, attn_in, attn_in, nullptr));
    Tensor ff_in = layer_norm(h, block.ln2_g, block.ln2_b);
    Tensor ff = add_row(matmul(relu(add_row(matmul(ff_in, block.ff1_w), block.ff1_b)),
                               block.ff2_w),
                        block.ff2_b);
    h = add(h, ff);
  }
  return h;
}

EncoderOutput MultiModalEncoderModel::encode_joint(const TimeSeries& series,
                                                   const AutoencoderModel& ae) const {
  Tensor ts_emb;
  if (config_.variant != EncoderVariant::text_only) {
    NoGradGuard frozen;  // the autoencoder never receives gradients
    ts_emb = ae.encode(series);
  }

  Tensor rows;
  switch (config_.variant) {
    case EncoderVariant::joint: {
      const JointText jt = assemble_joint_text(series, vocab_);
      Tensor text = embed_joint_text(jt);
      Tensor z = reprogram(ts_emb);
      // positions continue across the appended embedding rows
      Tensor z_pos = add(z, slice_rows(positional_, jt.token_count(), z.dim(0)));
      rows = concat_rows({text, z_pos});
      break;
    }
    case EncoderVariant::text_only: {
      const JointText jt = assemble_joint_text(series, vocab_);
      rows = embed_joint_text(jt);
      break;
    }
    case EncoderVariant::timeseries_only: {
      Tensor cls = embed_tokens_at({kClsId}, 0);
      Tensor z = reprogram(ts_emb);
      Tensor z_pos = add(z, slice_rows(positional_, 1, z.dim(0)));
      rows = concat_rows({cls, z_pos});
      break;
    }
  }
  return EncoderOutput{run_blocks(rows)};
}

std::vector<Tensor> MultiModalEncoderModel::parameters() {
  std::vector<Tensor> out = {token_embedding_, positional_, prototype_proj_};
  for (auto& head : reprogram_heads_) {
    out.push_back(head.wq);
    out.push_back(head.wk);
    out.push_back(head.wv);
  }
  for (auto& block : blocks_) collect_block_params(block, out);
  return out;
}

std::vector<std::pair<std::string, Tensor>> MultiModalEncoderModel::named_tensors() {
  std::vector<std::pair<std::string, Tensor>> out = {{"embed.tokens", token_embedding_},
                                                     {"embed.positions", positional_},
                                                     {"prototype.proj", prototype_proj_}};
  for (std::size_t h = 0; h < reprogram_heads_.size(); ++h) {
    out.emplace_back("reprogram.h" + std::to_string(h) + ".wq", reprogram_heads_[h].wq);
    out.emplace_back("reprogram.h" + std::to_string(h) + ".wk", reprogram_heads_[h].wk);
    out.emplace_back("reprogram.h" + std::to_string(h) + ".wv", reprogram_heads_[h].wv);
  }
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    collect_block_tensors("enc.b" + std::to_string(b), blocks_[b], out);
  }
  return out;
}

}  // namespace tslm
