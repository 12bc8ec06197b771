#include "tslm/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

#include "tslm/error.hpp"
#include "tslm/textrep.hpp"

namespace tslm {

namespace {

Tensor init_weight(std::vector<std::int64_t> shape, std::int64_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return Tensor::rand_uniform(std::move(shape), -bound, bound, rng, /*requires_grad=*/true);
}

// Additive causal mask: 0 on and below the diagonal, -1e9 above.
Tensor causal_mask(std::int64_t n) {
  Tensor mask = Tensor::zeros({n, n});
  auto vals = mask.mutable_values();
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = i + 1; j < n; ++j) vals[static_cast<std::size_t>(i * n + j)] = -1e9;
  return mask;
}

std::vector<AttentionHead> make_heads(std::int64_t d, std::int64_t heads, Rng& rng) {
  const std::int64_t d_h = d / heads;
  std::vector<AttentionHead> out;
  for (std::int64_t h = 0; h < heads; ++h) {
    out.push_back({init_weight({d, d_h}, d, rng), init_weight({d, d_h}, d, rng),
                   init_weight({d, d_h}, d, rng)});
  }
  return out;
}

}  // namespace

TslmModel::TslmModel(MultiModalEncoderModel encoder, const DecoderConfig& config, Rng& rng)
    : encoder_(std::move(encoder)), dec_config_(config) {
  const std::int64_t d = encoder_.config().d;
  const std::int64_t heads = encoder_.config().heads;
  const std::int64_t ff = encoder_.config().ff_multiplier * d;
  dec_positional_ = init_weight({config.max_positions, d}, d, rng);
  for (std::int64_t b = 0; b < config.blocks; ++b) {
    DecoderBlock block;
    block.self_heads = make_heads(d, heads, rng);
    block.self_wo = init_weight({d, d}, d, rng);
    block.ln_self_g = Tensor::full({d}, 1.0, true);
    block.ln_self_b = Tensor::zeros({d}, true);
    block.cross_heads = make_heads(d, heads, rng);
    block.cross_wo = init_weight({d, d}, d, rng);
    block.ln_cross_g = Tensor::full({d}, 1.0, true);
    block.ln_cross_b = Tensor::zeros({d}, true);
    block.ln_ff_g = Tensor::full({d}, 1.0, true);
    block.ln_ff_b = Tensor::zeros({d}, true);
    block.ff1_w = init_weight({d, ff}, d, rng);
    block.ff1_b = Tensor::zeros({ff}, true);
    block.ff2_w = init_weight({ff, d}, ff, rng);
    block.ff2_b = Tensor::zeros({d}, true);
    blocks_.push_back(std::move(block));
  }
}

Tensor TslmModel::forward_logits(const std::vector<std::int64_t>& prefix_ids,
                                 const Tensor& x) const {
  if (prefix_ids.empty()) throw ParameterError("decoder: empty prefix");
  if (prefix_ids.front() != kBosId) throw ParameterError("decoder: prefix must start with [BOS]");
  const std::int64_t n = static_cast<std::int64_t>(prefix_ids.size());
  if (n > dec_config_.max_positions) throw ShapeError("decoder: prefix exceeds max_positions");

  Tensor h = add(embedding_lookup(encoder_.token_embedding(), prefix_ids),
                 slice_rows(dec_positional_, 0, n));
  Tensor mask = causal_mask(n);
  for (const auto& block : blocks_) {
    Tensor self_in = layer_norm(h, block.ln_self_g, block.ln_self_b);
    h = add(h, multi_head_attention(block.self_heads, block.self_wo, self_in, self_in, &mask));
    Tensor cross_in = layer_norm(h, block.ln_cross_g, block.ln_cross_b);
    h = add(h, multi_head_attention(block.cross_heads, block.cross_wo, cross_in, x, nullptr));
    Tensor ff_in = layer_norm(h, block.ln_ff_g, block.ln_ff_b);
    Tensor ff = add_row(matmul(relu(add_row(matmul(ff_in, block.ff1_w), block.ff1_b)),
                               block.ff2_w),
                        block.ff2_b);
    h = add(h, ff);
  }
  // LM head tied to the shared embedding table
  return matmul(h, transpose(encoder_.token_embedding()));
}

Tensor TslmModel::decode_logits(const std::vector<std::int64_t>& prefix_ids,
                                const Tensor& x) const {
  Tensor logits = forward_logits(prefix_ids, x);
  return reshape(slice_rows(logits, logits.dim(0) - 1, 1), {logits.dim(1)});
}

std::vector<Tensor> TslmModel::parameters() {
  std::vector<Tensor> out = encoder_.parameters();
  out.push_back(dec_positional_);
  for (auto& block : blocks_) {
    for (auto& head : block.self_heads) {
      out.push_back(head.wq);
      out.push_back(head.wk);
      out.push_back(head.wv);
    }
    out.push_back(block.self_wo);
    out.push_back(block.ln_self_g);
    out.push_back(block.ln_self_b);
    for (auto& head : block.cross_heads) {
      out.push_back(head.wq);
      out.push_back(head.wk);
      out.push_back(head.wv);
    }
    out.push_back(block.cross_wo);
    out.push_back(block.ln_cross_g);
    out.push_back(block.ln_cross_b);
    out.push_back(block.ln_ff_g);
    out.push_back(block.ln_ff_b);
    out.push_back(block.ff1_w);
    out.push_back(block.ff1_b);
    out.push_back(block.ff2_w);
    out.push_back(block.ff2_b);
  }
  return out;
}

std::vector<std::pair<std::string, Tensor>> TslmModel::named_tensors() {
  auto out = encoder_.named_tensors();
  out.emplace_back("dec.positions", dec_positional_);
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    auto& block = blocks_[b];
    const std::string prefix = "dec.b" + std::to_string(b);
    for (std::size_t h = 0; h < block.self_heads.size(); ++h) {
      out.emplace_back(prefix + ".self.h" + std::to_string(h) + ".wq", block.self_heads[h].wq);
      out.emplace_back(prefix + ".self.h" + std::to_string(h) + ".wk", block.self_heads[h].wk);
      out.emplace_back(prefix + ".self.h" + std::to_string(h) + ".wv", block.self_heads[h].wv);
    }
    out.emplace_back(prefix + ".self.wo", block.self_wo);
    out.emplace_back(prefix + ".ln_self.g", block.ln_self_g);
    out.emplace_back(prefix + ".ln_self.b", block.ln_self_b);
    for (std::size_t h = 0; h < block.cross_heads.size(); ++h) {
      out.emplace_back(prefix + ".cross.h" + std::to_string(h) + ".wq", block.cross_heads[h].wq);
      out.emplace_back(prefix + ".cross.h" + std::to_string(h) + ".wk", block.cross_heads[h].wk);
      out.emplace_back(prefix + ".cross.h" + std::to_string(h) + ".wv", block.cross_heads[h].wv);
    }
    out.emplace_back(prefix + ".cross.wo", block.cross_wo);
    out.emplace_back(prefix + ".ln_cross.g", block.ln_cross_g);
    out.emplace_back(prefix + ".ln_cross.b", block.ln_cross_b);
    out.emplace_back(prefix + ".ln_ff.g", block.ln_ff_g);
    out.emplace_back(prefix + ".ln_ff.b", block.ln_ff_b);
    out.emplace_back(prefix + ".ff1.w", block.ff1_w);
    out.emplace_back(prefix + ".ff1.b", block.ff1_b);
    out.emplace_back(prefix + ".ff2.w", block.ff2_w);
    out.emplace_back(prefix + ".ff2.b", block.ff2_b);
  }
  return out;
}

namespace {

// [BOS] caption [EOS], truncated to max_len tokens when necessary.
std::vector<std::int64_t> caption_targets(const std::string& caption, const Vocabulary& vocab,
                                          std::int64_t max_len, bool* truncated) {
  std::vector<std::int64_t> ids = vocab.tokenize(caption);
  if (static_cast<std::int64_t>(ids.size()) > max_len - 2) {
    ids.resize(static_cast<std::size_t>(max_len - 2));
    if (truncated) *truncated = true;
  }
  ids.insert(ids.begin(), kBosId);
  ids.push_back(kEosId);
  return ids;
}

}  // namespace

TslmTrainStats train_tslm(TslmModel& model, const AutoencoderModel& ae,
                          const std::vector<CaptionedPair>& pairs, std::int64_t epochs,
                          std::int64_t batch, std::uint64_t seed,
                          const AdamWConfig& opt_config) {
  if (pairs.empty()) throw ParameterError("train_tslm: no pairs");
  if (epochs < 1 || batch < 1) throw ParameterError("train_tslm: bad epochs/batch");

  const std::int64_t n = static_cast<std::int64_t>(pairs.size());
  const std::int64_t batches_per_epoch = (n + batch - 1) / batch;
  AdamWConfig cfg = opt_config;
  if (cfg.total_steps == 0) cfg.total_steps = epochs * batches_per_epoch;
  AdamW optimizer(model.parameters(), cfg);

  TslmTrainStats stats;
  const auto& vocab = model.encoder().vocab();
  std::vector<std::vector<std::int64_t>> targets;
  targets.reserve(pairs.size());
  for (const auto& pair : pairs) {
    bool truncated = false;
    targets.push_back(
        caption_targets(pair.caption, vocab, model.decoder_config().max_len, &truncated));
    if (truncated) {
      ++stats.truncated_captions;
      std::cerr << "train_tslm: caption truncated to " << model.decoder_config().max_len
                << " tokens\n";
    }
  }

  Rng rng(seed);
  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;

  for (std::int64_t epoch = 0; epoch < epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    std::int64_t seen = 0;
    for (std::int64_t b = 0; b < batches_per_epoch; ++b) {
      std::vector<Tensor> losses;
      for (std::int64_t i = b * batch; i < std::min(n, (b + 1) * batch); ++i) {
        const std::int64_t idx = order[static_cast<std::size_t>(i)];
        const auto& target = targets[static_cast<std::size_t>(idx)];
        Tensor x = model.encoder().encode_joint(pairs[static_cast<std::size_t>(idx)].series, ae)
                       .matrix;
        std::vector<std::int64_t> inputs(target.begin(), target.end() - 1);
        std::vector<std::int64_t> labels(target.begin() + 1, target.end());
        Tensor logits = model.forward_logits(inputs, x);
        losses.push_back(cross_entropy(logits, labels, kPadId));
      }
      Tensor loss = mean_scalars(losses);
      if (!std::isfinite(loss.value())) {
        throw NumericError("train_tslm: non-finite loss at epoch " + std::to_string(epoch));
      }
      epoch_loss += loss.value() * static_cast<double>(losses.size());
      seen += static_cast<std::int64_t>(losses.size());
      optimizer.zero_grad();
      backward(loss);
      optimizer.step();
    }
    stats.epoch_losses.push_back(epoch_loss / static_cast<double>(seen));
  }
  return stats;
}

Tensor truncate_distribution(const Tensor& probs, std::int64_t top_k, double top_p) {
  if (probs.rank() != 1) throw ShapeError("truncate_distribution: expected rank-1 probabilities");
  if (top_k < 1) throw ParameterError("truncate_distribution: top_k must be >= 1");
  if (top_p <= 0.0 || top_p > 1.0) {
    throw ParameterError("truncate_distribution: top_p must be in (0,1]");
  }
  const std::int64_t v = probs.dim(0);
  std::vector<std::int64_t> idx(static_cast<std::size_t>(v));
  std::iota(idx.begin(), idx.end(), 0);
  const auto pv = probs.values();
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::int64_t a, std::int64_t b) { return pv[a] > pv[b]; });

  // Both kept sets are prefixes of the sorted order, so their intersection is
  // the shorter prefix: min(top_k, smallest prefix with cumulative mass >= top_p).
  std::int64_t p_len = v;
  double cum = 0.0;
  for (std::int64_t i = 0; i < v; ++i) {
    cum += pv[idx[static_cast<std::size_t>(i)]];
    if (cum >= top_p - 1e-12) {
      p_len = i + 1;
      break;
    }
  }
  const std::int64_t keep = std::min(std::min(top_k, p_len), v);

  std::vector<double> out(static_cast<std::size_t>(v), 0.0);
  double mass = 0.0;
  for (std::int64_t i = 0; i < keep; ++i) mass += pv[idx[static_cast<std::size_t>(i)]];
  if (mass <= 0.0) throw NumericError("truncate_distribution: zero kept mass");
  for (std::int64_t i = 0; i < keep; ++i) {
    out[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])] =
        pv[idx[static_cast<std::size_t>(i)]] / mass;
  }
  return Tensor::from_values({v}, std::move(out));
}

namespace {

std::string decode_ids(const std::vector<std::int64_t>& ids, const Vocabulary& vocab) {
  std::vector<std::int64_t> words;
  for (std::int64_t id : ids) {
    if (id == kBosId || id == kEosId) continue;
    words.push_back(id);
  }
  return vocab.detokenize(words);
}

}  // namespace

std::string sample_caption(const TimeSeries& series, const TslmModel& model,
                           const AutoencoderModel& ae, const SamplingConfig& cfg) {
  if (cfg.temperature <= 0.0) throw ParameterError("sample_caption: temperature must be > 0");
  NoGradGuard inference;
  Rng rng(cfg.seed);
  Tensor x = model.encoder().encode_joint(series, ae).matrix;
  std::vector<std::int64_t> ids = {kBosId};
  for (std::int64_t step = 0; step < cfg.max_len; ++step) {
    Tensor logits = model.decode_logits(ids, x);
    Tensor probs = softmax(scale(logits, 1.0 / cfg.temperature), 0);
    Tensor trunc = truncate_distribution(probs, cfg.top_k, cfg.top_p);
    const double u = rng.uniform();
    double cum = 0.0;
    std::int64_t chosen = -1;
    for (std::int64_t j = 0; j < trunc.dim(0); ++j) {
      const double pj = trunc.values()[j];
      if (pj <= 0.0) continue;
      chosen = j;  // falls back to the last nonzero entry on numeric tails
      cum += pj;
      if (u < cum) break;
    }
    if (chosen == kEosId) break;
    ids.push_back(chosen);
  }
  return decode_ids(ids, model.encoder().vocab());
}

std::vector<std::string> generate_captions(const TimeSeries& series, const TslmModel& model,
                                           const AutoencoderModel& ae,
                                           const SamplingConfig& cfg) {
  if (cfg.captions < 1) throw ParameterError("generate_captions: K must be >= 1");
  Rng base(cfg.seed);
  std::vector<std::string> out;
  for (std::int64_t k = 0; k < cfg.captions; ++k) {
    SamplingConfig child = cfg;
    child.seed = base.child(static_cast<std::uint64_t>(k)).next_u64();
    out.push_back(sample_caption(series, model, ae, child));
  }
  return out;
}

std::string greedy_caption(const TimeSeries& series, const TslmModel& model,
                           const AutoencoderModel& ae, std::int64_t max_len) {
  NoGradGuard inference;
  Tensor x = model.encoder().encode_joint(series, ae).matrix;
  std::vector<std::int64_t> ids = {kBosId};
  for (std::int64_t step = 0; step < max_len; ++step) {
    Tensor logits = model.decode_logits(ids, x);
    std::int64_t best = 0;
    for (std::int64_t j = 1; j < logits.dim(0); ++j) {
      if (logits.values()[j] > logits.values()[best]) best = j;
    }
    if (best == kEosId) break;
    ids.push_back(best);
  }
  return decode_ids(ids, model.encoder().vocab());
}

}  // namespace tslm
