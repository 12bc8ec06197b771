#include "tslm/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <unordered_set>

#include "tslm/error.hpp"
#include "tslm/textrep.hpp"

namespace tslm {

ScoreStats score_stats(const std::vector<double>& scores) {
  if (scores.size() < 2) throw ParameterError("score_stats: need at least 2 scores");
  ScoreStats st;
  st.count = static_cast<std::int64_t>(scores.size());
  st.min = scores[0];
  st.max = scores[0];
  double sum = 0.0;
  for (double s : scores) {
    sum += s;
    st.min = std::min(st.min, s);
    st.max = std::max(st.max, s);
  }
  st.mean = sum / static_cast<double>(st.count);
  double sq = 0.0;
  for (double s : scores) sq += (s - st.mean) * (s - st.mean);
  st.stddev = std::sqrt(sq / static_cast<double>(st.count - 1));
  st.interval_low = st.mean - 2.0 * st.stddev;
  st.interval_high = st.mean - st.stddev;
  return st;
}

Tensor DenoiserModel::encode_caption(const std::string& caption) const {
  std::vector<std::int64_t> ids = encoder_.vocab().tokenize(caption);
  if (ids.empty()) throw ParameterError("encode_caption: empty caption");
  ids.insert(ids.begin(), kClsId);
  Tensor rows = encoder_.embed_tokens_at(ids, 0);
  return slice_rows(encoder_.run_blocks(rows), 0, 1);
}

Tensor DenoiserModel::encode_series(const TimeSeries& series) const {
  return encoder_.encode_joint(series, ae_).cls();
}

double DenoiserModel::similarity(const TimeSeries& series, const std::string& caption) const {
  NoGradGuard inference;
  Tensor x = encode_series(series);
  Tensor c = encode_caption(caption);
  return matmul(x, transpose(c)).value();
}

DenoiserTrainStats train_denoiser(DenoiserModel& model, const std::vector<CaptionedPair>& pairs,
                                  std::int64_t batch, std::int64_t epochs, std::uint64_t seed,
                                  const AdamWConfig& opt_config) {
  if (batch < 2) throw ParameterError("train_denoiser: batch must be at least 2");
  if (static_cast<std::int64_t>(pairs.size()) < batch) {
    throw ParameterError("train_denoiser: need at least one full batch of pairs");
  }

  const std::int64_t n = static_cast<std::int64_t>(pairs.size());
  const std::int64_t batches_per_epoch = n / batch;  // full batches only
  AdamWConfig cfg = opt_config;
  if (cfg.total_steps == 0) cfg.total_steps = epochs * batches_per_epoch;
  AdamW optimizer(model.parameters(), cfg);

  Rng rng(seed);
  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;

  DenoiserTrainStats stats;
  std::vector<std::int64_t> diagonal(static_cast<std::size_t>(batch));
  for (std::int64_t i = 0; i < batch; ++i) diagonal[static_cast<std::size_t>(i)] = i;

  for (std::int64_t epoch = 0; epoch < epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::int64_t b = 0; b < batches_per_epoch; ++b) {
      std::vector<Tensor> series_rows, caption_rows;
      std::unordered_set<std::string> captions_in_batch;
      bool duplicate = false;
      for (std::int64_t i = b * batch; i < (b + 1) * batch; ++i) {
        const auto& pair = pairs[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
        series_rows.push_back(model.encode_series(pair.series));
        caption_rows.push_back(model.encode_caption(pair.caption));
        duplicate = !captions_in_batch.insert(pair.caption).second || duplicate;
      }
      if (duplicate) {
        // false negatives: identical captions compete on the off-diagonal
        ++stats.duplicate_caption_batches;
      }
      Tensor sim = matmul(concat_rows(series_rows), transpose(concat_rows(caption_rows)));
      Tensor loss = cross_entropy(sim, diagonal, /*pad_id=*/-1);
      if (!std::isfinite(loss.value())) {
        throw NumericError("train_denoiser: non-finite loss at epoch " + std::to_string(epoch));
      }
      epoch_loss += loss.value();
      optimizer.zero_grad();
      backward(loss);
      optimizer.step();
    }
    stats.epoch_losses.push_back(epoch_loss / static_cast<double>(batches_per_epoch));
  }
  if (stats.duplicate_caption_batches > 0) {
    std::cerr << "train_denoiser: " << stats.duplicate_caption_batches
              << " batch(es) contained duplicate captions (false negatives)\n";
  }
  return stats;
}

std::vector<CaptionedPair> score_pairs(const std::vector<CaptionedPair>& pairs,
                                       const DenoiserModel& model) {
  std::vector<CaptionedPair> out = pairs;
  for (auto& pair : out) pair.score = model.similarity(pair.series, pair.caption);
  return out;
}

FilterResult filter_pairs(const std::vector<CaptionedPair>& scored, double threshold) {
  FilterResult result;
  std::vector<double> scores;
  scores.reserve(scored.size());
  for (const auto& pair : scored) {
    if (!pair.score) throw ContractError("filter_pairs: unscored pair");
    scores.push_back(*pair.score);
    if (*pair.score >= threshold) {
      result.kept.push_back(pair);
    } else {
      result.removed.push_back(pair);
    }
  }
  if (scores.size() >= 2) {
    result.stats = score_stats(scores);
  } else if (scores.size() == 1) {
    result.stats.count = 1;
    result.stats.mean = result.stats.min = result.stats.max = scores[0];
    result.stats.interval_low = result.stats.interval_high = scores[0];
  }
  return result;
}

}  // namespace tslm
