#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tslm/autoencoder.hpp"
#include "tslm/encoder.hpp"
#include "tslm/optim.hpp"
#include "tslm/timeseries.hpp"

namespace tslm {

struct ScoreStats {
  std::int64_t count = 0;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation
  double min = 0.0;
  double max = 0.0;
  double interval_low = 0.0;   // mean - 2*stddev
  double interval_high = 0.0;  // mean - stddev
};

ScoreStats score_stats(const std::vector<double>& scores);

// Cross-modal dense retrieval scorer. The series path is the multi-modal
// encoder pooled at [CLS]; the caption path runs the caption tokens through
// the same embedding table and transformer blocks, so one parameter update
// moves both paths. The frozen autoencoder travels with the model.
class DenoiserModel {
 public:
  DenoiserModel(MultiModalEncoderModel encoder, AutoencoderModel autoencoder)
      : encoder_(std::move(encoder)), ae_(std::move(autoencoder)) {}

  // [CLS]-pooled caption embedding, shape (1 x d).
  Tensor encode_caption(const std::string& caption) const;
  // [CLS]-pooled series embedding, shape (1 x d).
  Tensor encode_series(const TimeSeries& series) const;
  // sim(T, c) = X_cls . C_cls
  double similarity(const TimeSeries& series, const std::string& caption) const;

  MultiModalEncoderModel& encoder() { return encoder_; }
  const MultiModalEncoderModel& encoder() const { return encoder_; }
  AutoencoderModel& autoencoder() { return ae_; }
  const AutoencoderModel& autoencoder() const { return ae_; }

  std::vector<Tensor> parameters() { return encoder_.parameters(); }

 private:
  MultiModalEncoderModel encoder_;
  AutoencoderModel ae_;
};

struct DenoiserTrainStats {
  std::vector<double> epoch_losses;
  std::int64_t duplicate_caption_batches = 0;  // batches with repeated captions
};

// Contrastive training with in-batch negatives: SIM = X_B C_B^T, loss is the
// mean over rows of -log softmax(row)[diagonal]. Trains on groundtruth pairs
// only.
DenoiserTrainStats train_denoiser(DenoiserModel& model, const std::vector<CaptionedPair>& pairs,
                                  std::int64_t batch, std::int64_t epochs, std::uint64_t seed,
                                  const AdamWConfig& opt_config);

// Annotates each pair with its similarity score; input order preserved.
std::vector<CaptionedPair> score_pairs(const std::vector<CaptionedPair>& pairs,
                                       const DenoiserModel& model);

struct FilterResult {
  std::vector<CaptionedPair> kept;     // score >= threshold
  std::vector<CaptionedPair> removed;  // score < threshold
  ScoreStats stats;                    // over all input scores
};

FilterResult filter_pairs(const std::vector<CaptionedPair>& scored, double threshold);

}  // namespace tslm
