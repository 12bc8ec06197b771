#pragma once

#include <cstdint>
#include <vector>

#include "tslm/optim.hpp"
#include "tslm/rng.hpp"
#include "tslm/tensor.hpp"
#include "tslm/timeseries.hpp"

namespace tslm {

struct AutoencoderConfig {
  std::int64_t canonical_length = 24;  // L_max; f = L_max/4
  std::int64_t c1_channels = 32;
  std::int64_t c2_channels = 16;
  std::int64_t embed_dim = 128;  // d

  std::int64_t compressed_length() const { return canonical_length / 4; }  // f
};

// Rescales values into [0,1] (divide by 100) and linearly resamples to
// exactly `length` points. Throws ParameterError for series shorter than 2.
std::vector<double> canonicalize(const TimeSeries& series, std::int64_t length = 24);

// Two stride-2 conv stages with ReLU, a per-position mapping layer into the
// embedding width, and the mirrored transpose-conv decoder ending in sigmoid.
class AutoencoderModel {
 public:
  AutoencoderModel(const AutoencoderConfig& config, Rng& rng);

  // canonicalize -> C1(ReLU) -> C2(ReLU) -> per-position map; shape (f x d).
  Tensor encode(const TimeSeries& series) const;
  // From canonical values already in [0,1] (training path).
  Tensor encode_canonical(const std::vector<double>& canonical) const;
  // map -> T1(ReLU) -> T2(sigmoid); shape (1 x L_max), values in (0,1).
  Tensor decode(const Tensor& embedding) const;

  std::vector<Tensor> parameters();
  const AutoencoderConfig& config() const { return config_; }

  // checkpoint plumbing
  std::vector<std::pair<std::string, Tensor>> named_tensors();

 private:
  AutoencoderConfig config_;
  Tensor enc1_kernel_, enc1_bias_;
  Tensor enc2_kernel_, enc2_bias_;
  Tensor map_enc_w_, map_enc_b_;
  Tensor map_dec_w_, map_dec_b_;
  Tensor dec1_kernel_, dec1_bias_;
  Tensor dec2_kernel_, dec2_bias_;
};

struct AutoencoderTrainStats {
  std::vector<double> epoch_losses;  // mean L1 per epoch
};

// Unsupervised training: mean L1 between the canonicalized series and its
// reconstruction. Captions are never consulted.
AutoencoderTrainStats train_autoencoder(AutoencoderModel& model,
                                        const std::vector<TimeSeries>& series_set,
                                        std::int64_t epochs, std::int64_t batch,
                                        std::uint64_t seed, const AdamWConfig& opt_config);

}  // namespace tslm
