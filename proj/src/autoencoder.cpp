#include "tslm/autoencoder.hpp"

#include <cmath>

#include "tslm/error.hpp"

namespace tslm {

namespace {

Tensor init_weight(std::vector<std::int64_t> shape, std::int64_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return Tensor::rand_uniform(std::move(shape), -bound, bound, rng, /*requires_grad=*/true);
}

}  // namespace

std::vector<double> canonicalize(const TimeSeries& series, std::int64_t length) {
  const std::int64_t l = series.length();
  if (l < 2) throw ParameterError("canonicalize: need at least 2 points");
  std::vector<double> out(static_cast<std::size_t>(length));
  for (std::int64_t i = 0; i < length; ++i) {
    const double pos = static_cast<double>(i) * static_cast<double>(l - 1) /
                       static_cast<double>(length - 1);
    const std::int64_t lo = static_cast<std::int64_t>(pos);
    const std::int64_t hi = std::min(lo + 1, l - 1);
    const double frac = pos - static_cast<double>(lo);
    const double v = series.values[static_cast<std::size_t>(lo)] * (1.0 - frac) +
                     series.values[static_cast<std::size_t>(hi)] * frac;
    out[static_cast<std::size_t>(i)] = v / 100.0;
  }
  return out;
}

AutoencoderModel::AutoencoderModel(const AutoencoderConfig& config, Rng& rng) : config_(config) {
  if (config.canonical_length % 4 != 0) {
    throw ParameterError("autoencoder: canonical_length must be divisible by 4");
  }
  const std::int64_t c1 = config.c1_channels;
  const std::int64_t c2 = config.c2_channels;
  const std::int64_t d = config.embed_dim;

  enc1_kernel_ = init_weight({c1, 1, 3}, 3, rng);
  enc1_bias_ = Tensor::zeros({c1}, true);
  enc2_kernel_ = init_weight({c2, c1, 3}, c1 * 3, rng);
  enc2_bias_ = Tensor::zeros({c2}, true);
  map_enc_w_ = init_weight({c2, d}, c2, rng);
  map_enc_b_ = Tensor::zeros({d}, true);
  map_dec_w_ = init_weight({d, c2}, d, rng);
  map_dec_b_ = Tensor::zeros({c2}, true);
  dec1_kernel_ = init_weight({c2, c1, 3}, c2 * 3, rng);
  dec1_bias_ = Tensor::zeros({c1}, true);
  dec2_kernel_ = init_weight({c1, 1, 3}, c1 * 3, rng);
  dec2_bias_ = Tensor::zeros({1}, true);
}

Tensor AutoencoderModel::encode(const TimeSeries& series) const {
  return encode_canonical(canonicalize(series, config_.canonical_length));
}

Tensor AutoencoderModel::encode_canonical(const std::vector<double>& canonical) const {
  Tensor x = Tensor::from_values({1, config_.canonical_length},
                                 std::vector<double>(canonical.begin(), canonical.end()));
  Tensor h1 = relu(add_col(conv1d(x, enc1_kernel_, 2, 1), enc1_bias_));
  Tensor h2 = relu(add_col(conv1d(h1, enc2_kernel_, 2, 1), enc2_bias_));
  // (c2 x f) -> (f x c2) -> per-position linear into (f x d)
  return add_row(matmul(transpose(h2), map_enc_w_), map_enc_b_);
}

Tensor AutoencoderModel::decode(const Tensor& embedding) const {
  if (embedding.rank() != 2 || embedding.dim(0) != config_.compressed_length() ||
      embedding.dim(1) != config_.embed_dim) {
    throw ShapeError("decode: expected (f x d) embedding");
  }
  Tensor h = add_row(matmul(embedding, map_dec_w_), map_dec_b_);  // (f x c2)
  Tensor h1 = relu(add_col(conv1d_transpose(transpose(h), dec1_kernel_, 2, 1, 1), dec1_bias_));
  return sigmoid(add_col(conv1d_transpose(h1, dec2_kernel_, 2, 1, 1), dec2_bias_));
}

std::vector<Tensor> AutoencoderModel::parameters() {
  return {enc1_kernel_, enc1_bias_, enc2_kernel_, enc2_bias_, map_enc_w_, map_enc_b_,
          map_dec_w_,  map_dec_b_, dec1_kernel_, dec1_bias_, dec2_kernel_, dec2_bias_};
}

std::vector<std::pair<std::string, Tensor>> AutoencoderModel::named_tensors() {
  return {{"enc1.kernel", enc1_kernel_}, {"enc1.bias", enc1_bias_},
          {"enc2.kernel", enc2_kernel_}, {"enc2.bias", enc2_bias_},
          {"map_enc.w", map_enc_w_},     {"map_enc.b", map_enc_b_},
          {"map_dec.w", map_dec_w_},     {"map_dec.b", map_dec_b_},
          {"dec1.kernel", dec1_kernel_}, {"dec1.bias", dec1_bias_},
          {"dec2.kernel", dec2_kernel_}, {"dec2.bias", dec2_bias_}};
}

AutoencoderTrainStats train_autoencoder(AutoencoderModel& model,
                                        const std::vector<TimeSeries>& series_set,
                                        std::int64_t epochs, std::int64_t batch,
                                        std::uint64_t seed, const AdamWConfig& opt_config) {
  if (series_set.empty()) throw ParameterError("train_autoencoder: empty series set");
  if (epochs < 1 || batch < 1) throw ParameterError("train_autoencoder: bad epochs/batch");

  const std::int64_t n = static_cast<std::int64_t>(series_set.size());
  std::vector<std::vector<double>> canonical;
  canonical.reserve(series_set.size());
  for (const auto& s : series_set) canonical.push_back(canonicalize(s, model.config().canonical_length));

  const std::int64_t batches_per_epoch = (n + batch - 1) / batch;
  AdamWConfig cfg = opt_config;
  if (cfg.total_steps == 0) cfg.total_steps = epochs * batches_per_epoch;
  AdamW optimizer(model.parameters(), cfg);

  Rng rng(seed);
  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;

  AutoencoderTrainStats stats;
  for (std::int64_t epoch = 0; epoch < epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    std::int64_t seen = 0;
    for (std::int64_t b = 0; b < batches_per_epoch; ++b) {
      std::vector<Tensor> losses;
      for (std::int64_t i = b * batch; i < std::min(n, (b + 1) * batch); ++i) {
        const auto& canon = canonical[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
        Tensor target = Tensor::from_values({1, model.config().canonical_length},
                                            std::vector<double>(canon.begin(), canon.end()));
        Tensor recon = model.decode(model.encode_canonical(canon));
        losses.push_back(l1_loss(recon, target));
      }
      Tensor loss = mean_scalars(losses);
      if (!std::isfinite(loss.value())) {
        throw NumericError("train_autoencoder: non-finite loss at epoch " + std::to_string(epoch));
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

}  // namespace tslm
