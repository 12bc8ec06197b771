#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "tslm/autoencoder.hpp"
#include "tslm/datagen.hpp"
#include "tslm/error.hpp"

using namespace tslm;

namespace {

AutoencoderConfig small_config() {
  AutoencoderConfig cfg;
  cfg.c1_channels = 8;
  cfg.c2_channels = 4;
  cfg.embed_dim = 16;
  return cfg;
}

}  // namespace

TEST_CASE("canonicalize resamples to 24 unit-scale points") {
  TimeSeries ramp{{0, 100}};
  const auto out = canonicalize(ramp);
  REQUIRE(out.size() == 24);
  for (std::size_t i = 0; i < out.size(); ++i) {
    CHECK(out[i] == doctest::Approx(static_cast<double>(i) / 23.0));
  }

  TimeSeries flat{std::vector<double>(7, 50.0)};
  for (double v : canonicalize(flat)) CHECK(v == doctest::Approx(0.5));

  TimeSeries exact;
  for (int i = 0; i < 24; ++i) exact.values.push_back(i + 1.0);
  const auto same = canonicalize(exact);
  for (std::size_t i = 0; i < 24; ++i) {
    CHECK(same[i] == doctest::Approx(exact.values[i] / 100.0));
  }

  CHECK_THROWS_AS(canonicalize(TimeSeries{{5.0}}), ParameterError);
}

TEST_CASE("encode yields (6, d) for every valid generated length") {
  Rng rng(1);
  AutoencoderModel model(small_config(), rng);
  std::uint64_t seed = 0;
  for (std::int64_t l = 12; l <= 50; ++l) {
    TimeSeries s = gen_synth_series({Trend::increase, Location::end}, l, ++seed);
    Tensor emb = model.encode(s);
    CHECK(emb.shape() == std::vector<std::int64_t>{6, 16});
  }

  TimeSeries s = gen_synth_series({Trend::decrease, Location::middle}, 20, 3);
  Tensor a = model.encode(s);
  Tensor b = model.encode(s);
  CHECK(std::vector<double>(a.values().begin(), a.values().end()) ==
        std::vector<double>(b.values().begin(), b.values().end()));
}

TEST_CASE("decode emits length 24 inside (0,1)") {
  Rng rng(2);
  AutoencoderModel model(small_config(), rng);
  Tensor emb = Tensor::rand_uniform({6, 16}, -1.0, 1.0, rng);
  Tensor recon = model.decode(emb);
  CHECK(recon.shape() == std::vector<std::int64_t>{1, 24});
  for (double v : recon.values()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
  CHECK_THROWS_AS(model.decode(Tensor::zeros({5, 16})), ShapeError);
  CHECK_THROWS_AS(model.decode(Tensor::zeros({6, 8})), ShapeError);
}

TEST_CASE("single-sample training memorizes its input") {
  Rng rng(3);
  AutoencoderModel model(small_config(), rng);
  TimeSeries s = gen_synth_series({Trend::increase, Location::beginning}, 24, 9);

  AdamWConfig opt;
  opt.base_lr = 3e-3;
  opt.weight_decay = 0.0;
  auto stats = train_autoencoder(model, {s}, 400, 1, 5, opt);
  CHECK(stats.epoch_losses.back() < 0.01);
  CHECK(stats.epoch_losses.back() < stats.epoch_losses.front());
}

TEST_CASE("training is bit-deterministic for a fixed seed") {
  std::vector<TimeSeries> data;
  std::uint64_t seed = 0;
  for (int i = 0; i < 12; ++i) {
    data.push_back(gen_synth_series(all_patterns()[static_cast<std::size_t>(i % 6)], 18, ++seed));
  }
  auto run = [&] {
    Rng rng(17);
    AutoencoderModel model(small_config(), rng);
    AdamWConfig opt;
    opt.base_lr = 1e-3;
    train_autoencoder(model, data, 5, 4, 99, opt);
    std::vector<double> values;
    for (auto& t : model.parameters()) {
      values.insert(values.end(), t.values().begin(), t.values().end());
    }
    return values;
  };
  CHECK(run() == run());
}

TEST_CASE("train_autoencoder rejects degenerate inputs") {
  Rng rng(4);
  AutoencoderModel model(small_config(), rng);
  CHECK_THROWS_AS(train_autoencoder(model, {}, 1, 1, 0, AdamWConfig{}), ParameterError);
}
