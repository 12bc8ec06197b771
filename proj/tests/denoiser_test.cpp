#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "tslm/datagen.hpp"
#include "tslm/denoiser.hpp"
#include "tslm/error.hpp"

using namespace tslm;

namespace {

AutoencoderConfig tiny_ae_config() {
  AutoencoderConfig cfg;
  cfg.c1_channels = 8;
  cfg.c2_channels = 4;
  cfg.embed_dim = 16;
  return cfg;
}

// Toy retrieval pairs: the caption carries a coarse start level in addition
// to the pattern phrase, so each series has an identifiable groundtruth
// caption even though only six pattern classes exist.
std::vector<CaptionedPair> toy_pairs(std::size_t count, std::uint64_t seed0 = 1) {
  std::vector<CaptionedPair> pairs;
  std::uint64_t seed = seed0;
  while (pairs.size() < count) {
    for (const auto& p : all_patterns()) {
      CaptionedPair cp;
      cp.series = gen_synth_series(p, 12 + (seed % 9), ++seed);
      const auto level = std::llround(cp.series.values.front() / 5.0) * 5;
      cp.caption = "from " + std::to_string(level) + " " + caption_from_pattern(p, seed * 3 + 1);
      cp.source = PairSource::original;
      pairs.push_back(cp);
      if (pairs.size() == count) break;
    }
  }
  return pairs;
}

DenoiserModel tiny_denoiser(std::uint64_t seed = 1) {
  Rng rng(seed);
  AutoencoderModel ae(tiny_ae_config(), rng);
  std::vector<std::string> corpus;
  for (const auto& p : toy_pairs(30)) corpus.push_back(p.caption);
  EncoderConfig cfg;
  cfg.d = 16;
  cfg.heads = 2;
  cfg.prototypes = 4;
  cfg.blocks = 1;
  MultiModalEncoderModel encoder(Vocabulary::build(corpus), cfg, rng);
  return DenoiserModel(std::move(encoder), std::move(ae));
}

}  // namespace

TEST_CASE("score_stats worked examples") {
  ScoreStats two = score_stats({0.0, 2.0});
  CHECK(two.mean == doctest::Approx(1.0));
  CHECK(two.stddev == doctest::Approx(std::sqrt(2.0)));

  // a two-point set realizing mean 3.37 and sample std 2.44
  const double half = 2.44 / std::sqrt(2.0);
  ScoreStats paper = score_stats({3.37 - half, 3.37 + half});
  CHECK(paper.mean == doctest::Approx(3.37));
  CHECK(paper.stddev == doctest::Approx(2.44));
  CHECK(paper.interval_low == doctest::Approx(-1.51).epsilon(0.01));
  CHECK(paper.interval_high == doctest::Approx(0.93).epsilon(0.01));

  ScoreStats flat = score_stats({4.0, 4.0, 4.0});
  CHECK(flat.stddev == 0.0);
  CHECK(flat.interval_low == flat.interval_high);
  CHECK(flat.interval_low == doctest::Approx(4.0));

  CHECK_THROWS_AS(score_stats({1.0}), ParameterError);
}

TEST_CASE("filter_pairs keeps score >= threshold and partitions the input") {
  std::vector<CaptionedPair> pairs = toy_pairs(3);
  pairs[0].score = 2.5;
  pairs[1].score = -0.3;
  pairs[2].score = 0.0;

  FilterResult result = filter_pairs(pairs, 0.0);
  REQUIRE(result.kept.size() == 2);
  REQUIRE(result.removed.size() == 1);
  CHECK(*result.kept[0].score == 2.5);
  CHECK(*result.kept[1].score == 0.0);
  CHECK(*result.removed[0].score == -0.3);
  CHECK(result.kept.size() + result.removed.size() == pairs.size());

  FilterResult none = filter_pairs(pairs, -10.0);
  CHECK(none.removed.empty());

  pairs[1].score.reset();
  CHECK_THROWS_AS(filter_pairs(pairs, 0.0), ContractError);
}

TEST_CASE("uniform similarity rows lose ln B") {
  Tensor sim = Tensor::zeros({8, 8});
  std::vector<std::int64_t> diag = {0, 1, 2, 3, 4, 5, 6, 7};
  CHECK(cross_entropy(sim, diag, -1).value() == doctest::Approx(std::log(8.0)).epsilon(1e-6));

  // dominant diagonal drives the loss toward zero
  Tensor sharp = Tensor::zeros({4, 4});
  for (int i = 0; i < 4; ++i) sharp.mutable_values()[static_cast<std::size_t>(i * 4 + i)] = 50.0;
  CHECK(cross_entropy(sharp, {0, 1, 2, 3}, -1).value() < 1e-8);
}

TEST_CASE("caption encoding contract") {
  DenoiserModel model = tiny_denoiser();
  Tensor c = model.encode_caption("increases in the middle");
  CHECK(c.shape() == std::vector<std::int64_t>{1, 16});

  Tensor c2 = model.encode_caption("increases in the middle");
  for (std::int64_t j = 0; j < 16; ++j) CHECK(c.at(0, j) == c2.at(0, j));

  CHECK_THROWS_AS(model.encode_caption(""), ParameterError);
  CHECK_THROWS_AS(model.encode_caption("   "), ParameterError);
}

TEST_CASE("similarity equals the dot product of the two embeddings") {
  DenoiserModel model = tiny_denoiser(3);
  const auto pair = toy_pairs(1)[0];
  NoGradGuard inference;
  Tensor x = model.encode_series(pair.series);
  Tensor c = model.encode_caption(pair.caption);
  double manual = 0.0;
  for (std::int64_t j = 0; j < 16; ++j) manual += x.at(0, j) * c.at(0, j);
  CHECK(model.similarity(pair.series, pair.caption) == doctest::Approx(manual));
}

TEST_CASE("caption and series paths share their parameters") {
  DenoiserModel model = tiny_denoiser(4);
  const auto pair = toy_pairs(1)[0];
  // one backward pass through the similarity touches the shared table from
  // both paths
  Tensor x = model.encode_series(pair.series);
  Tensor c = model.encode_caption(pair.caption);
  Tensor loss = matmul(x, transpose(c));
  backward(reshape(loss, {}));
  double norm = 0.0;
  for (double g : model.encoder().token_embedding().grad()) norm += std::abs(g);
  CHECK(norm > 0.0);
}

TEST_CASE("short contrastive training separates matched from shuffled pairs") {
  DenoiserModel model = tiny_denoiser(9);
  auto pairs = toy_pairs(96, 100);

  AdamWConfig opt;
  opt.base_lr = 2e-3;
  opt.weight_decay = 0.0;
  auto stats = train_denoiser(model, pairs, 8, 30, 5, opt);
  CHECK(stats.epoch_losses.back() < stats.epoch_losses.front());

  auto held = toy_pairs(24, 900);
  double matched = 0.0, shuffled = 0.0;
  for (std::size_t i = 0; i < held.size(); ++i) {
    matched += model.similarity(held[i].series, held[i].caption);
    shuffled += model.similarity(held[i].series, held[(i + 7) % held.size()].caption);
  }
  CHECK(matched / static_cast<double>(held.size()) >
        shuffled / static_cast<double>(held.size()));
}

TEST_CASE("score_pairs annotates without reordering and is idempotent") {
  DenoiserModel model = tiny_denoiser(6);
  auto pairs = toy_pairs(10, 55);
  auto scored = score_pairs(pairs, model);
  REQUIRE(scored.size() == pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    CHECK(scored[i].caption == pairs[i].caption);
    CHECK(scored[i].score.has_value());
  }
  auto rescored = score_pairs(scored, model);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    CHECK(*rescored[i].score == *scored[i].score);
  }
}

TEST_CASE("train_denoiser validates its inputs") {
  DenoiserModel model = tiny_denoiser(7);
  CHECK_THROWS_AS(train_denoiser(model, toy_pairs(4), 8, 1, 0, AdamWConfig{}), ParameterError);
  CHECK_THROWS_AS(train_denoiser(model, toy_pairs(16), 1, 1, 0, AdamWConfig{}), ParameterError);
}
