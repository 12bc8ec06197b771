#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "tslm/datagen.hpp"
#include "tslm/encoder.hpp"
#include "tslm/error.hpp"
#include "tslm/gradcheck.hpp"

using namespace tslm;

namespace {

Vocabulary tiny_vocab() {
  return Vocabulary::build({"increases in the middle", "falls early on"});
}

EncoderConfig tiny_config(EncoderVariant variant = EncoderVariant::joint) {
  EncoderConfig cfg;
  cfg.d = 16;
  cfg.heads = 2;
  cfg.prototypes = 4;
  cfg.blocks = 1;
  cfg.variant = variant;
  return cfg;
}

AutoencoderConfig tiny_ae_config() {
  AutoencoderConfig cfg;
  cfg.c1_channels = 8;
  cfg.c2_channels = 4;
  cfg.embed_dim = 16;
  return cfg;
}

TimeSeries sample_series(std::int64_t l = 12, std::uint64_t seed = 5) {
  return gen_synth_series({Trend::increase, Location::middle}, l, seed);
}

}  // namespace

TEST_CASE("text prototypes have shape (p, d) and select rows under one-hot P") {
  Rng rng(1);
  MultiModalEncoderModel model(tiny_vocab(), tiny_config(), rng);
  Tensor ep = model.text_prototypes();
  CHECK(ep.shape() == std::vector<std::int64_t>{4, 16});

  // overwrite P with one-hot rows selecting vocabulary rows 2, 5, 7, 9
  auto tensors = model.named_tensors();
  Tensor proj;
  for (auto& [name, t] : tensors) {
    if (name == "prototype.proj") proj = t;
  }
  REQUIRE(proj.defined());
  std::fill(proj.mutable_values().begin(), proj.mutable_values().end(), 0.0);
  const std::vector<std::int64_t> picks = {2, 5, 7, 9};
  for (std::size_t r = 0; r < picks.size(); ++r) {
    proj.mutable_values()[r * static_cast<std::size_t>(model.vocab().size()) +
                          static_cast<std::size_t>(picks[r])] = 1.0;
  }
  Tensor selected = model.text_prototypes();
  for (std::size_t r = 0; r < picks.size(); ++r) {
    for (std::int64_t j = 0; j < 16; ++j) {
      CHECK(selected.at(static_cast<std::int64_t>(r), j) ==
            doctest::Approx(model.token_embedding().at(picks[r], j)));
    }
  }
}

TEST_CASE("gradient flows into both P and the embedding table") {
  Rng rng(2);
  MultiModalEncoderModel model(tiny_vocab(), tiny_config(), rng);
  Tensor loss = sum(model.text_prototypes());
  backward(loss);

  auto tensors = model.named_tensors();
  for (auto& [name, t] : tensors) {
    if (name == "prototype.proj" || name == "embed.tokens") {
      double norm = 0.0;
      for (double g : t.grad()) norm += std::abs(g);
      CHECK(norm > 0.0);
    }
  }
}

TEST_CASE("reprogram output shape and attention rows") {
  Rng rng(3);
  MultiModalEncoderModel model(tiny_vocab(), tiny_config(), rng);
  Tensor ts_emb = Tensor::rand_uniform({6, 16}, -1.0, 1.0, rng);
  Tensor z = model.reprogram(ts_emb);
  CHECK(z.shape() == std::vector<std::int64_t>{6, 16});

  for (const Tensor& attn : model.reprogram_attention(ts_emb)) {
    REQUIRE(attn.shape() == std::vector<std::int64_t>{6, 4});
    for (std::int64_t i = 0; i < 6; ++i) {
      double row = 0.0;
      for (std::int64_t j = 0; j < 4; ++j) {
        CHECK(attn.at(i, j) >= 0.0);
        row += attn.at(i, j);
      }
      CHECK(row == doctest::Approx(1.0).epsilon(1e-6));
    }
  }

  CHECK_THROWS_AS(model.reprogram(Tensor::zeros({6, 8})), ShapeError);
}

TEST_CASE("single prototype makes every reprogrammed row identical") {
  Rng rng(4);
  EncoderConfig cfg = tiny_config();
  cfg.prototypes = 1;
  MultiModalEncoderModel model(tiny_vocab(), cfg, rng);
  Tensor ts_emb = Tensor::rand_uniform({6, 16}, -1.0, 1.0, rng);
  Tensor z = model.reprogram(ts_emb);
  for (std::int64_t i = 1; i < 6; ++i) {
    for (std::int64_t j = 0; j < 16; ++j) {
      CHECK(z.at(i, j) == doctest::Approx(z.at(0, j)));
    }
  }
}

TEST_CASE("encode_joint row arithmetic across variants") {
  Rng rng(5);
  AutoencoderModel ae(tiny_ae_config(), rng);
  TimeSeries series = sample_series();

  MultiModalEncoderModel joint(tiny_vocab(), tiny_config(), rng);
  EncoderOutput out = joint.encode_joint(series, ae);
  CHECK(out.rows() == 31);  // n=25 for l=12, f=6
  CHECK(out.matrix.dim(1) == 16);

  Tensor cls = out.cls();
  for (std::int64_t j = 0; j < 16; ++j) CHECK(cls.at(0, j) == out.matrix.at(0, j));

  MultiModalEncoderModel text(tiny_vocab(), tiny_config(EncoderVariant::text_only), rng);
  CHECK(text.encode_joint(series, ae).rows() == 25);

  MultiModalEncoderModel ts(tiny_vocab(), tiny_config(EncoderVariant::timeseries_only), rng);
  CHECK(ts.encode_joint(series, ae).rows() == 7);  // [CLS] + f
}

TEST_CASE("embedding rows respond to token identity") {
  Rng rng(6);
  MultiModalEncoderModel model(tiny_vocab(), tiny_config(), rng);
  JointText a;
  a.ids = {kClsId, 11, 12, 13};
  JointText b;
  b.ids = {kClsId, 11, 14, 13};
  Tensor ea = model.embed_joint_text(a);
  Tensor eb = model.embed_joint_text(b);
  for (std::int64_t j = 0; j < 16; ++j) {
    CHECK(ea.at(0, j) == eb.at(0, j));
    CHECK(ea.at(1, j) == eb.at(1, j));
    CHECK(ea.at(3, j) == eb.at(3, j));
  }
  double diff = 0.0;
  for (std::int64_t j = 0; j < 16; ++j) diff += std::abs(ea.at(2, j) - eb.at(2, j));
  CHECK(diff > 0.0);
}

TEST_CASE("encoder output is sensitive to value permutations") {
  Rng rng(7);
  AutoencoderModel ae(tiny_ae_config(), rng);
  MultiModalEncoderModel model(tiny_vocab(), tiny_config(), rng);

  TimeSeries series = sample_series(12, 11);
  TimeSeries permuted = series;
  std::swap(permuted.values[4], permuted.values[7]);
  // only run when the rounded text differs too; the contract is about X
  Tensor xa = model.encode_joint(series, ae).matrix;
  Tensor xb = model.encode_joint(permuted, ae).matrix;
  double diff = 0.0;
  for (std::int64_t i = 0; i < xa.size(); ++i) diff += std::abs(xa.values()[i] - xb.values()[i]);
  CHECK(diff > 1e-9);
}

TEST_CASE("encode_joint is differentiable end to end") {
  PrecisionGuard precision(Precision::f64);
  Rng rng(8);
  AutoencoderConfig ae_cfg;
  ae_cfg.c1_channels = 4;
  ae_cfg.c2_channels = 2;
  ae_cfg.embed_dim = 8;
  AutoencoderModel ae(ae_cfg, rng);

  EncoderConfig cfg;
  cfg.d = 8;
  cfg.heads = 2;
  cfg.prototypes = 2;
  cfg.blocks = 1;
  MultiModalEncoderModel model(Vocabulary::build({"x"}), cfg, rng);
  TimeSeries series = sample_series(12, 13);

  auto loss_fn = [&] { return sum(model.encode_joint(series, ae).matrix); };
  auto tensors = model.named_tensors();
  for (const char* checked : {"prototype.proj", "reprogram.h0.wq", "enc.b0.ff1.w"}) {
    for (auto& [name, t] : tensors) {
      if (name != checked) continue;
      CHECK(grad_check_param(loss_fn, t) < 1e-5);
    }
  }
}
