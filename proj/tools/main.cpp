#include <algorithm>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tslm/checkpoint.hpp"
#include "tslm/config.hpp"
#include "tslm/datagen.hpp"
#include "tslm/error.hpp"
#include "tslm/jsonl.hpp"
#include "tslm/llm_client.hpp"
#include "tslm/metrics.hpp"

namespace {

using namespace tslm;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitTransport = 4;

std::vector<CaptionedPair> load_many(const std::vector<std::string>& paths) {
  std::vector<CaptionedPair> all;
  for (const auto& path : paths) {
    auto pairs = load_pairs_jsonl(path);
    all.insert(all.end(), pairs.begin(), pairs.end());
  }
  return all;
}

TimeSeries parse_series_arg(const std::string& arg) {
  TimeSeries series;
  std::stringstream in(arg);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    series.values.push_back(std::stod(item));
  }
  validate_series(series);
  return series;
}

Vocabulary vocab_from_pairs(const std::vector<CaptionedPair>& pairs) {
  std::vector<std::string> corpus;
  corpus.reserve(pairs.size());
  for (const auto& p : pairs) corpus.push_back(p.caption);
  return Vocabulary::build(corpus);
}

struct CommonModelFlags {
  PipelineConfig config;

  void attach(CLI::App* cmd, bool with_dims) {
    cmd->add_option("--seed", config.seed, "deterministic run seed");
    if (with_dims) {
      cmd->add_option("--d", config.d, "embedding width");
      cmd->add_option("--heads", config.heads, "attention heads");
      cmd->add_option("--prototypes", config.prototypes, "text prototypes p");
      cmd->add_option("--enc-blocks", config.enc_blocks, "encoder transformer blocks");
      cmd->add_option("--dec-blocks", config.dec_blocks, "decoder transformer blocks");
      cmd->add_option("--lr", config.optimizer.base_lr, "AdamW base learning rate");
      cmd->add_option("--warmup-ratio", config.optimizer.warmup_ratio, "LR warmup ratio");
      cmd->add_option("--weight-decay", config.optimizer.weight_decay, "AdamW weight decay");
    }
  }
};

int run_gen_data(const std::string& demos_path, const std::string& out_path,
                 std::int64_t count, bool bootstrap, double group_threshold,
                 const std::string& backend, double inject_rate,
                 const std::string& noise_report, std::uint64_t seed,
                 std::int64_t min_len, std::int64_t max_len) {
  auto demos = load_pairs_jsonl(demos_path);
  DatagenConfig cfg;
  cfg.group_threshold = group_threshold;
  cfg.min_length = min_len;
  cfg.max_length = max_len;
  const GenBackend kind =
      backend == "remote" ? GenBackend::remote : GenBackend::template_based;
  auto generated = generate_dataset(demos, count, bootstrap, kind, seed, cfg);

  std::vector<std::int64_t> noisy;
  if (inject_rate > 0.0) {
    auto [data, indices] = inject_mispairs(generated, inject_rate, seed + 1);
    generated = std::move(data);
    noisy = std::move(indices);
    std::cerr << "gen-data: injected " << noisy.size() << " mispairs\n";
  }
  save_pairs_jsonl(generated, out_path);
  if (!noise_report.empty()) {
    std::ofstream out(noise_report);
    out << nlohmann::json(noisy).dump() << "\n";
  }
  std::cout << "generated " << generated.size() << " pairs, duplicate rate "
            << duplicate_rate(generated) << "%\n";
  return kExitOk;
}

int run_train_ae(const std::vector<std::string>& data_paths, const std::string& out_path,
                 std::int64_t epochs, std::int64_t batch, PipelineConfig config) {
  config.validate();
  auto pairs = load_many(data_paths);
  if (pairs.empty()) throw FormatError("train-ae: no pairs in input");
  std::vector<TimeSeries> series;
  series.reserve(pairs.size());
  for (const auto& p : pairs) series.push_back(p.series);

  Rng rng(config.seed);
  AutoencoderModel model(config.autoencoder(), rng);
  auto stats = train_autoencoder(model, series, epochs, batch, config.seed, config.optimizer);
  save_model(model, out_path);
  std::cout << "autoencoder: epoch0 loss " << stats.epoch_losses.front() << ", final loss "
            << stats.epoch_losses.back() << "\n";
  return kExitOk;
}

int run_train_denoiser(const std::string& data_path, const std::string& ae_path,
                       const std::string& out_path, std::int64_t batch, std::int64_t epochs,
                       const std::string& vocab_out, PipelineConfig config) {
  config.validate();
  auto pairs = load_pairs_jsonl(data_path);
  AutoencoderModel ae = load_autoencoder(ae_path);
  if (ae.config().embed_dim != config.d) {
    throw FormatError("train-denoiser: autoencoder width does not match --d");
  }
  Vocabulary vocab = vocab_from_pairs(pairs);
  if (!vocab_out.empty()) vocab.save_json(vocab_out);

  Rng rng(config.seed);
  MultiModalEncoderModel encoder(std::move(vocab), config.encoder(), rng);
  DenoiserModel model(std::move(encoder), std::move(ae));
  auto stats = train_denoiser(model, pairs, batch, epochs, config.seed, config.optimizer);
  save_model(model, out_path);
  std::cout << "denoiser: epoch0 loss " << stats.epoch_losses.front() << ", final loss "
            << stats.epoch_losses.back() << "\n";
  return kExitOk;
}

int run_denoise(const std::string& data_path, const std::string& model_path, double threshold,
                const std::string& out_path, const std::string& report_path) {
  auto pairs = load_pairs_jsonl(data_path);
  DenoiserModel model = load_denoiser(model_path);
  auto scored = score_pairs(pairs, model);
  auto result = filter_pairs(scored, threshold);
  save_pairs_jsonl(result.kept, out_path);

  nlohmann::json report;
  report["count"] = scored.size();
  report["kept"] = result.kept.size();
  report["removed"] = result.removed.size();
  report["mean"] = result.stats.mean;
  report["std"] = result.stats.stddev;
  report["threshold"] = threshold;
  report["suggested_interval"] = {result.stats.interval_low, result.stats.interval_high};
  if (!report_path.empty()) {
    std::ofstream out(report_path);
    if (!out) throw FormatError("cannot write " + report_path);
    out << report.dump(2) << "\n";
  }
  std::cout << report.dump(2) << "\n";
  return kExitOk;
}

int run_train(const std::vector<std::string>& data_paths, const std::string& ae_path,
              const std::string& out_path, std::int64_t epochs, std::int64_t batch,
              double fraction, const std::string& variant, const std::string& vocab_out,
              PipelineConfig config) {
  config.validate();
  auto pairs = load_many(data_paths);
  if (pairs.empty()) throw FormatError("train: no pairs in input");

  // --fraction applies to generated-source pairs; originals always train.
  if (fraction < 100.0) {
    std::vector<CaptionedPair> original, generated;
    for (auto& p : pairs) {
      (p.source == PairSource::generated ? generated : original).push_back(p);
    }
    Rng rng(config.seed + 3);
    rng.shuffle(generated);
    const std::size_t take = static_cast<std::size_t>(
        static_cast<double>(generated.size()) * std::clamp(fraction, 0.0, 100.0) / 100.0);
    pairs = std::move(original);
    pairs.insert(pairs.end(), generated.begin(),
                 generated.begin() + static_cast<std::ptrdiff_t>(take));
    if (pairs.empty()) throw FormatError("train: fraction filter removed every pair");
  }

  AutoencoderModel ae = load_autoencoder(ae_path);
  if (ae.config().embed_dim != config.d) {
    throw FormatError("train: autoencoder width does not match --d");
  }
  Vocabulary vocab = vocab_from_pairs(pairs);
  if (!vocab_out.empty()) vocab.save_json(vocab_out);

  Rng rng(config.seed);
  MultiModalEncoderModel encoder(std::move(vocab),
                                 config.encoder(encoder_variant_from_string(variant)), rng);
  TslmModel model(std::move(encoder), config.decoder(), rng);
  auto stats = train_tslm(model, ae, pairs, epochs, batch, config.seed, config.optimizer);
  save_model(model, out_path);
  std::cout << "tslm(" << variant << "): epoch0 loss " << stats.epoch_losses.front()
            << ", final loss " << stats.epoch_losses.back() << "\n";
  return kExitOk;
}

int run_caption(const std::string& model_path, const std::string& ae_path,
                const std::string& series_arg, SamplingConfig sampling,
                const std::string& summarize) {
  TslmModel model = load_tslm(model_path);
  AutoencoderModel ae = load_autoencoder(ae_path);
  TimeSeries series = parse_series_arg(series_arg);

  auto captions = generate_captions(series, model, ae, sampling);
  for (const auto& c : captions) std::cout << c << "\n";
  if (summarize != "none") {
    const SummarizeBackend backend =
        summarize == "remote" ? SummarizeBackend::remote : SummarizeBackend::fallback;
    std::cout << "summary: " << summarize_captions(captions, backend) << "\n";
  }
  return kExitOk;
}

int run_evaluate(const std::string& model_path, const std::string& ae_path,
                 const std::string& denoiser_path, const std::string& test_path,
                 const std::string& sweep, const std::string& report_path,
                 const std::vector<std::string>& data_paths, std::int64_t epochs,
                 std::int64_t batch, const std::vector<double>& temperatures,
                 SamplingConfig sampling, PipelineConfig config) {
  AutoencoderModel ae = load_autoencoder(ae_path);
  auto testset = load_pairs_jsonl(test_path);

  std::optional<DenoiserModel> denoiser;
  if (!denoiser_path.empty()) denoiser.emplace(load_denoiser(denoiser_path));
  const DenoiserModel* denoiser_ptr = denoiser ? &*denoiser : nullptr;

  MetricsReport report;
  if (sweep == "temperature") {
    TslmModel model = load_tslm(model_path);
    report = sweep_temperature(model, ae, denoiser_ptr, testset, sampling, temperatures);
  } else if (sweep == "fraction") {
    if (data_paths.empty()) {
      throw ParameterError("evaluate --sweep fraction needs --data with training pairs");
    }
    auto pairs = load_many(data_paths);
    std::vector<CaptionedPair> original, generated;
    for (auto& p : pairs) {
      (p.source == PairSource::generated ? generated : original).push_back(p);
    }
    FractionSweepSpec spec;
    config.validate();
    spec.encoder_config = config.encoder();
    spec.decoder_config = config.decoder();
    spec.epochs = epochs;
    spec.batch = batch;
    spec.seed = config.seed;
    spec.optimizer = config.optimizer;
    report = sweep_fraction(original, generated, testset, ae, denoiser_ptr, sampling, spec);
  } else {
    TslmModel model = load_tslm(model_path);
    MetricsRow row = evaluate_run(model, ae, denoiser_ptr, testset, sampling);
    report.rows.push_back(row);
  }

  report.save(report_path);
  std::cout << report.to_csv();
  return kExitOk;
}

int run_score(const std::string& denoiser_path, const std::string& pairs_path,
              const std::string& out_path) {
  DenoiserModel model = load_denoiser(denoiser_path);
  auto pairs = load_pairs_jsonl(pairs_path);
  auto scored = score_pairs(pairs, model);
  save_pairs_jsonl(scored, out_path);
  std::cout << "scored " << scored.size() << " pairs\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TSLM time-series captioning pipeline"};
  app.require_subcommand(1);

  // gen-data
  std::string demos_path, gen_out, gen_backend = "template", noise_report;
  std::int64_t gen_count = 1000, gen_min_len = 12, gen_max_len = 50;
  bool gen_bootstrap = false;
  double group_threshold = 60.0, inject_rate = 0.0;
  std::uint64_t gen_seed = 0;
  auto* gen = app.add_subcommand("gen-data", "generate synthetic pairs from demonstrations");
  gen->add_option("--demos", demos_path, "JSONL demonstration pool")->required();
  gen->add_option("--out", gen_out, "output JSONL")->required();
  gen->add_option("--count", gen_count, "pairs to generate")->required();
  gen->add_flag("--bootstrap", gen_bootstrap, "feed generations back into the pool");
  gen->add_option("--group-threshold", group_threshold, "caption similarity threshold");
  gen->add_option("--backend", gen_backend, "template|remote")
      ->check(CLI::IsMember({"template", "remote"}));
  gen->add_option("--inject-noise", inject_rate, "mispair injection rate");
  gen->add_option("--noise-report", noise_report, "write injected indices JSON here");
  gen->add_option("--min-length", gen_min_len, "minimum generated length");
  gen->add_option("--max-length", gen_max_len, "maximum generated length");
  gen->add_option("--seed", gen_seed, "deterministic run seed");

  // train-ae
  std::vector<std::string> ae_data;
  std::string ae_out;
  std::int64_t ae_epochs = 500, ae_batch = 32;
  CommonModelFlags ae_flags;
  auto* train_ae = app.add_subcommand("train-ae", "train the 1D-CNN autoencoder");
  train_ae->add_option("--data", ae_data, "JSONL pair files")->required();
  train_ae->add_option("--out", ae_out, "output checkpoint")->required();
  train_ae->add_option("--epochs", ae_epochs, "training epochs");
  train_ae->add_option("--batch", ae_batch, "batch size");
  train_ae->add_option("--d", ae_flags.config.d, "embedding width");
  train_ae->add_option("--lr", ae_flags.config.optimizer.base_lr, "AdamW base learning rate");
  train_ae->add_option("--seed", ae_flags.config.seed, "deterministic run seed");

  // train-denoiser
  std::string den_data, den_ae, den_out, den_vocab_out;
  std::int64_t den_batch = 8, den_epochs = 20;
  CommonModelFlags den_flags;
  auto* train_den = app.add_subcommand("train-denoiser", "train the retrieval scorer");
  train_den->add_option("--data", den_data, "JSONL groundtruth pairs")->required();
  train_den->add_option("--ae", den_ae, "autoencoder checkpoint")->required();
  train_den->add_option("--out", den_out, "output checkpoint")->required();
  train_den->add_option("--batch", den_batch, "in-batch negatives batch size B");
  train_den->add_option("--epochs", den_epochs, "training epochs");
  train_den->add_option("--vocab-out", den_vocab_out, "also write the vocabulary JSON");
  den_flags.attach(train_den, true);

  // denoise
  std::string dn_data, dn_model, dn_out, dn_report;
  double dn_threshold = 0.0;
  auto* denoise = app.add_subcommand("denoise", "score and filter generated pairs");
  denoise->add_option("--data", dn_data, "JSONL generated pairs")->required();
  denoise->add_option("--model", dn_model, "denoiser checkpoint")->required();
  denoise->add_option("--threshold", dn_threshold, "keep pairs with score >= Th");
  denoise->add_option("--out", dn_out, "kept pairs JSONL")->required();
  denoise->add_option("--report", dn_report, "denoise report JSON");

  // train
  std::vector<std::string> tr_data;
  std::string tr_ae, tr_out, tr_variant = "joint", tr_vocab_out;
  std::int64_t tr_epochs = 10, tr_batch = 8;
  double tr_fraction = 100.0;
  CommonModelFlags tr_flags;
  auto* train = app.add_subcommand("train", "train the caption decoder");
  train->add_option("--data", tr_data, "JSONL pair files (original + denoised)")->required();
  train->add_option("--ae", tr_ae, "autoencoder checkpoint")->required();
  train->add_option("--out", tr_out, "output checkpoint")->required();
  train->add_option("--epochs", tr_epochs, "training epochs");
  train->add_option("--batch", tr_batch, "batch size");
  train->add_option("--fraction", tr_fraction, "percent of generated pairs to use");
  train->add_option("--variant", tr_variant, "joint|text|timeseries")
      ->check(CLI::IsMember({"joint", "text", "timeseries"}));
  train->add_option("--vocab-out", tr_vocab_out, "also write the vocabulary JSON");
  tr_flags.attach(train, true);

  // caption
  std::string cap_model, cap_ae, cap_series, cap_summarize = "none";
  SamplingConfig cap_sampling;
  auto* caption = app.add_subcommand("caption", "generate captions for one series");
  caption->add_option("--model", cap_model, "tslm checkpoint")->required();
  caption->add_option("--ae", cap_ae, "autoencoder checkpoint")->required();
  caption->add_option("--series", cap_series, "comma-separated values")->required();
  caption->add_option("-k,--captions", cap_sampling.captions, "captions per series K");
  caption->add_option("--top-k", cap_sampling.top_k, "top-k truncation");
  caption->add_option("--top-p", cap_sampling.top_p, "top-p truncation");
  caption->add_option("--temperature", cap_sampling.temperature, "sampling temperature");
  caption->add_option("--max-len", cap_sampling.max_len, "max caption tokens");
  caption->add_option("--summarize", cap_summarize, "remote|fallback|none")
      ->check(CLI::IsMember({"remote", "fallback", "none"}));
  caption->add_option("--seed", cap_sampling.seed, "sampling seed");

  // evaluate
  std::string ev_model, ev_ae, ev_denoiser, ev_test, ev_sweep, ev_report = "report.json";
  std::vector<std::string> ev_data;
  std::int64_t ev_epochs = 10, ev_batch = 8;
  std::vector<double> ev_temperatures = {0.7, 0.8, 0.9, 0.95, 1.0};
  SamplingConfig ev_sampling;
  CommonModelFlags ev_flags;
  auto* evaluate = app.add_subcommand("evaluate", "metrics report over a test set");
  evaluate->add_option("--model", ev_model, "tslm checkpoint");
  evaluate->add_option("--ae", ev_ae, "autoencoder checkpoint")->required();
  evaluate->add_option("--denoiser", ev_denoiser, "denoiser checkpoint (for TSLMScore)");
  evaluate->add_option("--test", ev_test, "JSONL test pairs")->required();
  evaluate->add_option("--sweep", ev_sweep, "temperature|fraction")
      ->check(CLI::IsMember({"temperature", "fraction"}));
  evaluate->add_option("--report", ev_report, "report JSON path (CSV written alongside)");
  evaluate->add_option("--data", ev_data, "training pairs (fraction sweep)");
  evaluate->add_option("--epochs", ev_epochs, "training epochs (fraction sweep)");
  evaluate->add_option("--batch", ev_batch, "batch size (fraction sweep)");
  evaluate->add_option("--temperatures", ev_temperatures, "temperature grid");
  evaluate->add_option("-k,--captions", ev_sampling.captions, "captions per series K");
  evaluate->add_option("--top-k", ev_sampling.top_k, "top-k truncation");
  evaluate->add_option("--top-p", ev_sampling.top_p, "top-p truncation");
  evaluate->add_option("--temperature", ev_sampling.temperature, "sampling temperature");
  ev_flags.attach(evaluate, true);

  // score
  std::string sc_denoiser, sc_pairs, sc_out;
  auto* score = app.add_subcommand("score", "annotate pairs with similarity scores");
  score->add_option("--denoiser", sc_denoiser, "denoiser checkpoint")->required();
  score->add_option("--pairs", sc_pairs, "JSONL pairs")->required();
  score->add_option("--out", sc_out, "scored pairs JSONL")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (gen->parsed()) {
      return run_gen_data(demos_path, gen_out, gen_count, gen_bootstrap, group_threshold,
                          gen_backend, inject_rate, noise_report, gen_seed, gen_min_len,
                          gen_max_len);
    }
    if (train_ae->parsed()) {
      return run_train_ae(ae_data, ae_out, ae_epochs, ae_batch, ae_flags.config);
    }
    if (train_den->parsed()) {
      return run_train_denoiser(den_data, den_ae, den_out, den_batch, den_epochs,
                                den_vocab_out, den_flags.config);
    }
    if (denoise->parsed()) {
      return run_denoise(dn_data, dn_model, dn_threshold, dn_out, dn_report);
    }
    if (train->parsed()) {
      return run_train(tr_data, tr_ae, tr_out, tr_epochs, tr_batch, tr_fraction, tr_variant,
                       tr_vocab_out, tr_flags.config);
    }
    if (caption->parsed()) {
      return run_caption(cap_model, cap_ae, cap_series, cap_sampling, cap_summarize);
    }
    if (evaluate->parsed()) {
      ev_sampling.seed = ev_flags.config.seed;
      if (ev_sweep != "fraction" && ev_model.empty()) {
        std::cerr << "evaluate: --model is required unless --sweep fraction\n";
        return kExitUsage;
      }
      return run_evaluate(ev_model, ev_ae, ev_denoiser, ev_test, ev_sweep, ev_report, ev_data,
                          ev_epochs, ev_batch, ev_temperatures, ev_sampling, ev_flags.config);
    }
    if (score->parsed()) {
      return run_score(sc_denoiser, sc_pairs, sc_out);
    }
  } catch (const TransportError& e) {
    std::cerr << "transport error: " << e.what() << "\n";
    return kExitTransport;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const FormatError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const ProtocolError& e) {
    std::cerr << "protocol error: " << e.what() << "\n";
    return kExitData;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
