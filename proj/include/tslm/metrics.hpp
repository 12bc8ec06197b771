#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tslm/decoder.hpp"
#include "tslm/denoiser.hpp"
#include "tslm/timeseries.hpp"

namespace tslm {

struct RougeScore {
  double precision = 0.0;  // all three on the 0..100 scale
  double recall = 0.0;
  double f = 0.0;
};

// Clipped n-gram overlap over lower-cased whitespace tokens; no stemming.
RougeScore rouge_n(const std::string& candidate, const std::string& reference, std::int64_t n);
// Longest common subsequence over tokens.
RougeScore rouge_l(const std::string& candidate, const std::string& reference);

// The learned metric: similarity under the trained retrieval model.
double tslm_score(const DenoiserModel& denoiser, const TimeSeries& series,
                  const std::string& caption);

struct MetricsRow {
  double rouge1 = 0.0;
  double rouge2 = 0.0;
  double rougeL = 0.0;
  std::optional<double> tslm_score;     // absent without a denoiser
  std::optional<double> axis_value;     // sweep point
  std::string axis_name;                // "temperature" | "fraction" | ""
  std::int64_t series_count = 0;
};

struct MetricsReport {
  std::vector<MetricsRow> rows;

  std::string to_json() const;
  std::string to_csv() const;
  void save(const std::string& json_path) const;  // also writes .csv sibling
};

// Generates K captions per distinct test series, scores every candidate
// against every reference for that series, keeps the per-series best F and
// averages. Deterministic given cfg.seed.
MetricsRow evaluate_run(const TslmModel& model, const AutoencoderModel& ae,
                        const DenoiserModel* denoiser,
                        const std::vector<CaptionedPair>& testset, const SamplingConfig& cfg);

MetricsReport sweep_temperature(const TslmModel& model, const AutoencoderModel& ae,
                                const DenoiserModel* denoiser,
                                const std::vector<CaptionedPair>& testset,
                                const SamplingConfig& cfg, const std::vector<double>& grid);

// Retrains one model per fraction of generated data (original pairs always
// included) and evaluates each; axis {0,25,50,75,100} percent.
struct FractionSweepSpec {
  EncoderConfig encoder_config;
  DecoderConfig decoder_config;
  std::int64_t epochs = 10;
  std::int64_t batch = 8;
  std::uint64_t seed = 0;
  AdamWConfig optimizer;
  std::vector<double> fractions = {0, 25, 50, 75, 100};
};

MetricsReport sweep_fraction(const std::vector<CaptionedPair>& original,
                             const std::vector<CaptionedPair>& generated,
                             const std::vector<CaptionedPair>& testset,
                             const AutoencoderModel& ae, const DenoiserModel* denoiser,
                             const SamplingConfig& cfg, const FractionSweepSpec& spec);

// Groups pairs by identical rounded series; the captions become references.
struct ReferenceGroup {
  TimeSeries series;
  std::vector<std::string> references;
};
std::vector<ReferenceGroup> group_references(const std::vector<CaptionedPair>& pairs);

}  // namespace tslm
