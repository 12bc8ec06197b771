#include "tslm/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "tslm/error.hpp"
#include "tslm/textrep.hpp"

namespace tslm {

namespace {

std::vector<std::string> rouge_tokens(const std::string& text) {
  std::string lower = text;
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return split_whitespace(lower);
}

RougeScore from_counts(double overlap, double cand_total, double ref_total) {
  RougeScore s;
  if (cand_total > 0.0) s.precision = 100.0 * overlap / cand_total;
  if (ref_total > 0.0) s.recall = 100.0 * overlap / ref_total;
  if (s.precision + s.recall > 0.0) {
    s.f = 2.0 * s.precision * s.recall / (s.precision + s.recall);
  }
  return s;
}

}  // namespace

RougeScore rouge_n(const std::string& candidate, const std::string& reference, std::int64_t n) {
  if (n < 1) throw ParameterError("rouge_n: n must be >= 1");
  const auto cand = rouge_tokens(candidate);
  const auto ref = rouge_tokens(reference);
  auto ngrams = [n](const std::vector<std::string>& toks) {
    std::map<std::string, std::int64_t> counts;
    if (static_cast<std::int64_t>(toks.size()) < n) return counts;
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= toks.size(); ++i) {
      std::string key;
      for (std::size_t j = 0; j < static_cast<std::size_t>(n); ++j) {
        key += toks[i + j];
        key += '\x1f';
      }
      ++counts[key];
    }
    return counts;
  };
  const auto cand_counts = ngrams(cand);
  const auto ref_counts = ngrams(ref);
  double cand_total = 0.0, ref_total = 0.0, overlap = 0.0;
  for (const auto& [k, c] : cand_counts) cand_total += static_cast<double>(c);
  for (const auto& [k, c] : ref_counts) ref_total += static_cast<double>(c);
  for (const auto& [k, c] : cand_counts) {
    auto it = ref_counts.find(k);
    if (it != ref_counts.end()) overlap += static_cast<double>(std::min(c, it->second));
  }
  return from_counts(overlap, cand_total, ref_total);
}

RougeScore rouge_l(const std::string& candidate, const std::string& reference) {
  const auto cand = rouge_tokens(candidate);
  const auto ref = rouge_tokens(reference);
  if (cand.empty() || ref.empty()) return {};
  const std::size_t n = cand.size(), m = ref.size();
  std::vector<std::size_t> prev(m + 1, 0), cur(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      cur[j] = cand[i - 1] == ref[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  const double lcs = static_cast<double>(prev[m]);
  return from_counts(lcs, static_cast<double>(n), static_cast<double>(m));
}

double tslm_score(const DenoiserModel& denoiser, const TimeSeries& series,
                  const std::string& caption) {
  return denoiser.similarity(series, caption);
}

std::vector<ReferenceGroup> group_references(const std::vector<CaptionedPair>& pairs) {
  std::vector<ReferenceGroup> groups;
  std::map<std::string, std::size_t> index;
  for (const auto& pair : pairs) {
    std::string key;
    for (std::int64_t v : rounded_values(pair.series)) {
      key += std::to_string(v);
      key += ',';
    }
    auto it = index.find(key);
    if (it == index.end()) {
      index.emplace(key, groups.size());
      groups.push_back({pair.series, {pair.caption}});
    } else {
      groups[it->second].references.push_back(pair.caption);
    }
  }
  return groups;
}

MetricsRow evaluate_run(const TslmModel& model, const AutoencoderModel& ae,
                        const DenoiserModel* denoiser,
                        const std::vector<CaptionedPair>& testset, const SamplingConfig& cfg) {
  if (testset.empty()) throw ParameterError("evaluate_run: empty test set");
  const auto groups = group_references(testset);

  double sum_r1 = 0.0, sum_r2 = 0.0, sum_rl = 0.0, sum_score = 0.0;
  Rng base(cfg.seed);
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const auto& group = groups[gi];
    SamplingConfig series_cfg = cfg;
    series_cfg.seed = base.child(gi).next_u64();
    const auto candidates = generate_captions(group.series, model, ae, series_cfg);

    double best_r1 = 0.0, best_r2 = 0.0, best_rl = 0.0, best_score = 0.0;
    bool score_set = false;
    for (const auto& cand : candidates) {
      for (const auto& ref : group.references) {
        best_r1 = std::max(best_r1, rouge_n(cand, ref, 1).f);
        best_r2 = std::max(best_r2, rouge_n(cand, ref, 2).f);
        best_rl = std::max(best_rl, rouge_l(cand, ref).f);
      }
      if (denoiser && !cand.empty()) {
        const double s = tslm_score(*denoiser, group.series, cand);
        best_score = score_set ? std::max(best_score, s) : s;
        score_set = true;
      }
    }
    sum_r1 += best_r1;
    sum_r2 += best_r2;
    sum_rl += best_rl;
    if (score_set) sum_score += best_score;
  }

  MetricsRow row;
  const double count = static_cast<double>(groups.size());
  row.rouge1 = sum_r1 / count;
  row.rouge2 = sum_r2 / count;
  row.rougeL = sum_rl / count;
  if (denoiser) row.tslm_score = sum_score / count;
  row.series_count = static_cast<std::int64_t>(groups.size());
  return row;
}

MetricsReport sweep_temperature(const TslmModel& model, const AutoencoderModel& ae,
                                const DenoiserModel* denoiser,
                                const std::vector<CaptionedPair>& testset,
                                const SamplingConfig& cfg, const std::vector<double>& grid) {
  if (grid.empty()) throw ParameterError("sweep_temperature: empty grid");
  MetricsReport report;
  for (double t : grid) {
    SamplingConfig point = cfg;
    point.temperature = t;
    MetricsRow row = evaluate_run(model, ae, denoiser, testset, point);
    row.axis_name = "temperature";
    row.axis_value = t;
    report.rows.push_back(row);
  }
  return report;
}

MetricsReport sweep_fraction(const std::vector<CaptionedPair>& original,
                             const std::vector<CaptionedPair>& generated,
                             const std::vector<CaptionedPair>& testset,
                             const AutoencoderModel& ae, const DenoiserModel* denoiser,
                             const SamplingConfig& cfg, const FractionSweepSpec& spec) {
  if (spec.fractions.empty()) throw ParameterError("sweep_fraction: no fractions");
  MetricsReport report;
  for (double frac : spec.fractions) {
    // deterministic subset: shuffle once per point with the spec seed
    std::vector<CaptionedPair> train = original;
    std::vector<CaptionedPair> pool = generated;
    Rng rng(spec.seed);
    rng.shuffle(pool);
    const std::size_t take = static_cast<std::size_t>(
        static_cast<double>(pool.size()) * frac / 100.0);
    train.insert(train.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(take));

    if (ae.config().embed_dim != spec.encoder_config.d) {
      throw ParameterError("sweep_fraction: encoder d does not match autoencoder d");
    }
    std::vector<std::string> corpus;
    for (const auto& p : train) corpus.push_back(p.caption);
    Rng model_rng(spec.seed + 17);
    MultiModalEncoderModel enc(Vocabulary::build(corpus), spec.encoder_config, model_rng);
    TslmModel model(std::move(enc), spec.decoder_config, model_rng);
    train_tslm(model, ae, train, spec.epochs, spec.batch, spec.seed, spec.optimizer);

    MetricsRow row = evaluate_run(model, ae, denoiser, testset, cfg);
    row.axis_name = "fraction";
    row.axis_value = frac;
    report.rows.push_back(row);
  }
  return report;
}

std::string MetricsReport::to_json() const {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& row : rows) {
    nlohmann::json r;
    r["rouge1"] = row.rouge1;
    r["rouge2"] = row.rouge2;
    r["rougeL"] = row.rougeL;
    if (row.tslm_score) r["tslm_score"] = *row.tslm_score;
    if (row.axis_value) {
      r["axis"] = row.axis_name;
      r["axis_value"] = *row.axis_value;
    }
    r["series_count"] = row.series_count;
    j.push_back(r);
  }
  return j.dump(2);
}

std::string MetricsReport::to_csv() const {
  std::ostringstream out;
  out << "axis,axis_value,rouge1,rouge2,rougeL,tslm_score,series_count\n";
  for (const auto& row : rows) {
    out << row.axis_name << ',';
    if (row.axis_value) out << *row.axis_value;
    out << ',' << row.rouge1 << ',' << row.rouge2 << ',' << row.rougeL << ',';
    if (row.tslm_score) out << *row.tslm_score;
    out << ',' << row.series_count << '\n';
  }
  return out.str();
}

void MetricsReport::save(const std::string& json_path) const {
  std::ofstream out(json_path);
  if (!out) throw FormatError("cannot write " + json_path);
  out << to_json() << "\n";
  std::string csv_path = json_path;
  const auto dot = csv_path.rfind('.');
  csv_path = (dot == std::string::npos ? csv_path : csv_path.substr(0, dot)) + ".csv";
  std::ofstream csv(csv_path);
  if (!csv) throw FormatError("cannot write " + csv_path);
  csv << to_csv();
}

}  // namespace tslm
