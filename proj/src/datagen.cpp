#include "tslm/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "tslm/error.hpp"
#include "tslm/llm_client.hpp"
#include "tslm/textrep.hpp"

namespace tslm {

namespace {

struct TemplateBank {
  PatternLabel pattern;
  std::vector<std::string> captions;
};

const std::vector<TemplateBank>& template_banks() {
  static const std::vector<TemplateBank> banks = {
      {{Trend::increase, Location::beginning},
       {"increases at the beginning", "rises early on", "climbs at the start",
        "goes up in the early phase", "grows at the beginning", "shows an early increase",
        "moves up near the start"}},
      {{Trend::increase, Location::middle},
       {"increases in the middle", "rises around the middle", "climbs midway through",
        "goes up in the middle section", "grows in the central part",
        "increases around the center", "moves up in the middle"}},
      {{Trend::increase, Location::end},
       {"increases at the end", "rises in the second half", "climbs toward the end",
        "goes up late in the series", "grows near the end", "shows a late increase",
        "moves up at the end"}},
      {{Trend::decrease, Location::beginning},
       {"decreases at the beginning", "falls early on", "drops at the start",
        "goes down in the early phase", "declines at the beginning",
        "shows an early decrease", "moves down near the start"}},
      {{Trend::decrease, Location::middle},
       {"decreases in the middle", "falls around the middle", "drops midway through",
        "goes down in the middle section", "declines in the central part",
        "decreases around the center", "moves down in the middle"}},
      {{Trend::decrease, Location::end},
       {"decreases at the end", "falls in the second half", "drops toward the end",
        "goes down late in the series", "declines near the end", "shows a late decrease",
        "moves down at the end"}},
  };
  return banks;
}

std::string lower(const std::string& s) {
  std::string out = s;
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool contains_word(const std::vector<std::string>& words, std::initializer_list<const char*> any) {
  for (const auto& w : words) {
    for (const char* k : any) {
      if (w == k) return true;
    }
  }
  return false;
}

std::uint64_t fnv1a(const std::string& s, std::uint64_t h) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string dup_key(const CaptionedPair& pair) {
  std::string key;
  for (std::int64_t v : rounded_values(pair.series)) {
    key += std::to_string(v);
    key += ',';
  }
  key += '|';
  key += pair.caption;
  return key;
}

}  // namespace

const std::vector<PatternLabel>& all_patterns() {
  static const std::vector<PatternLabel> patterns = [] {
    std::vector<PatternLabel> out;
    for (const auto& bank : template_banks()) out.push_back(bank.pattern);
    return out;
  }();
  return patterns;
}

std::string to_string(const PatternLabel& p) {
  std::string s = p.trend == Trend::increase ? "increase" : "decrease";
  s += "/";
  switch (p.location) {
    case Location::beginning: s += "beginning"; break;
    case Location::middle: s += "middle"; break;
    case Location::end: s += "end"; break;
  }
  return s;
}

TimeSeries gen_synth_series(const PatternLabel& pattern, std::int64_t l, std::uint64_t seed,
                            double noise_amplitude) {
  if (l < kMinGeneratedLength || l > kMaxGeneratedLength) {
    throw ParameterError("gen_synth_series: length " + std::to_string(l) + " outside [12,50]");
  }
  Rng rng(seed);

  std::int64_t win_lo = 0, win_hi = l;
  switch (pattern.location) {
    case Location::beginning:
      win_lo = 0;
      win_hi = static_cast<std::int64_t>(0.4 * static_cast<double>(l));
      break;
    case Location::middle:
      win_lo = static_cast<std::int64_t>(0.3 * static_cast<double>(l));
      win_hi = static_cast<std::int64_t>(0.7 * static_cast<double>(l));
      break;
    case Location::end:
      win_lo = static_cast<std::int64_t>(0.6 * static_cast<double>(l));
      win_hi = l;
      break;
  }

  std::int64_t seg_len = 3 + rng.uniform_int(std::max<std::int64_t>(1, l / 3 - 2));
  seg_len = std::min(seg_len, win_hi - win_lo);
  const std::int64_t seg_start = win_lo + rng.uniform_int(win_hi - win_lo - seg_len + 1);
  const std::int64_t seg_end = seg_start + seg_len;  // exclusive

  const double mag = rng.uniform(1.5, 6.0);
  const double slope = pattern.trend == Trend::increase ? mag : -mag;
  const double swing = mag * static_cast<double>(seg_len - 1);
  const double base = pattern.trend == Trend::increase ? rng.uniform(2.0, 96.0 - swing)
                                                       : rng.uniform(2.0 + swing, 96.0);
  const double final_level = base + slope * static_cast<double>(seg_len - 1);

  TimeSeries series;
  series.values.reserve(static_cast<std::size_t>(l));
  for (std::int64_t i = 0; i < l; ++i) {
    double v;
    if (i < seg_start) {
      v = base;
    } else if (i < seg_end) {
      v = base + slope * static_cast<double>(i - seg_start);
    } else {
      v = final_level;
    }
    if (noise_amplitude > 0.0) v += rng.uniform(-noise_amplitude, noise_amplitude);
    // upper clamp below 99.5 so rounded text rendering stays within (0,100)
    series.values.push_back(std::clamp(v, 0.5, 99.4));
  }
  return series;
}

std::string caption_from_pattern(const PatternLabel& pattern, std::uint64_t seed) {
  Rng rng(seed);
  for (const auto& bank : template_banks()) {
    if (bank.pattern == pattern) {
      return bank.captions[static_cast<std::size_t>(
          rng.uniform_int(static_cast<std::int64_t>(bank.captions.size())))];
    }
  }
  throw ParameterError("caption_from_pattern: unknown pattern");
}

std::optional<PatternLabel> infer_pattern(const std::string& caption) {
  const auto words = split_whitespace(lower(caption));

  std::optional<Trend> trend;
  if (contains_word(words, {"increases", "increase", "increasing", "rises", "rise", "rising",
                            "climbs", "climb", "grows", "grow", "up"})) {
    trend = Trend::increase;
  } else if (contains_word(words, {"decreases", "decrease", "decreasing", "falls", "fall",
                                   "falling", "drops", "drop", "declines", "decline", "down"})) {
    trend = Trend::decrease;
  }

  std::optional<Location> location;
  if (contains_word(words, {"beginning", "start", "starts", "early"})) {
    location = Location::beginning;
  } else if (contains_word(words, {"middle", "midway", "central", "center"})) {
    location = Location::middle;
  } else if (contains_word(words, {"end", "late", "half", "second"})) {
    location = Location::end;
  }

  if (!trend || !location) return std::nullopt;
  return PatternLabel{*trend, *location};
}

double string_similarity(const std::string& a, const std::string& b) {
  if (a.empty() && b.empty()) return 100.0;
  const std::size_t n = a.size(), m = b.size();
  std::vector<std::size_t> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  const double dist = static_cast<double>(prev[m]);
  return 100.0 * (1.0 - dist / static_cast<double>(std::max(n, m)));
}

std::vector<std::vector<std::int64_t>> group_demonstrations(
    const std::vector<CaptionedPair>& pool, double sim_threshold, std::int64_t max_group_size) {
  if (pool.empty()) throw ParameterError("group_demonstrations: empty pool");
  std::vector<std::vector<std::int64_t>> groups;
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(pool.size()); ++i) {
    bool placed = false;
    for (auto& g : groups) {
      if (static_cast<std::int64_t>(g.size()) >= max_group_size) continue;
      const auto& rep = pool[static_cast<std::size_t>(g.front())].caption;
      if (string_similarity(rep, pool[static_cast<std::size_t>(i)].caption) >= sim_threshold) {
        g.push_back(i);
        placed = true;
        break;
      }
    }
    if (!placed) groups.push_back({i});
  }
  return groups;
}

namespace {

// Appends one pair to existing groups under the same greedy rule.
void add_to_groups(std::vector<std::vector<std::int64_t>>& groups,
                   const std::vector<CaptionedPair>& pool, std::int64_t idx,
                   double threshold, std::int64_t max_group_size) {
  for (auto& g : groups) {
    if (static_cast<std::int64_t>(g.size()) >= max_group_size) continue;
    const auto& rep = pool[static_cast<std::size_t>(g.front())].caption;
    if (string_similarity(rep, pool[static_cast<std::size_t>(idx)].caption) >= threshold) {
      g.push_back(idx);
      return;
    }
  }
  groups.push_back({idx});
}

std::vector<CaptionedPair> run_template_query(const GenerationQuery& query,
                                              std::uint64_t query_seed,
                                              const DatagenConfig& config) {
  Rng qrng(query_seed);
  std::vector<CaptionedPair> out;
  for (std::int64_t s = 0; s < query.samples_per_query; ++s) {
    const auto& demo = query.demonstrations[static_cast<std::size_t>(
        qrng.uniform_int(static_cast<std::int64_t>(query.demonstrations.size())))];
    PatternLabel pattern;
    if (auto inferred = infer_pattern(demo.caption)) {
      pattern = *inferred;
    } else {
      pattern = all_patterns()[static_cast<std::size_t>(
          qrng.uniform_int(static_cast<std::int64_t>(all_patterns().size())))];
    }
    const std::int64_t l =
        config.min_length + qrng.uniform_int(config.max_length - config.min_length + 1);
    CaptionedPair pair;
    pair.series = gen_synth_series(pattern, l, qrng.next_u64(), config.noise_amplitude);
    pair.caption = caption_from_pattern(pattern, qrng.next_u64());
    pair.source = PairSource::generated;
    out.push_back(std::move(pair));
  }
  return out;
}

}  // namespace

std::vector<CaptionedPair> generate_dataset(const std::vector<CaptionedPair>& seed_pool,
                                            std::int64_t target_count, bool bootstrap,
                                            GenBackend backend, std::uint64_t seed,
                                            const DatagenConfig& config) {
  if (seed_pool.empty()) throw ParameterError("generate_dataset: empty seed pool");
  if (target_count <= 0) throw ParameterError("generate_dataset: target_count must be positive");

  std::vector<CaptionedPair> pool = seed_pool;
  auto groups = group_demonstrations(pool, config.group_threshold, config.max_demonstrations);

  Rng rng(seed);
  std::vector<CaptionedPair> generated;
  std::int64_t query_index = 0;
  while (static_cast<std::int64_t>(generated.size()) < target_count) {
    const auto& group = groups[static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::int64_t>(groups.size())))];

    GenerationQuery query;
    query.samples_per_query = config.samples_per_query;
    query.bootstrap = bootstrap;
    for (std::int64_t idx : group) {
      query.demonstrations.push_back(pool[static_cast<std::size_t>(idx)]);
    }

    std::vector<CaptionedPair> batch;
    if (backend == GenBackend::template_based) {
      // The query's randomness derives from the demonstration content plus a
      // bounded nonce: identical prompts can only produce a limited set of
      // outputs, mirroring repeated LLM sampling against one prompt.
      std::uint64_t content = 0xcbf29ce484222325ULL;
      for (const auto& demo : query.demonstrations) {
        content = fnv1a(demo.caption, content);
        content = fnv1a(dup_key(demo), content);
      }
      const std::uint64_t nonce =
          static_cast<std::uint64_t>(rng.uniform_int(config.variants_per_prompt));
      batch = run_template_query(query, Rng(content).child(nonce).next_u64(), config);
    } else {
      try {
        batch = generate_pairs_remote(query, config.samples_per_query);
      } catch (const TransportError& e) {
        throw TransportError("generate_dataset: query " + std::to_string(query_index) +
                             " failed: " + e.what());
      } catch (const Error& e) {
        throw Error("generate_dataset: query " + std::to_string(query_index) +
                    " failed: " + e.what());
      }
    }

    for (auto& pair : batch) {
      validate_series(pair.series, /*enforce_generated_length=*/true);
      pair.source = PairSource::generated;
      generated.push_back(pair);
      if (bootstrap) {
        pool.push_back(pair);
        add_to_groups(groups, pool, static_cast<std::int64_t>(pool.size()) - 1,
                      config.group_threshold, config.max_demonstrations);
      }
    }
    ++query_index;
  }
  generated.resize(static_cast<std::size_t>(target_count));
  return generated;
}

std::pair<std::vector<CaptionedPair>, std::vector<std::int64_t>> inject_mispairs(
    const std::vector<CaptionedPair>& data, double rate, std::uint64_t seed) {
  if (rate < 0.0 || rate > 1.0) throw ParameterError("inject_mispairs: rate outside [0,1]");
  const std::int64_t n = static_cast<std::int64_t>(data.size());
  const std::int64_t noisy_count = static_cast<std::int64_t>(
      std::ceil(rate * static_cast<double>(n)));
  std::vector<CaptionedPair> out = data;
  if (noisy_count == 0) return {out, {}};

  std::vector<std::optional<PatternLabel>> patterns(data.size());
  std::unordered_set<std::string> distinct;
  for (std::size_t i = 0; i < data.size(); ++i) {
    patterns[i] = infer_pattern(data[i].caption);
    if (patterns[i]) distinct.insert(to_string(*patterns[i]));
  }
  if (distinct.size() < 2) {
    throw ParameterError("inject_mispairs: need at least two caption patterns");
  }

  std::vector<std::int64_t> candidates;
  for (std::int64_t i = 0; i < n; ++i) {
    if (patterns[static_cast<std::size_t>(i)]) candidates.push_back(i);
  }
  if (static_cast<std::int64_t>(candidates.size()) < noisy_count) {
    throw ParameterError("inject_mispairs: not enough pattern-labelled pairs");
  }

  Rng rng(seed);
  rng.shuffle(candidates);
  std::vector<std::int64_t> noisy(candidates.begin(), candidates.begin() + noisy_count);
  std::sort(noisy.begin(), noisy.end());

  for (std::int64_t i : noisy) {
    const auto own = *patterns[static_cast<std::size_t>(i)];
    // donor caption from any pair with a different pattern
    std::vector<std::int64_t> donors;
    for (std::int64_t j = 0; j < n; ++j) {
      if (patterns[static_cast<std::size_t>(j)] &&
          !(*patterns[static_cast<std::size_t>(j)] == own)) {
        donors.push_back(j);
      }
    }
    const std::int64_t j = donors[static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::int64_t>(donors.size())))];
    out[static_cast<std::size_t>(i)].caption = data[static_cast<std::size_t>(j)].caption;
  }
  return {out, noisy};
}

double duplicate_rate(const std::vector<CaptionedPair>& data) {
  if (data.empty()) return 0.0;
  std::unordered_set<std::string> seen;
  for (const auto& pair : data) seen.insert(dup_key(pair));
  const double n = static_cast<double>(data.size());
  return 100.0 * (n - static_cast<double>(seen.size())) / n;
}

}  // namespace tslm
