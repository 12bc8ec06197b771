#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tslm/rng.hpp"
#include "tslm/timeseries.hpp"

namespace tslm {

enum class Trend { increase, decrease };
enum class Location { beginning, middle, end };

struct PatternLabel {
  Trend trend = Trend::increase;
  Location location = Location::middle;

  bool operator==(const PatternLabel&) const = default;
};

const std::vector<PatternLabel>& all_patterns();
std::string to_string(const PatternLabel& p);

struct GenerationQuery {
  std::vector<CaptionedPair> demonstrations;  // at most 16
  std::int64_t samples_per_query = 3;
  bool bootstrap = false;
};

enum class GenBackend { template_based, remote };

struct DatagenConfig {
  std::int64_t samples_per_query = 3;   // S
  std::int64_t max_demonstrations = 16; // P cap
  double group_threshold = 60.0;
  std::int64_t min_length = 12;
  std::int64_t max_length = 50;
  double noise_amplitude = 1.5;
  // Distinct outputs a fixed demonstration set can produce; repeated queries
  // against identical demonstrations revisit this bounded set, which is what
  // bootstrapping mitigates.
  std::int64_t variants_per_prompt = 64;
};

// Trend segment (straight line, length <= l/3, random slope within the
// trend's range) placed inside the location window: beginning [0,0.4l),
// middle [0.3l,0.7l), end [0.6l,l). Flat elsewhere, per-point uniform noise,
// values clamped into (0,100). Deterministic given (pattern, l, seed).
TimeSeries gen_synth_series(const PatternLabel& pattern, std::int64_t l, std::uint64_t seed,
                            double noise_amplitude = 1.5);

// One of several paraphrases per pattern; at most 9 words.
std::string caption_from_pattern(const PatternLabel& pattern, std::uint64_t seed);

// Keyword-based inverse of the caption templates.
std::optional<PatternLabel> infer_pattern(const std::string& caption);

// 100 * (1 - levenshtein(a,b) / max(|a|,|b|)); 100 for equal strings.
double string_similarity(const std::string& a, const std::string& b);

// Greedy clustering by caption similarity against each group's first member;
// groups are capped at 16 members (overflow starts a sibling group).
// Returns member indices into the pool.
std::vector<std::vector<std::int64_t>> group_demonstrations(
    const std::vector<CaptionedPair>& pool, double sim_threshold,
    std::int64_t max_group_size = 16);

// Emits `target_count` generated pairs, S per query. With bootstrap=true the
// accepted generations join the demonstration pool before subsequent queries.
std::vector<CaptionedPair> generate_dataset(const std::vector<CaptionedPair>& seed_pool,
                                            std::int64_t target_count, bool bootstrap,
                                            GenBackend backend, std::uint64_t seed,
                                            const DatagenConfig& config = {});

// Replaces the caption of ceil(rate*N) randomly chosen pairs with a caption
// from a pair of a different pattern. Returns the modified copy and the
// ground-truth noisy indices (sorted).
std::pair<std::vector<CaptionedPair>, std::vector<std::int64_t>> inject_mispairs(
    const std::vector<CaptionedPair>& data, double rate, std::uint64_t seed);

// Percentage of pairs whose (rounded series, caption) key already appeared.
double duplicate_rate(const std::vector<CaptionedPair>& data);

}  // namespace tslm
