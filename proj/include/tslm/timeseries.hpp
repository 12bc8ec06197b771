#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace tslm {

// Generated data stays inside these bounds; see validate_series.
inline constexpr double kValueLow = 0.0;
inline constexpr double kValueHigh = 100.0;
inline constexpr std::int64_t kMinGeneratedLength = 12;
inline constexpr std::int64_t kMaxGeneratedLength = 50;

struct TimeSeries {
  std::vector<double> values;

  std::int64_t length() const { return static_cast<std::int64_t>(values.size()); }
};

enum class PairSource { original, generated };

struct CaptionedPair {
  TimeSeries series;
  std::string caption;
  PairSource source = PairSource::original;
  std::optional<double> score;
};

// Throws ParameterError unless every value lies strictly inside (0,100) and,
// when enforce_generated_length is set, 12 <= l <= 50.
void validate_series(const TimeSeries& series, bool enforce_generated_length = false);

// Values rounded to nearest integer, for duplicate detection and text rendering.
std::vector<std::int64_t> rounded_values(const TimeSeries& series);

std::string to_string(PairSource source);
PairSource pair_source_from_string(const std::string& s);

}  // namespace tslm
