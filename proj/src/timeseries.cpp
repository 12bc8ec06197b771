#include "tslm/timeseries.hpp"

#include <cmath>

#include "tslm/error.hpp"

namespace tslm {

void validate_series(const TimeSeries& series, bool enforce_generated_length) {
  const std::int64_t l = series.length();
  if (l == 0) throw ParameterError("series: empty");
  if (enforce_generated_length && (l < kMinGeneratedLength || l > kMaxGeneratedLength)) {
    throw ParameterError("series: length " + std::to_string(l) + " outside [12,50]");
  }
  for (double v : series.values) {
    if (!std::isfinite(v)) throw ParameterError("series: non-finite value");
    if (v <= kValueLow || v >= kValueHigh) {
      throw ParameterError("series: value " + std::to_string(v) + " outside (0,100)");
    }
  }
}

std::vector<std::int64_t> rounded_values(const TimeSeries& series) {
  std::vector<std::int64_t> out;
  out.reserve(series.values.size());
  for (double v : series.values) out.push_back(std::llround(v));
  return out;
}

std::string to_string(PairSource source) {
  return source == PairSource::original ? "original" : "generated";
}

PairSource pair_source_from_string(const std::string& s) {
  if (s == "original") return PairSource::original;
  if (s == "generated") return PairSource::generated;
  throw FormatError("unknown pair source: " + s);
}

}  // namespace tslm
