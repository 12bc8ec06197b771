#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "tslm/timeseries.hpp"

namespace tslm {

// Fixed special token ids; stable across runs.
inline constexpr std::int64_t kPadId = 0;
inline constexpr std::int64_t kClsId = 1;
inline constexpr std::int64_t kBosId = 2;
inline constexpr std::int64_t kEosId = 3;
inline constexpr std::int64_t kUnkId = 4;

// "<start> v.. </start> <middle> v.. </middle> <end> v.. </end>" with values
// rendered as rounded integers. Boundaries at floor(l/3) and floor(2l/3).
std::string phase_tag(const TimeSeries& series);

// Inverse of phase_tag: recovers the rounded values from the three runs.
std::vector<std::int64_t> parse_phase_tagged(const std::string& text);

class Vocabulary {
 public:
  Vocabulary() = default;

  // Whitespace tokens. Specials, the six phase tags, the integer tokens
  // "0".."100" and the prompt words are always present; remaining corpus
  // tokens follow ordered by descending frequency, then lexicographic.
  static Vocabulary build(const std::vector<std::string>& corpus);
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  std::int64_t size() const { return static_cast<std::int64_t>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::int64_t id_of(const std::string& token) const;  // kUnkId when absent
  const std::string& token_of(std::int64_t id) const;  // IndexError when out of range

  std::vector<std::int64_t> tokenize(const std::string& text) const;
  std::string detokenize(const std::vector<std::int64_t>& ids) const;

  void save_json(const std::string& path) const;
  static Vocabulary load_json(const std::string& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int64_t> ids_;
};

struct JointText {
  std::vector<std::int64_t> ids;

  std::int64_t token_count() const { return static_cast<std::int64_t>(ids.size()); }
};

// Token ids of "[CLS] Describe this time series <tagged series> encoded by".
// The time-series embedding rows are appended after these tokens by the
// multi-modal encoder.
JointText assemble_joint_text(const TimeSeries& series, const Vocabulary& vocab);

std::vector<std::string> split_whitespace(const std::string& text);

}  // namespace tslm
