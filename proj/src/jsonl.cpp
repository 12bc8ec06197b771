#include "tslm/jsonl.hpp"

#include <fstream>

#include <json.hpp>

#include "tslm/error.hpp"

namespace tslm {

using nlohmann::json;

std::string pair_to_json_line(const CaptionedPair& pair) {
  json j;
  j["series"] = pair.series.values;
  j["caption"] = pair.caption;
  j["source"] = to_string(pair.source);
  if (pair.score) j["score"] = *pair.score;
  return j.dump();
}

CaptionedPair pair_from_json_line(const std::string& line) {
  json j = json::parse(line, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.is_object()) throw FormatError("malformed JSON object");
  if (!j.contains("series") || !j["series"].is_array()) throw FormatError("missing series array");
  if (!j.contains("caption") || !j["caption"].is_string()) throw FormatError("missing caption");

  CaptionedPair pair;
  for (const auto& v : j["series"]) {
    if (!v.is_number()) throw FormatError("series entry is not a number");
    pair.series.values.push_back(v.get<double>());
  }
  pair.caption = j["caption"].get<std::string>();
  if (pair.caption.empty()) throw FormatError("empty caption");
  pair.source = j.contains("source") ? pair_source_from_string(j["source"].get<std::string>())
                                     : PairSource::original;
  if (j.contains("score") && !j["score"].is_null()) {
    if (!j["score"].is_number()) throw FormatError("score is not a number");
    pair.score = j["score"].get<double>();
  }
  try {
    validate_series(pair.series);
  } catch (const ParameterError& e) {
    throw FormatError(e.what());
  }
  return pair;
}

std::vector<CaptionedPair> load_pairs_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  std::vector<CaptionedPair> pairs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      pairs.push_back(pair_from_json_line(line));
    } catch (const FormatError& e) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return pairs;
}

void save_pairs_jsonl(const std::vector<CaptionedPair>& pairs, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path);
  for (const auto& pair : pairs) out << pair_to_json_line(pair) << "\n";
}

}  // namespace tslm
