#pragma once

#include <string>
#include <vector>

#include "tslm/timeseries.hpp"

namespace tslm {

// One pair per line: {"series":[...],"caption":"...","source":"original"|"generated"}
// with an optional "score". Rejects NaN/Inf and out-of-bounds values, naming
// the offending line.
std::vector<CaptionedPair> load_pairs_jsonl(const std::string& path);
void save_pairs_jsonl(const std::vector<CaptionedPair>& pairs, const std::string& path);

std::string pair_to_json_line(const CaptionedPair& pair);
CaptionedPair pair_from_json_line(const std::string& line);

}  // namespace tslm
