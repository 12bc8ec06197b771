#include "tslm/textrep.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "tslm/error.hpp"

namespace tslm {

namespace {

const std::vector<std::string>& special_tokens() {
  static const std::vector<std::string> specials = {"[PAD]", "[CLS]", "[BOS]", "[EOS]", "[UNK]"};
  return specials;
}

const std::vector<std::string>& phase_tags() {
  static const std::vector<std::string> tags = {"<start>", "</start>", "<middle>",
                                                "</middle>", "<end>", "</end>"};
  return tags;
}

const std::vector<std::string>& prompt_words() {
  static const std::vector<std::string> words = {"Describe", "this", "time",
                                                 "series", "encoded", "by"};
  return words;
}

}  // namespace

std::vector<std::string> split_whitespace(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

std::string phase_tag(const TimeSeries& series) {
  const std::int64_t l = series.length();
  if (l < 3) throw ParameterError("phase_tag: need at least 3 values, got " + std::to_string(l));
  const auto vals = rounded_values(series);
  const std::int64_t b1 = l / 3;
  const std::int64_t b2 = 2 * l / 3;

  auto run = [&](std::int64_t from, std::int64_t to) {
    std::string s;
    for (std::int64_t i = from; i < to; ++i) {
      if (i > from) s += ' ';
      s += std::to_string(vals[static_cast<std::size_t>(i)]);
    }
    return s;
  };
  return "<start> " + run(0, b1) + " </start> <middle> " + run(b1, b2) +
         " </middle> <end> " + run(b2, l) + " </end>";
}

std::vector<std::int64_t> parse_phase_tagged(const std::string& text) {
  const auto toks = split_whitespace(text);
  std::vector<std::int64_t> values;
  int open_count = 0, close_count = 0;
  std::size_t expected_tag = 0;
  for (const auto& t : toks) {
    if (t.size() >= 2 && t.front() == '<') {
      if (expected_tag >= 6 || t != phase_tags()[expected_tag]) {
        throw FormatError("phase tags out of order near '" + t + "'");
      }
      ++expected_tag;
      (t[1] == '/') ? ++close_count : ++open_count;
      continue;
    }
    if (open_count != close_count + 1) {
      throw FormatError("value outside phase tags: '" + t + "'");
    }
    try {
      std::size_t pos = 0;
      const long long v = std::stoll(t, &pos);
      if (pos != t.size()) throw FormatError("trailing characters in value '" + t + "'");
      values.push_back(v);
    } catch (const std::invalid_argument&) {
      throw FormatError("not a number: '" + t + "'");
    } catch (const std::out_of_range&) {
      throw FormatError("value out of range: '" + t + "'");
    }
  }
  if (expected_tag != 6) throw FormatError("missing phase tags");
  return values;
}

Vocabulary Vocabulary::build(const std::vector<std::string>& corpus) {
  if (corpus.empty()) throw ParameterError("build_vocab: empty corpus");

  std::vector<std::string> tokens = special_tokens();
  tokens.insert(tokens.end(), phase_tags().begin(), phase_tags().end());
  for (int v = 0; v <= 100; ++v) tokens.push_back(std::to_string(v));
  tokens.insert(tokens.end(), prompt_words().begin(), prompt_words().end());

  std::unordered_map<std::string, std::int64_t> seen;
  for (const auto& t : tokens) seen.emplace(t, 1);

  std::map<std::string, std::int64_t> freq;
  for (const auto& text : corpus) {
    for (const auto& tok : split_whitespace(text)) {
      if (!seen.count(tok)) ++freq[tok];
    }
  }
  std::vector<std::pair<std::string, std::int64_t>> rest(freq.begin(), freq.end());
  std::stable_sort(rest.begin(), rest.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  for (auto& [tok, count] : rest) tokens.push_back(tok);

  return from_tokens(std::move(tokens));
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  Vocabulary v;
  v.tokens_ = std::move(tokens);
  for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
    if (!v.ids_.emplace(v.tokens_[i], static_cast<std::int64_t>(i)).second) {
      throw FormatError("duplicate token in vocabulary: " + v.tokens_[i]);
    }
  }
  if (v.size() < 5 || v.tokens_[0] != "[PAD]" || v.tokens_[1] != "[CLS]" ||
      v.tokens_[2] != "[BOS]" || v.tokens_[3] != "[EOS]" || v.tokens_[4] != "[UNK]") {
    throw FormatError("vocabulary missing special tokens in fixed positions");
  }
  return v;
}

std::int64_t Vocabulary::id_of(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::token_of(std::int64_t id) const {
  if (id < 0 || id >= size()) throw IndexError("token id out of range: " + std::to_string(id));
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<std::int64_t> Vocabulary::tokenize(const std::string& text) const {
  std::vector<std::int64_t> ids;
  for (const auto& tok : split_whitespace(text)) ids.push_back(id_of(tok));
  return ids;
}

std::string Vocabulary::detokenize(const std::vector<std::int64_t>& ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += token_of(ids[i]);
  }
  return out;
}

void Vocabulary::save_json(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path);
  out << nlohmann::json(tokens_).dump() << "\n";
}

Vocabulary Vocabulary::load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  nlohmann::json j = nlohmann::json::parse(in, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.is_array()) throw FormatError("vocabulary file is not a JSON array");
  return from_tokens(j.get<std::vector<std::string>>());
}

JointText assemble_joint_text(const TimeSeries& series, const Vocabulary& vocab) {
  JointText jt;
  jt.ids.push_back(kClsId);
  for (const auto& w : {"Describe", "this", "time", "series"}) {
    jt.ids.push_back(vocab.id_of(w));
  }
  for (std::int64_t id : vocab.tokenize(phase_tag(series))) jt.ids.push_back(id);
  jt.ids.push_back(vocab.id_of("encoded"));
  jt.ids.push_back(vocab.id_of("by"));
  return jt;
}

}  // namespace tslm
