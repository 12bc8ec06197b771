#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "tslm/error.hpp"
#include "tslm/textrep.hpp"

using namespace tslm;

namespace {

TimeSeries make_series(std::initializer_list<double> values) { return TimeSeries{values}; }

}  // namespace

TEST_CASE("phase_tag renders the three runs with boundaries at thirds") {
  TimeSeries s;
  for (int i = 1; i <= 12; ++i) s.values.push_back(i);
  CHECK(phase_tag(s) ==
        "<start> 1 2 3 4 </start> <middle> 5 6 7 8 </middle> <end> 9 10 11 12 </end>");

  TimeSeries t;
  for (int i = 1; i <= 13; ++i) t.values.push_back(i);
  const auto toks = split_whitespace(phase_tag(t));
  // runs of length 4, 4, 5 plus six tags
  CHECK(toks.size() == 13 + 6);
  CHECK(toks[5] == "</start>");
  CHECK(toks[11] == "</middle>");

  CHECK_THROWS_AS(phase_tag(make_series({1, 2})), ParameterError);
}

TEST_CASE("phase_tag round-trips through parse_phase_tagged") {
  TimeSeries s = make_series({3.4, 77.7, 12.2, 50.0, 49.5, 18.9, 22.2, 90.1, 5.5, 60.4, 33.3, 2.2});
  const auto parsed = parse_phase_tagged(phase_tag(s));
  CHECK(parsed == rounded_values(s));

  CHECK_THROWS_AS(parse_phase_tagged("<start> 1 2 </start>"), FormatError);
  CHECK_THROWS_AS(parse_phase_tagged("<start> x </start> <middle> 1 </middle> <end> 2 </end>"),
                  FormatError);
}

TEST_CASE("build_vocab layout and determinism") {
  const std::vector<std::string> corpus = {"rises early on", "rises early on",
                                           "falls late in the series"};
  Vocabulary v1 = Vocabulary::build(corpus);
  Vocabulary v2 = Vocabulary::build(corpus);
  CHECK(v1.tokens() == v2.tokens());

  CHECK(v1.token_of(kPadId) == "[PAD]");
  CHECK(v1.token_of(kClsId) == "[CLS]");
  CHECK(v1.token_of(kBosId) == "[BOS]");
  CHECK(v1.token_of(kEosId) == "[EOS]");
  CHECK(v1.token_of(kUnkId) == "[UNK]");
  CHECK(v1.token_of(5) == "<start>");
  CHECK(v1.token_of(10) == "</end>");

  for (int n = 0; n <= 100; ++n) {
    CHECK(v1.id_of(std::to_string(n)) != kUnkId);
  }
  // duplicated corpus words appear once
  std::int64_t rises_count = 0;
  for (const auto& t : v1.tokens()) {
    if (t == "rises") ++rises_count;
  }
  CHECK(rises_count == 1);
  // frequency orders "rises" (2 corpus hits) before "falls" (1)
  CHECK(v1.id_of("rises") < v1.id_of("falls"));

  CHECK_THROWS_AS(Vocabulary::build({}), ParameterError);
}

TEST_CASE("tokenize and detokenize") {
  Vocabulary v = Vocabulary::build({"increases in the middle"});
  const auto ids = v.tokenize("increases in the middle");
  CHECK(ids.size() == 4);
  CHECK(v.detokenize(ids) == "increases in the middle");
  CHECK(v.tokenize("zebra")[0] == kUnkId);
  CHECK(v.tokenize("").empty());
  CHECK_THROWS_AS(v.token_of(v.size()), IndexError);
}

TEST_CASE("assemble_joint_text token arithmetic") {
  Vocabulary v = Vocabulary::build({"anything"});
  TimeSeries s;
  for (int i = 1; i <= 12; ++i) s.values.push_back(i);
  JointText jt = assemble_joint_text(s, v);
  CHECK(jt.token_count() == 25);  // 1 + 4 + (12 + 6) + 2
  CHECK(jt.ids.front() == kClsId);
  CHECK(v.token_of(jt.ids[1]) == "Describe");
  CHECK(v.token_of(jt.ids.back()) == "by");

  // two different series of equal length produce equal n
  TimeSeries t;
  for (int i = 1; i <= 12; ++i) t.values.push_back(90 - i);
  CHECK(assemble_joint_text(t, v).token_count() == jt.token_count());

  // no [UNK] appears: the values and prompt words are always in-vocabulary
  for (std::int64_t id : jt.ids) CHECK(id != kUnkId);
}

TEST_CASE("vocabulary json round trip") {
  Vocabulary v = Vocabulary::build({"goes up late in the series"});
  const std::string path = "vocab_roundtrip_test.json";
  v.save_json(path);
  Vocabulary loaded = Vocabulary::load_json(path);
  CHECK(loaded.tokens() == v.tokens());
  std::remove(path.c_str());
}
