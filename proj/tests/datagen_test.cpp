#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "tslm/datagen.hpp"
#include "tslm/error.hpp"
#include "tslm/textrep.hpp"
#include "tslm/timeseries.hpp"

using namespace tslm;

TEST_CASE("gen_synth_series structural contract for (increase, middle)") {
  // zero noise exposes the exact construction
  TimeSeries s = gen_synth_series({Trend::increase, Location::middle}, 24, 7, 0.0);
  REQUIRE(s.length() == 24);
  std::vector<std::int64_t> change_points;
  for (std::int64_t i = 0; i + 1 < 24; ++i) {
    const double diff = s.values[static_cast<std::size_t>(i + 1)] -
                        s.values[static_cast<std::size_t>(i)];
    if (diff != 0.0) {
      CHECK(diff > 0.0);
      change_points.push_back(i);
    }
  }
  REQUIRE(!change_points.empty());
  // the trend segment lies inside the 30-70 percentile window [7, 16)
  CHECK(change_points.front() >= 7);
  CHECK(change_points.back() + 1 <= 16);
  CHECK(s.values.back() > s.values.front());
}

TEST_CASE("gen_synth_series flat regions exactly constant without noise") {
  for (const auto& pattern : all_patterns()) {
    TimeSeries s = gen_synth_series(pattern, 30, 11, 0.0);
    // count distinct consecutive-diff signs: only one trending stretch exists
    std::int64_t nonzero = 0;
    for (std::int64_t i = 0; i + 1 < s.length(); ++i) {
      if (s.values[static_cast<std::size_t>(i + 1)] != s.values[static_cast<std::size_t>(i)]) {
        ++nonzero;
      }
    }
    CHECK(nonzero >= 2);  // a segment of length >= 3 has >= 2 steps
    CHECK(nonzero <= 10);  // l/3 cap
  }
}

TEST_CASE("gen_synth_series bounds, lengths and determinism") {
  std::uint64_t seed = 0;
  int samples = 0;
  for (const auto& pattern : all_patterns()) {
    for (std::int64_t l : {12, 13, 24, 37, 50}) {
      for (int rep = 0; rep < 34; ++rep) {
        TimeSeries s = gen_synth_series(pattern, l, ++seed);
        CHECK(s.length() == l);
        for (double v : s.values) {
          CHECK(v > 0.0);
          CHECK(v < 100.0);
        }
        ++samples;
      }
    }
  }
  CHECK(samples >= 1000);

  TimeSeries a = gen_synth_series({Trend::decrease, Location::end}, 20, 99);
  TimeSeries b = gen_synth_series({Trend::decrease, Location::end}, 20, 99);
  CHECK(a.values == b.values);

  CHECK_THROWS_AS(gen_synth_series({Trend::increase, Location::middle}, 11, 0), ParameterError);
  CHECK_THROWS_AS(gen_synth_series({Trend::increase, Location::middle}, 51, 0), ParameterError);
}

TEST_CASE("caption templates cover and invert every pattern") {
  CHECK(caption_from_pattern({Trend::increase, Location::middle}, 0) ==
        caption_from_pattern({Trend::increase, Location::middle}, 0));

  for (const auto& pattern : all_patterns()) {
    std::set<std::string> seen;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const std::string caption = caption_from_pattern(pattern, seed);
      seen.insert(caption);
      CHECK(split_whitespace(caption).size() <= 9);
      auto inferred = infer_pattern(caption);
      REQUIRE(inferred.has_value());
      CHECK(*inferred == pattern);
    }
    CHECK(seen.size() >= 3);
  }

  // the canonical template is part of the bank
  bool found = false;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    if (caption_from_pattern({Trend::increase, Location::middle}, seed) ==
        "increases in the middle") {
      found = true;
    }
  }
  CHECK(found);
}

TEST_CASE("string_similarity matches the hand-computed points") {
  CHECK(string_similarity("abc", "abc") == 100.0);
  CHECK(string_similarity("abc", "abd") == doctest::Approx(200.0 / 3).epsilon(1e-4));
  CHECK(string_similarity("abc", "xyz") == 0.0);
  CHECK(string_similarity("", "") == 100.0);
  CHECK(string_similarity("ab", "ba") == string_similarity("ba", "ab"));
}

TEST_CASE("group_demonstrations clustering rules") {
  auto pair_with = [](const std::string& caption) {
    CaptionedPair p;
    p.series = gen_synth_series({Trend::increase, Location::middle}, 12, 1);
    p.caption = caption;
    return p;
  };

  std::vector<CaptionedPair> same(12, pair_with("increases in the middle"));
  CHECK(group_demonstrations(same, 60.0).size() == 1);

  std::vector<CaptionedPair> different = {pair_with("aaaaaaaaaa"), pair_with("bbbbbbbbbb"),
                                          pair_with("cccccccccc")};
  CHECK(group_demonstrations(different, 60.0).size() == 3);

  std::vector<CaptionedPair> twenty(20, pair_with("increases in the middle"));
  auto groups = group_demonstrations(twenty, 60.0);
  REQUIRE(groups.size() == 2);
  CHECK(groups[0].size() == 16);
  CHECK(groups[1].size() == 4);

  // invariant: every member is similar to its group representative
  std::vector<CaptionedPair> mixed;
  for (const auto& p : all_patterns()) {
    for (std::uint64_t s = 0; s < 5; ++s) {
      CaptionedPair cp;
      cp.series = gen_synth_series(p, 16, s + 1);
      cp.caption = caption_from_pattern(p, s);
      mixed.push_back(cp);
    }
  }
  for (const auto& group : group_demonstrations(mixed, 60.0)) {
    const auto& rep = mixed[static_cast<std::size_t>(group.front())].caption;
    for (std::int64_t idx : group) {
      CHECK(string_similarity(rep, mixed[static_cast<std::size_t>(idx)].caption) >= 60.0);
    }
  }

  CHECK_THROWS_AS(group_demonstrations({}, 60.0), ParameterError);
}

TEST_CASE("generate_dataset produces valid tagged pairs") {
  std::vector<CaptionedPair> seeds;
  for (const auto& p : all_patterns()) {
    CaptionedPair cp;
    cp.series = gen_synth_series(p, 18, 5);
    cp.caption = caption_from_pattern(p, 3);
    seeds.push_back(cp);
  }

  auto out = generate_dataset(seeds, 9, false, GenBackend::template_based, 42);
  CHECK(out.size() == 9);
  for (const auto& pair : out) {
    CHECK_NOTHROW(validate_series(pair.series, true));
    CHECK(pair.source == PairSource::generated);
    CHECK(!pair.caption.empty());
  }

  auto out2 = generate_dataset(seeds, 9, false, GenBackend::template_based, 42);
  for (std::size_t i = 0; i < out.size(); ++i) {
    CHECK(out[i].caption == out2[i].caption);
    CHECK(out[i].series.values == out2[i].series.values);
  }

  CHECK_THROWS_AS(generate_dataset({}, 5, false, GenBackend::template_based, 0), ParameterError);
}

TEST_CASE("bootstrapping lowers the duplicate rate at a fixed budget") {
  std::vector<CaptionedPair> seeds;
  for (const auto& p : all_patterns()) {
    for (std::uint64_t s = 0; s < 2; ++s) {
      CaptionedPair cp;
      cp.series = gen_synth_series(p, 14, s * 7 + 1);
      cp.caption = caption_from_pattern(p, s);
      seeds.push_back(cp);
    }
  }
  auto plain = generate_dataset(seeds, 300, false, GenBackend::template_based, 5);
  auto boot = generate_dataset(seeds, 300, true, GenBackend::template_based, 5);
  CHECK(duplicate_rate(boot) < duplicate_rate(plain));
}

TEST_CASE("inject_mispairs contract") {
  std::vector<CaptionedPair> data;
  std::vector<PatternLabel> truth;
  std::uint64_t seed = 0;
  for (int rep = 0; rep < 17; ++rep) {
    for (const auto& p : all_patterns()) {
      CaptionedPair cp;
      cp.series = gen_synth_series(p, 15, ++seed);
      cp.caption = caption_from_pattern(p, seed);
      data.push_back(cp);
      truth.push_back(p);
    }
  }
  REQUIRE(data.size() == 102);
  data.resize(100);
  truth.resize(100);

  auto [unchanged, empty] = inject_mispairs(data, 0.0, 1);
  CHECK(empty.empty());
  for (std::size_t i = 0; i < data.size(); ++i) CHECK(unchanged[i].caption == data[i].caption);

  auto [noisy, indices] = inject_mispairs(data, 0.1, 1);
  CHECK(indices.size() == 10);
  std::set<std::int64_t> noisy_set(indices.begin(), indices.end());
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (noisy_set.count(static_cast<std::int64_t>(i))) {
      auto inferred = infer_pattern(noisy[i].caption);
      REQUIRE(inferred.has_value());
      CHECK(!(*inferred == truth[i]));  // caption pattern != series pattern
    } else {
      CHECK(noisy[i].caption == data[i].caption);  // nothing else changed
    }
    CHECK(noisy[i].series.values == data[i].series.values);
  }

  std::vector<CaptionedPair> single(10, data[0]);
  CHECK_THROWS_AS(inject_mispairs(single, 0.2, 1), ParameterError);
}

TEST_CASE("duplicate_rate arithmetic") {
  std::vector<CaptionedPair> data;
  for (int i = 0; i < 8; ++i) {
    CaptionedPair cp;
    cp.series = gen_synth_series(all_patterns()[static_cast<std::size_t>(i % 6)], 12,
                                 static_cast<std::uint64_t>(i + 1));
    cp.caption = "caption " + std::to_string(i);
    data.push_back(cp);
  }
  CHECK(duplicate_rate(data) == 0.0);
  data.push_back(data[0]);
  data.push_back(data[3]);
  CHECK(duplicate_rate(data) == doctest::Approx(20.0));

  // order invariance
  std::vector<CaptionedPair> shuffled = {data[9], data[0], data[8], data[1], data[2],
                                         data[3], data[4], data[5], data[6], data[7]};
  CHECK(duplicate_rate(shuffled) == doctest::Approx(20.0));
  CHECK(duplicate_rate({}) == 0.0);
}
