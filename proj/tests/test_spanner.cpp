#include <doctest.h>

#include <algorithm>

#include "cbr/spanner.hpp"
#include "helpers.hpp"

using namespace cbr;

TEST_CASE("every n-gram up to three tokens is a candidate") {
  Passage p = make_passage("p", "a b c d");
  auto c = generate_candidates(p);
  CHECK(c.size() == 4 + 3 + 2);
  CHECK(count_candidates(4) == 9);
  for (const auto& s : c) {
    CHECK(s.sources == kSourceNgram);
    CHECK(s.token_end - s.token_start <= 3);
    CHECK(p.text.substr(s.char_start, s.char_end - s.char_start) == s.text);
  }
  CHECK(std::is_sorted(c.begin(), c.end(), [](const auto& x, const auto& y) {
    return x.tokens() < y.tokens();
  }));
}

TEST_CASE("short passages and empty passages") {
  CHECK(generate_candidates(make_passage("p", "solo")).size() == 1);
  CHECK(generate_candidates(make_passage("p", "")).empty());
  CHECK(count_candidates(0) == 0);
  CHECK(count_candidates(2) == 3);
}

TEST_CASE("entity spans merge sources and long ones are added") {
  Passage p = make_passage("p", "we met Anna Maria Lopez Garcia in 1999 at the \"big red barn\" there");
  auto c = generate_candidates(p);
  auto find = [&](const std::string& text) -> const CandidateSpan* {
    for (const auto& s : c)
      if (s.text == text) return &s;
    return nullptr;
  };
  const auto* name = find("Anna Maria Lopez Garcia");
  REQUIRE(name);
  CHECK(name->sources == kSourceEntity);
  const auto* year = find("1999");
  REQUIRE(year);
  CHECK(year->sources == (kSourceNgram | kSourceDatetime));
  const auto* quoted = find("big red barn");
  REQUIRE(quoted);
  CHECK(quoted->sources == (kSourceNgram | kSourceQuoted));

  const std::size_t tokens = p.tokens.size();
  CHECK(c.size() == count_candidates(tokens, {name->tokens(), year->tokens(), quoted->tokens()}));
  CHECK(c.size() == 3 * tokens - 3 + 1);
}

TEST_CASE("candidate ranges mirror the candidates") {
  Passage p = make_passage("p", "x y z");
  auto c = generate_candidates(p);
  auto r = candidate_ranges(c);
  REQUIRE(r.size() == c.size());
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(r[i] == c[i].tokens());
}

TEST_CASE("a gazetteer recognizer adds its long mentions") {
  RuleRecognizer ner(Gazetteer({"the big old lazy dog"}));
  Passage p = make_passage("p", "see the big old lazy dog run");
  auto c = generate_candidates(p, ner);
  CHECK(c.size() == count_candidates(p.tokens.size()) + 1);
  CHECK(std::any_of(c.begin(), c.end(), [](const auto& s) { return s.text == "the big old lazy dog"; }));
}
