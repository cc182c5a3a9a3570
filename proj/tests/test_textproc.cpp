#include <doctest.h>

#include "cbr/error.hpp"
#include "cbr/textproc.hpp"
#include "helpers.hpp"

using namespace cbr;

namespace {

struct Found {
  std::string text;
  EntityKind kind;
  bool operator==(const Found&) const = default;
};

std::vector<Found> found(const std::string& s, const Gazetteer& g = {}) {
  Question q = make_question("q", s);
  std::vector<Found> out;
  for (const auto& m : recognize_entities(q.tokens, q.text, g))
    out.push_back({s.substr(m.char_start, m.char_end - m.char_start), m.kind});
  return out;
}

}  // namespace

TEST_CASE("rule recognizer finds the four entity kinds") {
  auto f = found("When did Alexander Graham Bell move to Boston on March 3, 1876 with \"Big Blue\" and 40 friends?");
  std::vector<Found> want = {{"Alexander Graham Bell", EntityKind::kName},
                             {"Boston", EntityKind::kName},
                             {"March 3, 1876", EntityKind::kDatetime},
                             {"Big Blue", EntityKind::kQuoted},
                             {"40", EntityKind::kNumber}};
  CHECK(f == want);
}

TEST_CASE("sentence openers are not names") {
  CHECK(found("The cat sat.").empty());
  CHECK(found("Who wrote it?").empty());
  // A lone capitalized opener is ambiguous and skipped...
  CHECK(found("Paris is big.").empty());
  // ...unless the gazetteer knows it.
  CHECK(found("Paris is big.", Gazetteer({"paris"})) == std::vector<Found>{{"Paris", EntityKind::kName}});
  // Multi-word capitalized openers are kept, minus a leading function word.
  CHECK(found("The Beatles played.") == std::vector<Found>{{"Beatles", EntityKind::kName}});
  CHECK(found("New York is big.") == std::vector<Found>{{"New York", EntityKind::kName}});
}

TEST_CASE("gazetteer matches lowercase multi-word forms, longest first") {
  Gazetteer g({"new york", "york"});
  CHECK(g.max_tokens() == 2);
  CHECK(found("where is new york located", g) == std::vector<Found>{{"new york", EntityKind::kName}});
  CHECK(found("where is york", g) == std::vector<Found>{{"york", EntityKind::kName}});
}

TEST_CASE("gazetteer loads from a file") {
  testing::TempDir tmp("gaz");
  testing::spit(tmp.file("g.txt"), "ana lee\n\nbo kim\n");
  Gazetteer g = Gazetteer::load(tmp.file("g.txt"));
  CHECK(g.contains("ana lee"));
  CHECK(g.contains("bo kim"));
  CHECK_FALSE(g.contains(""));
}

TEST_CASE("precedence: numbers inside a date belong to the date") {
  auto f = found("it happened in 1999 or 12 times");
  CHECK(f == std::vector<Found>{{"1999", EntityKind::kDatetime}, {"12", EntityKind::kNumber}});
  auto q = found("he said \"1999 was great\" then");
  CHECK(q == std::vector<Found>{{"1999 was great", EntityKind::kQuoted}});
}

TEST_CASE("masking replaces each mention with one mask token") {
  Question q = make_question("q1", "Who founded Acme Corp in 1999?");
  MaskedQuestion mq = mask_question(q, RuleRecognizer{});
  CHECK(mq.question_id == "q1");
  CHECK(mq.masked_text == "Who founded [MASK] in [MASK] ?");
  CHECK(mq.mask_count == 2);
  REQUIRE(mq.masked_tokens.size() == 6);
  for (const auto& t : mq.masked_tokens)
    CHECK(mq.masked_text.substr(t.char_start, t.char_end - t.char_start) == t.text);
}

TEST_CASE("masking is invariant to which entity fills the slot") {
  Gazetteer g({"zorbu", "kelimat tovi"});
  RuleRecognizer ner(g);
  auto a = mask_question(make_question("a", "where was zorbu born ?"), ner);
  auto b = mask_question(make_question("b", "where was kelimat tovi born ?"), ner);
  CHECK(a.masked_text == b.masked_text);
}

TEST_CASE("masking rejects bad mention lists") {
  Question q = make_question("q", "a b c d");
  EntityMention m1{{0, 2}, 0, 3, EntityKind::kName};
  EntityMention m2{{1, 3}, 2, 5, EntityKind::kName};
  CHECK_THROWS_AS(mask_question(q, std::vector<EntityMention>{m1, m2}), PreconditionError);
  EntityMention far{{3, 9}, 6, 7, EntityKind::kName};
  CHECK_THROWS_AS(mask_question(q, std::vector<EntityMention>{far}), PreconditionError);
  // Unsorted but disjoint is fine.
  EntityMention m3{{3, 4}, 6, 7, EntityKind::kName};
  auto mq = mask_question(q, std::vector<EntityMention>{m3, m1});
  CHECK(mq.masked_text == "[MASK] c [MASK]");
}

TEST_CASE("wh keyword is the first interrogative, lowercased") {
  CHECK(extract_wh_keyword(make_question("q", "Who is it?")) == std::optional<std::string>("who"));
  CHECK(extract_wh_keyword(make_question("q", "In WHICH year and when?")) ==
        std::optional<std::string>("which"));
  CHECK_FALSE(extract_wh_keyword(make_question("q", "name the capital")).has_value());
}
