#include <doctest.h>

#include "cbr/corpus.hpp"
#include "cbr/error.hpp"
#include "helpers.hpp"

using namespace cbr;

namespace {

std::vector<std::string> texts(const TokenSequence& ts) {
  std::vector<std::string> out;
  for (const auto& t : ts) out.push_back(t.text);
  return out;
}

}  // namespace

TEST_CASE("tokenize peels punctuation and keeps byte offsets") {
  const std::string s = "Hello, (big) world.  [MASK]?";
  auto toks = tokenize(s);
  CHECK(texts(toks) == std::vector<std::string>{"Hello", ",", "(", "big", ")", "world", ".",
                                                "[MASK]", "?"});
  for (const auto& t : toks) CHECK(s.substr(t.char_start, t.char_end - t.char_start) == t.text);
  CHECK(tokenize("").empty());
  CHECK(tokenize("   \t\n").empty());
}

TEST_CASE("tokenize keeps inner punctuation and multibyte characters") {
  auto toks = tokenize("Zoë's e-mail U.S.A.");
  CHECK(texts(toks) == std::vector<std::string>{"Zoë's", "e-mail", "U.S.A", "."});
  CHECK(toks[0].char_end == 6);  // ë is two bytes
}

TEST_CASE("make_answer uses the minimal covering token range") {
  Passage p = make_passage("p", "The quick brown fox.");
  AnswerSpan a = make_answer(p, 4, 15);
  CHECK(a.text == "quick brown");
  CHECK(a.token_start == 1);
  CHECK(a.token_end == 3);
  // A partial token is still covered.
  AnswerSpan b = make_answer(p, 5, 7);
  CHECK(b.token_start == 1);
  CHECK(b.token_end == 2);
  CHECK(b.text == "ui");
  CHECK_THROWS_AS(make_answer(p, 3, 4), ValidationError);  // only a space
  CHECK_THROWS_AS(make_answer(p, 10, 40), ValidationError);
  CHECK_THROWS_AS(make_answer(p, 5, 5), ValidationError);

  AnswerSpan c = make_answer_from_tokens(p, {2, 4});
  CHECK(c.text == "brown fox");
  CHECK(c.char_start == 10);
  CHECK_THROWS_AS(make_answer_from_tokens(p, {3, 9}), ValidationError);
}

TEST_CASE("validate_case rejects inconsistent answers") {
  Case c;
  c.question = make_question("q", "Who?");
  c.passage = make_passage("p", "Ann met Bob");
  c.answers.push_back(make_answer(c.passage, 8, 11));
  CHECK_NOTHROW(validate_case(c));

  Case bad_text = c;
  bad_text.answers[0].text = "Bo";
  CHECK_THROWS_AS(validate_case(bad_text), ValidationError);

  Case bad_tokens = c;
  bad_tokens.answers[0].token_start = 1;
  CHECK_THROWS_AS(validate_case(bad_tokens), ValidationError);

  Case none = c;
  none.answers.clear();
  CHECK_THROWS_AS(validate_case(none), ValidationError);
}

TEST_CASE("MRQA ingestion converts code-point offsets and skips bad lines") {
  for (const char* name : {"mrqa_sample.jsonl", "mrqa_sample.jsonl.gz"}) {
    CAPTURE(name);
    IngestResult r = ingest_mrqa(testing::fixture(name));
    CHECK(r.dataset.name == "SampleQA");
    CHECK(r.lines_read == 6);
    CHECK(r.lines_skipped == 2);
    REQUIRE(r.errors.size() == 2);
    CHECK(r.errors[0].line == 4);
    CHECK(r.errors[1].line == 5);
    REQUIRE(r.dataset.cases.size() == 5);

    const Case& q1 = r.dataset.cases[0];
    CHECK(q1.passage.id == "doc-1");
    CHECK(q1.answers[0].text == "Alexander Graham Bell");
    CHECK(q1.answers[0].token_end - q1.answers[0].token_start == 3);

    const Case& q3 = r.dataset.cases[2];
    CHECK(q3.question.id == "q3");
    CHECK(q3.passage.id == "SampleQA:3");
    CHECK(q3.answers[0].text == "Zürich");
    CHECK(q3.answers[0].char_start == q3.passage.text.find("Zürich"));

    const Case& q4 = r.dataset.cases[3];
    REQUIRE(q4.answers.size() == 2);
    CHECK(q4.answers[0].char_start == 0);
    CHECK(q4.answers[1].char_start == q4.passage.text.rfind("Zoë Müller"));
    for (const auto& c : r.dataset.cases) CHECK_NOTHROW(validate_case(c));
  }
}

TEST_CASE("MRQA ingestion honours the limit and reports missing files") {
  IngestResult r = ingest_mrqa(testing::fixture("mrqa_sample.jsonl"), 3);
  CHECK(r.dataset.cases.size() == 3);
  CHECK_THROWS_AS(ingest_mrqa(testing::fixture("no_such_file.jsonl")), IoError);
}

TEST_CASE("dataset statistics count multi-context question/answer pairs") {
  Dataset d;
  auto add = [&](std::string qid, std::string pid, std::string text, std::string q) {
    Case c;
    c.question = make_question(std::move(qid), std::move(q));
    c.passage = make_passage(std::move(pid), std::move(text));
    c.answers.push_back(make_answer_from_tokens(c.passage, {0, 1}));
    d.cases.push_back(c);
  };
  add("a", "p1", "Paris is big", "What city?");
  add("b", "p2", "Paris again", "What city?");
  add("c", "p3", "Rome here", "What city?");
  DatasetStats s = dataset_stats(d);
  CHECK(s.cases == 3);
  CHECK(s.unique_qa_pairs == 2);
  CHECK(s.multi_context_pairs == 1);
  CHECK(s.multi_context_fraction == doctest::Approx(0.5));
  CHECK(s.mean_answers_per_case == doctest::Approx(1.0));
}

TEST_CASE("truncate_context keeps a window around the first answer") {
  Case c;
  c.question = make_question("q", "Which?");
  c.passage = make_passage("p", "a b c d e f g h i j");
  c.answers.push_back(make_answer_from_tokens(c.passage, {4, 5}));  // e
  c.answers.push_back(make_answer_from_tokens(c.passage, {9, 10}));  // j
  Case t = truncate_context(c, 2);
  CHECK(t.passage.text == "c d e f g");
  REQUIRE(t.answers.size() == 1);
  CHECK(t.answers[0].text == "e");
  CHECK(t.answers[0].token_start == 2);
  CHECK_NOTHROW(validate_case(t));
  CHECK(truncate_context(c, 20) == c);
}

TEST_CASE("internal dataset format round-trips") {
  testing::TempDir tmp("corpus");
  IngestResult r = ingest_mrqa(testing::fixture("mrqa_sample.jsonl"));
  save_dataset(r.dataset, tmp.file("d.jsonl"));
  Dataset back = load_dataset(tmp.file("d.jsonl"));
  CHECK(back == r.dataset);

  testing::spit(tmp.file("bad.jsonl"), "{\"nope\":1}\n");
  CHECK_THROWS_AS(load_dataset(tmp.file("bad.jsonl")), FormatError);

  std::string text = testing::slurp(tmp.file("d.jsonl"));
  auto first_nl = text.find('\n');
  auto second_nl = text.find('\n', first_nl + 1);
  testing::spit(tmp.file("dup.jsonl"), text.substr(0, second_nl + 1) +
                                           text.substr(first_nl + 1, second_nl - first_nl));
  CHECK_THROWS_AS(load_dataset(tmp.file("dup.jsonl")), FormatError);
}

TEST_CASE("fixture datasets load") {
  Dataset d = load_dataset(testing::fixture("tiny_cases.jsonl"));
  CHECK(d.cases.size() == 4);
  CHECK(d.cases[0].answers[0].text == "ana lee");
}
