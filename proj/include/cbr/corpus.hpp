#pragma once

// Cases, datasets and MRQA ingestion.
//
// Offsets inside the library are UTF-8 byte offsets into the owning text.
// MRQA files carry code-point offsets with an inclusive end; ingestion
// converts them.

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cbr {

struct Token {
  std::string text;
  std::size_t char_start = 0;
  std::size_t char_end = 0;  // exclusive

  bool operator==(const Token&) const = default;
};

using TokenSequence = std::vector<Token>;

// Whitespace split, then leading/trailing punctuation peeled off into
// single-character tokens. The literal "[MASK]" is always one token.
TokenSequence tokenize(std::string_view text);

// Half-open token range.
struct TokenRange {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - start; }
  bool operator==(const TokenRange&) const = default;
  auto operator<=>(const TokenRange&) const = default;
};

struct AnswerSpan {
  std::size_t token_start = 0;
  std::size_t token_end = 0;
  std::size_t char_start = 0;
  std::size_t char_end = 0;
  std::string text;

  TokenRange tokens() const { return {token_start, token_end}; }
  bool operator==(const AnswerSpan&) const = default;
};

struct Passage {
  std::string id;
  std::string text;
  TokenSequence tokens;

  bool operator==(const Passage&) const = default;
};

struct Question {
  std::string id;
  std::string text;
  TokenSequence tokens;

  bool operator==(const Question&) const = default;
};

struct Case {
  Question question;
  std::vector<AnswerSpan> answers;
  Passage passage;

  bool operator==(const Case&) const = default;
};

struct Dataset {
  std::string name;
  std::vector<Case> cases;

  bool operator==(const Dataset&) const = default;
};

Passage make_passage(std::string id, std::string text);
Question make_question(std::string id, std::string text);

// Builds the answer span covering the byte range [char_start, char_end) of
// the passage. The token range is the minimal range of tokens overlapping
// the bytes. Throws ValidationError if the range is out of bounds or
// touches no token.
AnswerSpan make_answer(const Passage& p, std::size_t char_start,
                       std::size_t char_end);

// Answer span over a token range; character offsets come from the tokens.
AnswerSpan make_answer_from_tokens(const Passage& p, TokenRange r);

// Checks every Case invariant; throws ValidationError describing the first
// violation.
void validate_case(const Case& c);

struct LineError {
  std::size_t line = 0;  // 1-based line number in the source file
  std::string message;
};

struct IngestResult {
  Dataset dataset;
  std::size_t lines_read = 0;
  std::size_t lines_skipped = 0;
  std::vector<LineError> errors;
};

// Reads an MRQA JSONL file, plain or gzip-compressed. Malformed lines are
// skipped and reported in `errors`. Throws IoError if the file cannot be
// opened.
IngestResult ingest_mrqa(const std::string& path,
                         std::optional<std::size_t> limit = std::nullopt);

struct DatasetStats {
  std::size_t cases = 0;
  double mean_answers_per_case = 0.0;
  std::size_t unique_qa_pairs = 0;
  // (question text, answer text) keys seen with >= 2 distinct passage ids.
  std::size_t multi_context_pairs = 0;
  double multi_context_fraction = 0.0;
};

DatasetStats dataset_stats(const Dataset& d);

// Restricts the passage to `radius` tokens either side of the first gold
// answer. Answers falling outside the window are dropped.
Case truncate_context(const Case& c, std::size_t radius);

// Internal dataset format: JSONL with a header line, then one case per
// line (byte offsets, exclusive ends).
void save_dataset(const Dataset& d, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace cbr
