#pragma once

// EM / F1 over normalized answer strings and Span-EM / Span-F1 over
// offsets.

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cbr/corpus.hpp"
#include "cbr/textproc.hpp"

namespace cbr {

// Lowercase, strip ASCII punctuation, drop the articles a/an/the, collapse
// whitespace.
std::string normalize_answer(std::string_view text);

// Throws PreconditionError when `golds` is empty.
int exact_match(std::string_view pred, const std::vector<std::string>& golds);
double token_f1(std::string_view pred, const std::vector<std::string>& golds);

// Half-open offset interval inside one passage. The unit (bytes or tokens)
// is up to the caller; both sides must use the same one.
struct IndexSpan {
  std::string passage_id;
  std::size_t start = 0;
  std::size_t end = 0;
};

// Throws PreconditionError on empty golds or a passage mismatch.
int span_em(const IndexSpan& pred, const std::vector<IndexSpan>& golds);
double span_f1(const IndexSpan& pred, const std::vector<IndexSpan>& golds);

enum class SpanUnit { kChars, kTokens };
enum class EvalSubset { kAll, kMultiMention };

// What evaluation needs from a prediction.
struct PredictedAnswer {
  std::string question_id;
  std::string passage_id;
  std::string text;
  std::size_t char_start = 0;
  std::size_t char_end = 0;
  std::size_t token_start = 0;
  std::size_t token_end = 0;
};

struct InstanceScore {
  std::string question_id;
  bool predicted = false;
  double em = 0.0;
  double f1 = 0.0;
  double span_em = 0.0;
  double span_f1 = 0.0;
  bool candidate_hit = false;
};

struct EvalResult {
  double em = 0.0;  // all four in [0, 100]
  double f1 = 0.0;
  double span_em = 0.0;
  double span_f1 = 0.0;
  std::size_t n = 0;
  std::size_t missing = 0;
  double candidate_recall = 0.0;  // in [0, 1]
  std::vector<InstanceScore> instances;
};

struct EvalOptions {
  SpanUnit span_unit = SpanUnit::kChars;
  EvalSubset subset = EvalSubset::kAll;
  // Recognizer used for candidate recall; rule defaults when null.
  const EntityRecognizer* recognizer = nullptr;
};

// True when some gold answer string occurs at least twice in the passage
// (token sequences compared after normalization).
bool has_multiple_mentions(const Case& c);

// Missing predictions score zero on every metric and are counted.
EvalResult evaluate(const std::map<std::string, PredictedAnswer>& predictions,
                    const Dataset& dataset, const EvalOptions& opts = {});

}  // namespace cbr
