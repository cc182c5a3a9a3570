#pragma once

// Candidate answer spans: recognized entities plus every n-gram up to
// length three.

#include <cstdint>
#include <vector>

#include "cbr/corpus.hpp"
#include "cbr/textproc.hpp"

namespace cbr {

enum SpanSource : std::uint8_t {
  kSourceEntity = 1 << 0,
  kSourceDatetime = 1 << 1,
  kSourceNumber = 1 << 2,
  kSourceQuoted = 1 << 3,
  kSourceNgram = 1 << 4,
};

struct CandidateSpan {
  std::size_t token_start = 0;
  std::size_t token_end = 0;
  std::size_t char_start = 0;
  std::size_t char_end = 0;
  std::string text;
  std::uint8_t sources = 0;  // bitwise OR of SpanSource

  TokenRange tokens() const { return {token_start, token_end}; }
  bool operator==(const CandidateSpan&) const = default;
};

inline constexpr std::size_t kMaxNgram = 3;

// Sorted by (token_start, token_end); each token range appears once with
// the union of its sources.
std::vector<CandidateSpan> generate_candidates(const Passage& p,
                                               const EntityRecognizer& ner);
std::vector<CandidateSpan> generate_candidates(const Passage& p);

// Number of candidates for a passage of `tokens` tokens: all n-grams up to
// length three plus the entity spans not already among them.
std::size_t count_candidates(std::size_t tokens,
                             const std::vector<TokenRange>& entity_spans = {});

std::vector<TokenRange> candidate_ranges(const std::vector<CandidateSpan>& cands);

}  // namespace cbr
