#include "cbr/spanner.hpp"

#include <algorithm>
#include <map>
#include <set>

namespace cbr {

namespace {

std::uint8_t source_of(EntityKind k) {
  switch (k) {
    case EntityKind::kName: return kSourceEntity;
    case EntityKind::kNumber: return kSourceNumber;
    case EntityKind::kDatetime: return kSourceDatetime;
    case EntityKind::kQuoted: return kSourceQuoted;
  }
  return kSourceEntity;
}

}  // namespace

std::vector<CandidateSpan> generate_candidates(const Passage& p,
                                               const EntityRecognizer& ner) {
  const std::size_t n = p.tokens.size();
  std::map<TokenRange, std::uint8_t> sources;
  for (const auto& m : ner.recognize(p.tokens, p.text)) sources[m.tokens] |= source_of(m.kind);
  for (std::size_t len = 1; len <= kMaxNgram; ++len)
    for (std::size_t s = 0; s + len <= n; ++s) sources[{s, s + len}] |= kSourceNgram;

  std::vector<CandidateSpan> out;
  out.reserve(sources.size());
  for (const auto& [r, src] : sources) {
    CandidateSpan c;
    c.token_start = r.start;
    c.token_end = r.end;
    c.char_start = p.tokens[r.start].char_start;
    c.char_end = p.tokens[r.end - 1].char_end;
    c.text = p.text.substr(c.char_start, c.char_end - c.char_start);
    c.sources = src;
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<CandidateSpan> generate_candidates(const Passage& p) {
  return generate_candidates(p, RuleRecognizer{});
}

std::size_t count_candidates(std::size_t tokens,
                             const std::vector<TokenRange>& entity_spans) {
  std::size_t total = 0;
  for (std::size_t len = 1; len <= std::min(kMaxNgram, tokens); ++len)
    total += tokens - len + 1;
  std::set<TokenRange> extra;
  for (const auto& r : entity_spans)
    if (r.size() > kMaxNgram) extra.insert(r);
  return total + extra.size();
}

std::vector<TokenRange> candidate_ranges(const std::vector<CandidateSpan>& cands) {
  std::vector<TokenRange> out;
  out.reserve(cands.size());
  for (const auto& c : cands) out.push_back(c.tokens());
  return out;
}

}  // namespace cbr
