#include "cbr/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "cbr/error.hpp"
#include "cbr/spanner.hpp"

namespace cbr {

namespace {

std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::vector<std::string> normalized_tokens(std::string_view s) {
  return split_ws(normalize_answer(s));
}

double f1_single(const std::vector<std::string>& pred, const std::vector<std::string>& gold) {
  if (pred.empty() && gold.empty()) return 1.0;
  if (pred.empty() || gold.empty()) return 0.0;
  std::map<std::string, int> counts;
  for (const auto& t : gold) ++counts[t];
  int common = 0;
  for (const auto& t : pred) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++common;
    }
  }
  if (common == 0) return 0.0;
  const double precision = static_cast<double>(common) / static_cast<double>(pred.size());
  const double recall = static_cast<double>(common) / static_cast<double>(gold.size());
  return 2.0 * precision * recall / (precision + recall);
}

void check_spans(const IndexSpan& pred, const std::vector<IndexSpan>& golds) {
  if (golds.empty()) throw PreconditionError("no gold spans");
  for (const auto& g : golds)
    if (g.passage_id != pred.passage_id)
      throw PreconditionError("prediction passage " + pred.passage_id +
                              " differs from gold passage " + g.passage_id);
}

}  // namespace

std::string normalize_answer(std::string_view text) {
  std::string cleaned;
  cleaned.reserve(text.size());
  for (char c : text) {
    auto u = static_cast<unsigned char>(c);
    if (u < 0x80 && std::ispunct(u)) continue;
    cleaned += static_cast<char>(u < 0x80 ? std::tolower(u) : u);
  }
  std::string out;
  for (const auto& w : split_ws(cleaned)) {
    if (w == "a" || w == "an" || w == "the") continue;
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

int exact_match(std::string_view pred, const std::vector<std::string>& golds) {
  if (golds.empty()) throw PreconditionError("exact_match needs at least one gold answer");
  const std::string p = normalize_answer(pred);
  for (const auto& g : golds)
    if (normalize_answer(g) == p) return 1;
  return 0;
}

double token_f1(std::string_view pred, const std::vector<std::string>& golds) {
  if (golds.empty()) throw PreconditionError("token_f1 needs at least one gold answer");
  const auto p = normalized_tokens(pred);
  double best = 0.0;
  for (const auto& g : golds) best = std::max(best, f1_single(p, normalized_tokens(g)));
  return best;
}

int span_em(const IndexSpan& pred, const std::vector<IndexSpan>& golds) {
  check_spans(pred, golds);
  for (const auto& g : golds)
    if (g.start == pred.start && g.end == pred.end) return 1;
  return 0;
}

double span_f1(const IndexSpan& pred, const std::vector<IndexSpan>& golds) {
  check_spans(pred, golds);
  if (pred.end <= pred.start) return 0.0;
  double best = 0.0;
  for (const auto& g : golds) {
    if (g.end <= g.start) continue;
    const std::size_t lo = std::max(pred.start, g.start);
    const std::size_t hi = std::min(pred.end, g.end);
    if (hi <= lo) continue;
    const double overlap = static_cast<double>(hi - lo);
    const double precision = overlap / static_cast<double>(pred.end - pred.start);
    const double recall = overlap / static_cast<double>(g.end - g.start);
    best = std::max(best, 2.0 * precision * recall / (precision + recall));
  }
  return best;
}

bool has_multiple_mentions(const Case& c) {
  std::vector<std::string> passage;
  passage.reserve(c.passage.tokens.size());
  for (const auto& t : c.passage.tokens) passage.push_back(normalize_answer(t.text));
  for (const auto& a : c.answers) {
    std::vector<std::string> needle;
    for (const auto& t : tokenize(a.text)) {
      std::string n = normalize_answer(t.text);
      if (!n.empty()) needle.push_back(std::move(n));
    }
    if (needle.empty()) continue;
    // Compare against passage tokens with empty normalizations skipped.
    std::vector<std::string> hay;
    for (const auto& t : passage)
      if (!t.empty()) hay.push_back(t);
    std::size_t hits = 0;
    for (std::size_t i = 0; i + needle.size() <= hay.size(); ++i)
      if (std::equal(needle.begin(), needle.end(), hay.begin() + static_cast<std::ptrdiff_t>(i)))
        ++hits;
    if (hits >= 2) return true;
  }
  return false;
}

EvalResult evaluate(const std::map<std::string, PredictedAnswer>& predictions,
                    const Dataset& dataset, const EvalOptions& opts) {
  EvalResult r;
  // Sums run in dataset order so results never depend on scheduling.
  long double em = 0, f1 = 0, sem = 0, sf1 = 0;
  std::size_t hits = 0;
  const RuleRecognizer fallback;
  const EntityRecognizer& ner = opts.recognizer ? *opts.recognizer : fallback;
  for (const auto& c : dataset.cases) {
    if (opts.subset == EvalSubset::kMultiMention && !has_multiple_mentions(c)) continue;
    ++r.n;
    InstanceScore s;
    s.question_id = c.question.id;

    std::vector<TokenRange> gold_ranges;
    for (const auto& a : c.answers) gold_ranges.push_back(a.tokens());
    for (const auto& cand : generate_candidates(c.passage, ner)) {
      if (std::find(gold_ranges.begin(), gold_ranges.end(), cand.tokens()) != gold_ranges.end()) {
        s.candidate_hit = true;
        break;
      }
    }
    if (s.candidate_hit) ++hits;

    auto it = predictions.find(c.question.id);
    if (it == predictions.end()) {
      ++r.missing;
      r.instances.push_back(s);
      continue;
    }
    const PredictedAnswer& p = it->second;
    s.predicted = true;
    std::vector<std::string> golds;
    std::vector<IndexSpan> gold_spans;
    for (const auto& a : c.answers) {
      golds.push_back(a.text);
      if (opts.span_unit == SpanUnit::kChars)
        gold_spans.push_back({c.passage.id, a.char_start, a.char_end});
      else
        gold_spans.push_back({c.passage.id, a.token_start, a.token_end});
    }
    s.em = exact_match(p.text, golds);
    s.f1 = token_f1(p.text, golds);
    if (p.passage_id == c.passage.id) {
      IndexSpan ps = opts.span_unit == SpanUnit::kChars
                         ? IndexSpan{p.passage_id, p.char_start, p.char_end}
                         : IndexSpan{p.passage_id, p.token_start, p.token_end};
      s.span_em = span_em(ps, gold_spans);
      s.span_f1 = span_f1(ps, gold_spans);
    }
    em += s.em;
    f1 += s.f1;
    sem += s.span_em;
    sf1 += s.span_f1;
    r.instances.push_back(s);
  }
  if (r.n > 0) {
    const long double n = static_cast<long double>(r.n);
    r.em = static_cast<double>(100.0L * em / n);
    r.f1 = static_cast<double>(100.0L * f1 / n);
    r.span_em = static_cast<double>(100.0L * sem / n);
    r.span_f1 = static_cast<double>(100.0L * sf1 / n);
    r.candidate_recall = static_cast<double>(hits) / static_cast<double>(r.n);
  }
  return r;
}

}  // namespace cbr
