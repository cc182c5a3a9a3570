#include "cbr/reuse.hpp"

#include <algorithm>
#include <cmath>

#include "cbr/error.hpp"

namespace cbr {

double similarity(std::span<const double> a, std::span<const double> b, Similarity s) {
  return s == Similarity::kDot ? dot(a, b) : cosine(a, b);
}

CaseScores score_against_case(std::span<const EmbeddingVector> cand_vecs,
                              const CaseEntry& c, Similarity sim) {
  if (c.answer_vecs.empty())
    throw PreconditionError("case " + c.case_data.question.id + " has no answer vectors");
  CaseScores out;
  out.score.resize(cand_vecs.size());
  out.best_answer.resize(cand_vecs.size());
  for (std::size_t s = 0; s < cand_vecs.size(); ++s) {
    double best = similarity(cand_vecs[s], c.answer_vecs[0], sim);
    std::size_t arg = 0;
    for (std::size_t a = 1; a < c.answer_vecs.size(); ++a) {
      double v = similarity(cand_vecs[s], c.answer_vecs[a], sim);
      if (v > best) {
        best = v;
        arg = a;
      }
    }
    out.score[s] = best;
    out.best_answer[s] = arg;
  }
  return out;
}

std::size_t best_candidate(const std::vector<CandidateSpan>& cands,
                           std::span<const double> scores) {
  if (cands.empty()) throw PreconditionError("no candidate spans");
  std::size_t best = 0;
  for (std::size_t i = 1; i < cands.size(); ++i) {
    const auto& a = cands[i];
    const auto& b = cands[best];
    if (scores[i] != scores[best]) {
      if (scores[i] > scores[best]) best = i;
    } else if (a.token_start != b.token_start) {
      if (a.token_start < b.token_start) best = i;
    } else if (a.token_end < b.token_end) {
      best = i;
    }
  }
  return best;
}

CandidateSpan predict_per_case(const std::vector<CandidateSpan>& cands,
                               std::span<const EmbeddingVector> cand_vecs,
                               const CaseEntry& c, Similarity sim) {
  if (cands.empty()) throw PreconditionError("no candidate spans");
  CaseScores s = score_against_case(cand_vecs, c, sim);
  return cands[best_candidate(cands, s.score)];
}

std::vector<ScoredCandidate> score_candidates(const std::vector<CandidateSpan>& cands,
                                              std::span<const EmbeddingVector> cand_vecs,
                                              const std::vector<RetrievedCase>& retrieved,
                                              const ReuseConfig& cfg) {
  if (cand_vecs.size() != cands.size())
    throw PreconditionError("candidate vectors do not match candidates");
  std::vector<ScoredCandidate> out(cands.size());
  for (std::size_t s = 0; s < cands.size(); ++s) {
    out[s].candidate = cands[s];
    out[s].per_case.reserve(retrieved.size());
  }
  for (const auto& r : retrieved) {
    const CaseEntry& c = *r.entry;
    CaseScores cs = score_against_case(cand_vecs, c, cfg.similarity);
    std::vector<double> contrib = cs.score;
    if (cfg.aggregation == Aggregation::kSoftmaxSum && !contrib.empty()) {
      const double m = *std::max_element(contrib.begin(), contrib.end());
      double z = 0.0;
      for (auto& v : contrib) z += (v = std::exp(v - m));
      for (auto& v : contrib) v /= z;
    }
    for (std::size_t s = 0; s < cands.size(); ++s) {
      const std::size_t a = cs.best_answer[s];
      out[s].per_case.push_back(
          {c.case_data.question.id, a, c.case_data.answers[a].text, cs.score[s]});
      out[s].aggregate += contrib[s];
    }
  }
  return out;
}

Prediction reuse_cases(const std::vector<CandidateSpan>& cands,
                       std::span<const EmbeddingVector> cand_vecs,
                       const std::vector<RetrievedCase>& retrieved,
                       const ReuseConfig& cfg) {
  if (retrieved.empty()) throw NoCaseError("no retrieved case to reuse");
  if (cands.empty()) throw PreconditionError("no candidate spans");
  std::vector<ScoredCandidate> scored = score_candidates(cands, cand_vecs, retrieved, cfg);

  std::vector<double> agg(scored.size());
  for (std::size_t s = 0; s < scored.size(); ++s) agg[s] = scored[s].aggregate;
  const std::size_t win = best_candidate(cands, agg);

  Prediction p;
  p.answer = cands[win];
  p.aggregate = scored[win].aggregate;
  p.provenance = scored[win].per_case;
  std::vector<double> per(cands.size());
  for (std::size_t k = 0; k < retrieved.size(); ++k) {
    for (std::size_t s = 0; s < cands.size(); ++s) per[s] = scored[s].per_case[k].score;
    const std::size_t best = best_candidate(cands, per);
    p.per_case_predictions.push_back({retrieved[k].entry->case_data.question.id,
                                      retrieved[k].score, cands[best], per[best]});
  }
  return p;
}

Prediction predict(const Question& q, const Passage& p, const Casebase& cb,
                   const EncoderBackend& backend, const EntityRecognizer& ner,
                   const RetrievalConfig& retrieval, const ReuseConfig& cfg) {
  MaskedQuestion mq = mask_question(q, ner);
  EmbeddingVector qv = backend.encode_question(mq);
  std::optional<std::string> wh = extract_wh_keyword(q);
  std::vector<RetrievedCase> retrieved = cb.retrieve(qv, wh, retrieval);
  bool fallback = false;
  if (retrieved.empty() && cfg.fallback_unfiltered &&
      (retrieval.sim_threshold || retrieval.use_wh_filter)) {
    RetrievalConfig relaxed = retrieval;
    relaxed.sim_threshold.reset();
    relaxed.use_wh_filter = false;
    retrieved = cb.retrieve(qv, wh, relaxed);
    fallback = true;
  }
  if (retrieved.empty()) throw NoCaseError("no case retrieved for question " + q.id);

  std::vector<CandidateSpan> cands = generate_candidates(p, ner);
  if (cands.empty()) throw PreconditionError("passage " + p.id + " has no candidate spans");
  std::vector<TokenRange> ranges = candidate_ranges(cands);
  std::vector<EmbeddingVector> vecs = backend.encode_spans(p, ranges);

  Prediction pred = reuse_cases(cands, vecs, retrieved, cfg);
  pred.question_id = q.id;
  pred.passage_id = p.id;
  pred.used_fallback = fallback;
  return pred;
}

}  // namespace cbr
