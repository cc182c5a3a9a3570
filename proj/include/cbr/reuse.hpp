#pragma once

// Case reuse: score target candidates against the gold-answer embeddings of
// retrieved cases, sum per-case scores and predict the best span.

#include <span>
#include <string>
#include <vector>

#include "cbr/casebase.hpp"
#include "cbr/encoder.hpp"
#include "cbr/spanner.hpp"

namespace cbr {

enum class Similarity { kDot, kCosine };
// kSoftmaxSum turns each case's candidate scores into a softmax before
// summing across cases.
enum class Aggregation { kSum, kSoftmaxSum };

struct ReuseConfig {
  Similarity similarity = Similarity::kDot;
  Aggregation aggregation = Aggregation::kSum;
  // Retry retrieval with threshold and wh-filter disabled when the
  // configured retrieval returns nothing.
  bool fallback_unfiltered = true;
};

double similarity(std::span<const double> a, std::span<const double> b, Similarity s);

struct CaseScores {
  std::vector<double> score;             // per candidate
  std::vector<std::size_t> best_answer;  // per candidate, first argmax on ties
};

// score(s) = max over the case's answers of sim(Enc(s), Enc(a)).
CaseScores score_against_case(std::span<const EmbeddingVector> cand_vecs,
                              const CaseEntry& c, Similarity sim = Similarity::kDot);

// Index of the best candidate: highest score, then lower token_start, then
// shorter span, then earlier position. Throws PreconditionError when empty.
std::size_t best_candidate(const std::vector<CandidateSpan>& cands,
                           std::span<const double> scores);

CandidateSpan predict_per_case(const std::vector<CandidateSpan>& cands,
                               std::span<const EmbeddingVector> cand_vecs,
                               const CaseEntry& c, Similarity sim = Similarity::kDot);

struct CaseContribution {
  std::string case_qid;
  std::size_t answer_index = 0;
  std::string answer_text;
  double score = 0.0;
};

struct ScoredCandidate {
  CandidateSpan candidate;
  std::vector<CaseContribution> per_case;  // one per retrieved case
  double aggregate = 0.0;
};

struct PerCasePrediction {
  std::string case_qid;
  double retrieval_score = 0.0;
  CandidateSpan span;
  double score = 0.0;
};

struct Prediction {
  std::string question_id;
  std::string passage_id;
  CandidateSpan answer;
  double aggregate = 0.0;
  std::vector<CaseContribution> provenance;  // the winner's per-case list
  std::vector<PerCasePrediction> per_case_predictions;
  bool used_fallback = false;
};

// Scores every candidate against every retrieved case.
std::vector<ScoredCandidate> score_candidates(const std::vector<CandidateSpan>& cands,
                                              std::span<const EmbeddingVector> cand_vecs,
                                              const std::vector<RetrievedCase>& retrieved,
                                              const ReuseConfig& cfg = {});

// Reuse step over already-retrieved cases. Throws NoCaseError when
// `retrieved` is empty and PreconditionError when there are no candidates.
Prediction reuse_cases(const std::vector<CandidateSpan>& cands,
                       std::span<const EmbeddingVector> cand_vecs,
                       const std::vector<RetrievedCase>& retrieved,
                       const ReuseConfig& cfg = {});

// Full inference: mask and encode the question, retrieve, generate and
// encode candidates, reuse.
Prediction predict(const Question& q, const Passage& p, const Casebase& cb,
                   const EncoderBackend& backend, const EntityRecognizer& ner,
                   const RetrievalConfig& retrieval, const ReuseConfig& cfg = {});

}  // namespace cbr
