#pragma once

// The casebase: cases with cached question and answer embeddings, exact
// top-k cosine retrieval, augmentation and persistence.

#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "cbr/corpus.hpp"
#include "cbr/encoder.hpp"
#include "cbr/textproc.hpp"

namespace cbr {

struct CaseEntry {
  Case case_data;
  EmbeddingVector question_vec;              // unit norm
  std::vector<EmbeddingVector> answer_vecs;  // one per answer
  std::optional<std::string> wh;
};

struct RetrievalConfig {
  std::size_t k = 5;
  std::optional<double> sim_threshold;
  bool use_wh_filter = false;
  std::optional<std::string> exclude_question_id;

  // Filters used while training: threshold 0.95, wh-filter, self-exclusion.
  static RetrievalConfig training(std::size_t k, std::string self_qid,
                                  double threshold = 0.95);
  // Test-time retrieval: no threshold, no wh-filter.
  static RetrievalConfig inference(std::size_t k);

  void validate() const;
};

struct RetrievedCase {
  const CaseEntry* entry = nullptr;
  std::size_t index = 0;  // position in the casebase
  double score = 0.0;     // cosine
};

class Casebase {
 public:
  Casebase() = default;

  // Encodes every case: masked question via `ner` + backend, each gold
  // answer span, and the wh keyword. Entry order follows the dataset.
  static Casebase build(const Dataset& dataset, const EncoderBackend& backend,
                        const EntityRecognizer& ner);

  // Returns a new casebase with `new_cases` appended; existing entries are
  // copied untouched. Throws PreconditionError on fingerprint mismatch or
  // duplicate question ids.
  Casebase augment(const Dataset& new_cases, const EncoderBackend& backend,
                   const EntityRecognizer& ner) const;

  // Re-encodes every entry in place with (new) encoder parameters.
  void refresh(const EncoderBackend& backend, const EntityRecognizer& ner);

  std::vector<RetrievedCase> retrieve(std::span<const double> query_vec,
                                      const std::optional<std::string>& query_wh,
                                      const RetrievalConfig& cfg) const;

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::size_t dim() const { return dim_; }
  const std::string& encoder_fingerprint() const { return fingerprint_; }
  const std::vector<CaseEntry>& entries() const { return entries_; }
  const CaseEntry& entry(std::size_t i) const { return entries_[i]; }
  std::optional<std::size_t> find(const std::string& qid) const;

  // Writes a directory: casebase.json, embeddings.{json,vectors.f32,keys.tsv}
  // and cases.jsonl. Identical casebases produce identical bytes.
  void save(const std::string& dir) const;
  static Casebase load(const std::string& dir);

 private:
  void append(CaseEntry e);
  void reindex();

  std::vector<CaseEntry> entries_;
  std::vector<double> norms_;
  std::size_t dim_ = 0;
  std::string fingerprint_;
  std::unordered_map<std::string, std::size_t> by_qid_;
  // Entry indices per wh keyword ("" key = no keyword).
  std::map<std::string, std::vector<std::size_t>> by_wh_;
};

CaseEntry encode_case(const Case& c, const EncoderBackend& backend,
                      const EntityRecognizer& ner);

}  // namespace cbr
