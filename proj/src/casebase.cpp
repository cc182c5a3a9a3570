#include "cbr/casebase.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>

#include <json.hpp>

#include "cbr/error.hpp"
#include "corpus_io.hpp"
#include "io_util.hpp"

namespace cbr {

using json = nlohmann::json;

RetrievalConfig RetrievalConfig::training(std::size_t k, std::string self_qid,
                                          double threshold) {
  RetrievalConfig c;
  c.k = k;
  c.sim_threshold = threshold;
  c.use_wh_filter = true;
  c.exclude_question_id = std::move(self_qid);
  return c;
}

RetrievalConfig RetrievalConfig::inference(std::size_t k) {
  RetrievalConfig c;
  c.k = k;
  return c;
}

void RetrievalConfig::validate() const {
  if (k < 1) throw PreconditionError("retrieval k must be >= 1");
  if (sim_threshold && (*sim_threshold < -1.0 || *sim_threshold > 1.0))
    throw PreconditionError("similarity threshold must lie in [-1, 1]");
}

CaseEntry encode_case(const Case& c, const EncoderBackend& backend,
                      const EntityRecognizer& ner) {
  try {
    CaseEntry e;
    e.case_data = c;
    e.question_vec = backend.encode_question(mask_question(c.question, ner));
    std::vector<TokenRange> spans;
    spans.reserve(c.answers.size());
    for (const auto& a : c.answers) spans.push_back(a.tokens());
    e.answer_vecs = backend.encode_spans(c.passage, spans);
    e.wh = extract_wh_keyword(c.question);
    return e;
  } catch (const Error& err) {
    throw Error("cannot encode case " + c.question.id + ": " + err.what());
  }
}

Casebase Casebase::build(const Dataset& dataset, const EncoderBackend& backend,
                         const EntityRecognizer& ner) {
  Casebase cb;
  cb.dim_ = backend.dim();
  cb.fingerprint_ = backend.fingerprint();
  cb.entries_.reserve(dataset.cases.size());
  for (const auto& c : dataset.cases) cb.append(encode_case(c, backend, ner));
  return cb;
}

Casebase Casebase::augment(const Dataset& new_cases, const EncoderBackend& backend,
                           const EntityRecognizer& ner) const {
  if (backend.fingerprint() != fingerprint_)
    throw PreconditionError("encoder fingerprint " + backend.fingerprint() +
                            " does not match casebase fingerprint " + fingerprint_);
  Casebase out = *this;
  for (const auto& c : new_cases.cases) out.append(encode_case(c, backend, ner));
  return out;
}

void Casebase::refresh(const EncoderBackend& backend, const EntityRecognizer& ner) {
  dim_ = backend.dim();
  fingerprint_ = backend.fingerprint();
  for (auto& e : entries_) e = encode_case(e.case_data, backend, ner);
  reindex();
}

void Casebase::append(CaseEntry e) {
  if (e.question_vec.size() != dim_)
    throw PreconditionError("question vector of " + e.case_data.question.id +
                            " has wrong dimension");
  if (e.answer_vecs.size() != e.case_data.answers.size())
    throw PreconditionError("answer vectors of " + e.case_data.question.id +
                            " do not match its answers");
  const std::size_t idx = entries_.size();
  if (!by_qid_.emplace(e.case_data.question.id, idx).second)
    throw PreconditionError("duplicate question id " + e.case_data.question.id);
  by_wh_[e.wh.value_or("")].push_back(idx);
  norms_.push_back(l2_norm(e.question_vec));
  entries_.push_back(std::move(e));
}

void Casebase::reindex() {
  std::vector<CaseEntry> entries = std::move(entries_);
  entries_.clear();
  norms_.clear();
  by_qid_.clear();
  by_wh_.clear();
  for (auto& e : entries) append(std::move(e));
}

std::optional<std::size_t> Casebase::find(const std::string& qid) const {
  auto it = by_qid_.find(qid);
  if (it == by_qid_.end()) return std::nullopt;
  return it->second;
}

std::vector<RetrievedCase> Casebase::retrieve(std::span<const double> query_vec,
                                              const std::optional<std::string>& query_wh,
                                              const RetrievalConfig& cfg) const {
  cfg.validate();
  if (query_vec.size() != dim_)
    throw PreconditionError("query dimension " + std::to_string(query_vec.size()) +
                            " does not match casebase dimension " + std::to_string(dim_));
  const double qn = l2_norm(query_vec);

  std::vector<RetrievedCase> hits;
  auto consider = [&](std::size_t i) {
    const auto& e = entries_[i];
    if (cfg.exclude_question_id && e.case_data.question.id == *cfg.exclude_question_id)
      return;
    const double denom = qn * norms_[i];
    const double score = denom > 0.0 ? dot(query_vec, e.question_vec) / denom : 0.0;
    if (cfg.sim_threshold && score < *cfg.sim_threshold) return;
    hits.push_back({&e, i, score});
  };
  if (cfg.use_wh_filter) {
    auto it = by_wh_.find(query_wh.value_or(""));
    if (it != by_wh_.end())
      for (std::size_t i : it->second) consider(i);
  } else {
    for (std::size_t i = 0; i < entries_.size(); ++i) consider(i);
  }

  auto better = [](const RetrievedCase& a, const RetrievedCase& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.index < b.index;
  };
  const std::size_t k = std::min(cfg.k, hits.size());
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(k), hits.end(),
                    better);
  hits.resize(k);
  return hits;
}

// ---- persistence -----------------------------------------------------------

namespace {

constexpr const char* kManifest = "casebase.json";
constexpr const char* kEmbeddings = "embeddings.json";
constexpr const char* kCases = "cases.jsonl";

std::vector<float> to_f32(const EmbeddingVector& v) {
  return std::vector<float>(v.begin(), v.end());
}

EmbeddingVector to_f64(const std::vector<float>& v) {
  return EmbeddingVector(v.begin(), v.end());
}

}  // namespace

void Casebase::save(const std::string& dir) const {
  std::filesystem::create_directories(dir);
  EmbeddingFile ef;
  ef.dim = dim_;
  ef.fingerprint = fingerprint_;
  std::ostringstream cases;
  for (const auto& e : entries_) {
    const auto& c = e.case_data;
    ef.rows.push_back({EmbeddingKey::question(c.question.id), to_f32(e.question_vec)});
    for (std::size_t a = 0; a < c.answers.size(); ++a) {
      ef.rows.push_back({EmbeddingKey::span(c.passage.id, c.answers[a].token_start,
                                            c.answers[a].token_end),
                         to_f32(e.answer_vecs[a])});
    }
    json rec = detail::case_to_json_object(c);
    rec["wh"] = e.wh ? json(*e.wh) : json(nullptr);
    cases << rec.dump() << '\n';
  }
  write_embedding_file(ef, detail::join_path(dir, kEmbeddings));
  detail::write_file(detail::join_path(dir, kCases), cases.str());
  json m{{"format", "cbr-mrc-casebase"},
         {"version", 1},
         {"dim", dim_},
         {"count", entries_.size()},
         {"encoder_fingerprint", fingerprint_},
         {"embeddings", kEmbeddings},
         {"cases", kCases}};
  detail::write_file(detail::join_path(dir, kManifest), m.dump(2) + "\n");
}

Casebase Casebase::load(const std::string& dir) {
  const std::string manifest_path = detail::join_path(dir, kManifest);
  json m;
  try {
    m = json::parse(detail::read_file(manifest_path));
  } catch (const json::parse_error& e) {
    throw FormatError("invalid casebase manifest " + manifest_path + ": " + e.what(),
                      static_cast<long long>(e.byte));
  }
  Casebase cb;
  std::size_t count = 0;
  try {
    if (m.at("format") != "cbr-mrc-casebase")
      throw FormatError("not a casebase manifest: " + manifest_path);
    cb.dim_ = m.at("dim").get<std::size_t>();
    count = m.at("count").get<std::size_t>();
    cb.fingerprint_ = m.at("encoder_fingerprint").get<std::string>();
  } catch (const json::exception& e) {
    throw FormatError("bad casebase manifest " + manifest_path + ": " + e.what());
  }
  EmbeddingFile ef = read_embedding_file(
      detail::join_path(dir, m.value("embeddings", std::string(kEmbeddings))));
  if (ef.dim != cb.dim_)
    throw FormatError("embedding dim " + std::to_string(ef.dim) +
                      " differs from casebase dim " + std::to_string(cb.dim_));

  std::size_t row = 0;
  detail::for_each_line(
      detail::join_path(dir, m.value("cases", std::string(kCases))),
      [&](std::string_view line, std::size_t no) {
        if (line.empty()) return true;
        json rec;
        try {
          rec = json::parse(line);
        } catch (const json::exception& e) {
          throw FormatError(std::string("invalid case JSON: ") + e.what(),
                            static_cast<long long>(no));
        }
        CaseEntry e;
        e.case_data = detail::case_from_json(rec, no);
        if (rec.contains("wh") && rec["wh"].is_string()) e.wh = rec["wh"].get<std::string>();
        const auto& c = e.case_data;
        auto take = [&](const EmbeddingKey& expect) {
          if (row >= ef.rows.size())
            throw FormatError("embedding rows exhausted at case " + c.question.id,
                              static_cast<long long>(no));
          if (ef.rows[row].key != expect)
            throw FormatError("embedding row " + std::to_string(row) + " is " +
                                  ef.rows[row].key.describe() + ", expected " +
                                  expect.describe(),
                              static_cast<long long>(no));
          return to_f64(ef.rows[row++].values);
        };
        e.question_vec = take(EmbeddingKey::question(c.question.id));
        for (const auto& a : c.answers)
          e.answer_vecs.push_back(
              take(EmbeddingKey::span(c.passage.id, a.token_start, a.token_end)));
        cb.append(std::move(e));
        return true;
      });
  if (cb.entries_.size() != count)
    throw FormatError("casebase holds " + std::to_string(cb.entries_.size()) +
                      " cases, manifest count " + std::to_string(count));
  if (row != ef.rows.size())
    throw FormatError("casebase embeddings have " + std::to_string(ef.rows.size() - row) +
                      " unused rows");
  return cb;
}

}  // namespace cbr
