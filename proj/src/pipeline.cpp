#include "cbr/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <sstream>
#include <thread>

#include "cbr/error.hpp"
#include "io_util.hpp"

namespace cbr {

using json = nlohmann::json;
namespace fs = std::filesystem;

BatchPrediction predict_all(const Dataset& d, const Casebase& cb, const EncoderBackend& backend,
                            const EntityRecognizer& ner, const PredictOptions& opts) {
  opts.retrieval.validate();
  const std::size_t n = d.cases.size();
  std::vector<std::optional<Prediction>> slots(n);
  std::vector<std::string> errors(n);
  auto run = [&](std::size_t i) {
    const Case& c = d.cases[i];
    try {
      slots[i] = predict(c.question, c.passage, cb, backend, ner, opts.retrieval, opts.reuse);
    } catch (const Error& e) {
      errors[i] = e.what();
    }
  };
  const std::size_t jobs = std::max<std::size_t>(1, std::min(opts.jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) run(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) run(i);
      });
    for (auto& t : pool) t.join();
  }
  BatchPrediction out;
  for (std::size_t i = 0; i < n; ++i) {
    if (slots[i])
      out.predictions.push_back(std::move(*slots[i]));
    else
      out.failures.push_back({d.cases[i].question.id, errors[i]});
  }
  return out;
}

json prediction_to_json(const Prediction& p) {
  json prov = json::array();
  for (const auto& c : p.provenance)
    prov.push_back({{"case", c.case_qid},
                    {"answer_index", c.answer_index},
                    {"answer", c.answer_text},
                    {"score", c.score}});
  json per = json::array();
  for (const auto& pc : p.per_case_predictions)
    per.push_back({{"case", pc.case_qid},
                   {"retrieval_score", pc.retrieval_score},
                   {"answer", pc.span.text},
                   {"token_start", pc.span.token_start},
                   {"token_end", pc.span.token_end},
                   {"score", pc.score}});
  return {{"qid", p.question_id},
          {"passage_id", p.passage_id},
          {"answer", p.answer.text},
          {"char_start", p.answer.char_start},
          {"char_end", p.answer.char_end},
          {"token_start", p.answer.token_start},
          {"token_end", p.answer.token_end},
          {"score", p.aggregate},
          {"fallback", p.used_fallback},
          {"provenance", prov},
          {"per_case", per}};
}

PredictedAnswer to_predicted_answer(const Prediction& p) {
  return {p.question_id,        p.passage_id,         p.answer.text,
          p.answer.char_start,  p.answer.char_end,    p.answer.token_start,
          p.answer.token_end};
}

std::map<std::string, PredictedAnswer> to_predicted_map(const std::vector<Prediction>& ps) {
  std::map<std::string, PredictedAnswer> m;
  for (const auto& p : ps) m[p.question_id] = to_predicted_answer(p);
  return m;
}

void save_predictions(const std::vector<Prediction>& ps, const std::string& path) {
  std::string out;
  for (const auto& p : ps) {
    out += prediction_to_json(p).dump();
    out += '\n';
  }
  detail::write_file(path, out);
}

std::map<std::string, PredictedAnswer> load_predictions(const std::string& path) {
  std::map<std::string, PredictedAnswer> m;
  detail::for_each_line(path, [&](std::string_view line, std::size_t no) {
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) return true;
    try {
      json j = json::parse(line);
      PredictedAnswer a;
      a.question_id = j.at("qid").get<std::string>();
      a.passage_id = j.value("passage_id", "");
      a.text = j.at("answer").get<std::string>();
      a.char_start = j.value("char_start", std::size_t{0});
      a.char_end = j.value("char_end", std::size_t{0});
      a.token_start = j.value("token_start", std::size_t{0});
      a.token_end = j.value("token_end", std::size_t{0});
      m[a.question_id] = std::move(a);
    } catch (const json::exception& e) {
      throw FormatError(path + ":" + std::to_string(no) + ": " + e.what(), no);
    }
    return true;
  });
  return m;
}

json eval_to_json(const EvalResult& r, bool with_instances) {
  json j = {{"em", r.em},
            {"f1", r.f1},
            {"span_em", r.span_em},
            {"span_f1", r.span_f1},
            {"n", r.n},
            {"missing", r.missing},
            {"candidate_recall", r.candidate_recall}};
  if (with_instances) {
    json inst = json::array();
    for (const auto& s : r.instances)
      inst.push_back({{"qid", s.question_id},
                      {"predicted", s.predicted},
                      {"em", s.em},
                      {"f1", s.f1},
                      {"span_em", s.span_em},
                      {"span_f1", s.span_f1},
                      {"candidate_hit", s.candidate_hit}});
    j["instances"] = inst;
  }
  return j;
}

std::vector<AblationRow> ablate_k(const Dataset& d, const Casebase& cb,
                                  const EncoderBackend& backend, const EntityRecognizer& ner,
                                  const std::vector<std::size_t>& ks, const PredictOptions& base,
                                  const std::optional<std::string>& cache_dir) {
  std::string key_base;
  if (cache_dir) {
    std::string desc = d.name + "|" + std::to_string(d.cases.size()) + "|" +
                       cb.encoder_fingerprint() + "|" + std::to_string(cb.size()) + "|" +
                       std::to_string(base.retrieval.sim_threshold.value_or(-2.0)) + "|" +
                       (base.retrieval.use_wh_filter ? "wh" : "") + "|" +
                       std::to_string(static_cast<int>(base.reuse.similarity)) +
                       std::to_string(static_cast<int>(base.reuse.aggregation));
    for (const auto& c : d.cases) desc += "|" + c.question.id;
    key_base = detail::hex64(detail::fnv1a(desc));
    fs::create_directories(*cache_dir);
  }
  std::vector<AblationRow> rows;
  for (std::size_t k : ks) {
    std::map<std::string, PredictedAnswer> preds;
    std::string cached;
    if (cache_dir) cached = detail::join_path(*cache_dir, "ablate-" + key_base + "-k" +
                                                              std::to_string(k) + ".jsonl");
    if (cache_dir && fs::exists(cached)) {
      preds = load_predictions(cached);
    } else {
      PredictOptions o = base;
      o.retrieval.k = k;
      BatchPrediction bp = predict_all(d, cb, backend, ner, o);
      if (cache_dir) save_predictions(bp.predictions, cached);
      preds = to_predicted_map(bp.predictions);
    }
    rows.push_back({k, evaluate(preds, d)});
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os.precision(10);
  os << "k,em,f1,span_em,span_f1,n,missing\n";
  for (const auto& r : rows)
    os << r.k << ',' << r.result.em << ',' << r.result.f1 << ',' << r.result.span_em << ','
       << r.result.span_f1 << ',' << r.result.n << ',' << r.result.missing << '\n';
  return os.str();
}

json ablation_json(const std::vector<AblationRow>& rows) {
  json arr = json::array();
  for (const auto& r : rows) {
    json j = eval_to_json(r.result);
    j["k"] = r.k;
    arr.push_back(j);
  }
  return arr;
}

std::unique_ptr<EncoderBackend> load_backend(const std::string& kind, const std::string& path) {
  if (kind == "toy") return std::make_unique<ToyEncoder>(load_checkpoint(path));
  if (kind == "imported") return std::make_unique<ImportedEncoder>(ImportedEncoder::load(path));
  throw ValidationError("unknown encoder kind: " + kind);
}

std::string content_hash(const std::string& path) {
  if (fs::is_directory(path)) {
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(path))
      if (e.is_regular_file()) names.push_back(e.path().filename().string());
    std::sort(names.begin(), names.end());
    std::uint64_t h = detail::fnv1a("");
    for (const auto& n : names) {
      h = detail::fnv1a(n, h);
      h = detail::fnv1a(detail::read_file(detail::join_path(path, n)), h);
    }
    return detail::hex64(h);
  }
  return detail::hex64(detail::fnv1a(detail::read_file(path)));
}

RunManifest::RunManifest(std::string command)
    : command_(std::move(command)), last_(std::chrono::steady_clock::now()) {}

void RunManifest::add_input(const std::string& path) { inputs_[path] = content_hash(path); }

void RunManifest::add_artifact(const std::string& path) {
  if (std::find(artifacts_.begin(), artifacts_.end(), path) == artifacts_.end())
    artifacts_.push_back(path);
}

void RunManifest::mark(const std::string& phase) {
  auto now = std::chrono::steady_clock::now();
  timings_.emplace_back(phase, std::chrono::duration<double>(now - last_).count());
  last_ = now;
}

json RunManifest::to_json() const {
  json j;
  j["command"] = command_;
  j["config"] = config_;
  j["inputs"] = inputs_;
  j["seed"] = seed_ ? json(*seed_) : json(nullptr);
  j["artifacts"] = artifacts_;
  j["counts"] = counts_;
  if (!notes_.empty()) j["notes"] = notes_;
  json t = json::object();
  for (const auto& [k, v] : timings_) t[k] = v;
  j["timings_seconds"] = t;
  return j;
}

void RunManifest::write(const std::string& path) const {
  detail::write_file(path, to_json().dump(2) + "\n");
}

}  // namespace cbr
