#pragma once

// Glue used by the command-line tool: batch prediction, prediction files,
// evaluation reports, the k ablation and run manifests.

#include <chrono>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cbr/casebase.hpp"
#include "cbr/encoder.hpp"
#include "cbr/metrics.hpp"
#include "cbr/reuse.hpp"

namespace cbr {

struct PredictOptions {
  RetrievalConfig retrieval = RetrievalConfig::inference(5);
  ReuseConfig reuse;
  std::size_t jobs = 1;
};

struct PredictionFailure {
  std::string question_id;
  std::string message;
};

struct BatchPrediction {
  std::vector<Prediction> predictions;  // dataset order, failures omitted
  std::vector<PredictionFailure> failures;
};

// Runs reuse::predict for every case. With jobs > 1 instances are spread
// over threads; output order and content do not depend on `jobs`.
BatchPrediction predict_all(const Dataset& d, const Casebase& cb, const EncoderBackend& backend,
                            const EntityRecognizer& ner, const PredictOptions& opts);

nlohmann::json prediction_to_json(const Prediction& p);
PredictedAnswer to_predicted_answer(const Prediction& p);
std::map<std::string, PredictedAnswer> to_predicted_map(const std::vector<Prediction>& ps);

// JSONL, one prediction per line.
void save_predictions(const std::vector<Prediction>& ps, const std::string& path);
std::map<std::string, PredictedAnswer> load_predictions(const std::string& path);

nlohmann::json eval_to_json(const EvalResult& r, bool with_instances = false);

struct AblationRow {
  std::size_t k = 0;
  EvalResult result;
};

// Predict + evaluate once per k. When `cache_dir` is set, per-k
// predictions are stored there and reused on later runs with the same
// inputs.
std::vector<AblationRow> ablate_k(const Dataset& d, const Casebase& cb,
                                  const EncoderBackend& backend, const EntityRecognizer& ner,
                                  const std::vector<std::size_t>& ks, const PredictOptions& base,
                                  const std::optional<std::string>& cache_dir = std::nullopt);
std::string ablation_csv(const std::vector<AblationRow>& rows);
nlohmann::json ablation_json(const std::vector<AblationRow>& rows);

// Backend factory: "toy" reads a checkpoint manifest, "imported" an
// embedding-file manifest.
std::unique_ptr<EncoderBackend> load_backend(const std::string& kind, const std::string& path);

// FNV-1a of a file's bytes (hex); for a directory, of its files in name
// order.
std::string content_hash(const std::string& path);

class RunManifest {
 public:
  explicit RunManifest(std::string command);

  void set_config(nlohmann::json config) { config_ = std::move(config); }
  void set_seed(std::uint64_t seed) { seed_ = seed; }
  void add_input(const std::string& path);
  void add_artifact(const std::string& path);
  void set_count(const std::string& name, std::size_t v) { counts_[name] = v; }
  void set_note(const std::string& name, nlohmann::json v) { notes_[name] = std::move(v); }
  // Records seconds since the previous mark (or construction).
  void mark(const std::string& phase);

  nlohmann::json to_json() const;
  void write(const std::string& path) const;

 private:
  std::string command_;
  nlohmann::json config_ = nlohmann::json::object();
  std::optional<std::uint64_t> seed_;
  std::map<std::string, std::string> inputs_;
  std::vector<std::string> artifacts_;
  std::map<std::string, std::size_t> counts_;
  nlohmann::json notes_ = nlohmann::json::object();
  std::vector<std::pair<std::string, double>> timings_;
  std::chrono::steady_clock::time_point last_;
};

}  // namespace cbr
