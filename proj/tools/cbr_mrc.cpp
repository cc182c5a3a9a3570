// cbr-mrc: command-line driver for ingestion, casebase construction,
// training, prediction, evaluation and the analyses.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "cbr/casebase.hpp"
#include "cbr/corpus.hpp"
#include "cbr/diversity.hpp"
#include "cbr/encoder.hpp"
#include "cbr/error.hpp"
#include "cbr/metrics.hpp"
#include "cbr/pipeline.hpp"
#include "cbr/reuse.hpp"
#include "cbr/textproc.hpp"
#include "cbr/toydata.hpp"
#include "cbr/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace cbr;

namespace {

void write_text(const std::string& path, const std::string& text) {
  if (auto dir = fs::path(path).parent_path(); !dir.empty()) fs::create_directories(dir);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << text;
}

std::string manifest_path_for(const std::string& out) {
  if (fs::is_directory(out)) return (fs::path(out) / "run_manifest.json").string();
  return out + ".manifest.json";
}

RuleRecognizer make_recognizer(const std::string& gazetteer) {
  if (gazetteer.empty()) return RuleRecognizer();
  return RuleRecognizer(Gazetteer::load(gazetteer));
}

// Encoder selection shared by the commands that encode text.
struct EncoderFlags {
  std::string kind = "toy";
  std::string checkpoint;
  std::string manifest;

  void add(CLI::App* cmd) {
    cmd->add_option("--encoder", kind, "toy or imported")->check(CLI::IsMember({"toy", "imported"}));
    cmd->add_option("--checkpoint", checkpoint, "toy encoder checkpoint manifest");
    cmd->add_option("--manifest", manifest, "embedding file manifest (imported encoder)");
  }
  std::string path() const {
    const std::string& p = kind == "toy" ? checkpoint : manifest;
    if (p.empty())
      throw ValidationError(kind == "toy" ? "--checkpoint is required for the toy encoder"
                                          : "--manifest is required for the imported encoder");
    return p;
  }
  std::unique_ptr<EncoderBackend> load() const { return load_backend(kind, path()); }
  json to_json() const { return {{"encoder", kind}, {"path", path()}}; }
};

struct RetrievalFlags {
  std::size_t k = 5;
  double threshold = 0.0;
  bool use_threshold = false;
  bool wh_filter = false;
  bool no_filters = false;
  bool no_fallback = false;
  std::string similarity = "dot";
  std::string aggregation = "sum";

  void add(CLI::App* cmd) {
    cmd->add_option("--k", k, "retrieved cases per question")->check(CLI::PositiveNumber);
    cmd->add_option("--threshold", threshold, "minimum question similarity (off unless given)")
        ->each([this](const std::string&) { use_threshold = true; });
    cmd->add_flag("--wh-filter", wh_filter, "only retrieve cases sharing the wh keyword");
    cmd->add_flag("--no-filters", no_filters, "disable threshold and wh-filter (the default)");
    cmd->add_flag("--no-fallback", no_fallback,
                  "fail instead of retrying unfiltered retrieval when nothing survives");
    cmd->add_option("--similarity", similarity)->check(CLI::IsMember({"dot", "cosine"}));
    cmd->add_option("--aggregation", aggregation)->check(CLI::IsMember({"sum", "softmax-sum"}));
  }
  PredictOptions options(std::size_t jobs) const {
    PredictOptions o;
    o.retrieval = RetrievalConfig::inference(k);
    if (!no_filters) {
      if (use_threshold) o.retrieval.sim_threshold = threshold;
      o.retrieval.use_wh_filter = wh_filter;
    }
    o.reuse.similarity = similarity == "dot" ? Similarity::kDot : Similarity::kCosine;
    o.reuse.aggregation = aggregation == "sum" ? Aggregation::kSum : Aggregation::kSoftmaxSum;
    o.reuse.fallback_unfiltered = !no_fallback;
    o.jobs = jobs;
    return o;
  }
  json to_json() const {
    return {{"k", k},
            {"threshold", use_threshold && !no_filters ? json(threshold) : json(nullptr)},
            {"wh_filter", wh_filter && !no_filters},
            {"fallback", !no_fallback},
            {"similarity", similarity},
            {"aggregation", aggregation}};
  }
};

json stats_json(const DatasetStats& s) {
  return {{"cases", s.cases},
          {"mean_answers_per_case", s.mean_answers_per_case},
          {"unique_qa_pairs", s.unique_qa_pairs},
          {"multi_context_pairs", s.multi_context_pairs},
          {"multi_context_fraction", s.multi_context_fraction}};
}

// ---- commands --------------------------------------------------------------

struct IngestCmd {
  std::string input, out, name;
  std::size_t limit = 0;
  std::size_t context_window = 0;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("ingest", "MRQA JSONL(.gz) to the internal dataset format");
    c->add_option("--input", input)->required();
    c->add_option("--out", out)->required();
    c->add_option("--limit", limit, "stop after this many cases (0 = all)");
    c->add_option("--context-window", context_window,
                  "keep this many tokens either side of the first answer (0 = whole context)");
    c->add_option("--name", name, "dataset name (default: from the file header)");
    c->callback([this] { run(); });
  }
  void run() {
    RunManifest m("ingest");
    m.add_input(input);
    IngestResult r = ingest_mrqa(input, limit ? std::optional<std::size_t>(limit) : std::nullopt);
    m.mark("ingest");
    if (!name.empty()) r.dataset.name = name;
    if (context_window > 0)
      for (auto& c : r.dataset.cases) c = truncate_context(c, context_window);
    save_dataset(r.dataset, out);
    const std::string stats_path = out + ".stats.json";
    json stats = stats_json(dataset_stats(r.dataset));
    stats["lines_read"] = r.lines_read;
    stats["lines_skipped"] = r.lines_skipped;
    write_text(stats_path, stats.dump(2) + "\n");
    for (std::size_t i = 0; i < r.errors.size() && i < 10; ++i)
      std::cerr << "skipped line " << r.errors[i].line << ": " << r.errors[i].message << "\n";
    m.set_config({{"limit", limit}, {"context_window", context_window}});
    m.set_count("cases", r.dataset.cases.size());
    m.set_count("lines_read", r.lines_read);
    m.set_count("lines_skipped", r.lines_skipped);
    m.add_artifact(out);
    m.add_artifact(stats_path);
    m.mark("write");
    m.write(manifest_path_for(out));
    std::cout << stats.dump(2) << "\n";
  }
};

struct GenToyCmd {
  std::string out_dir;
  ToyCorpusConfig cfg;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("gen-toy", "write the synthetic relation corpus");
    c->add_option("--out-dir", out_dir)->required();
    c->add_option("--seed", cfg.seed);
    c->add_option("--train-per-relation", cfg.train_per_relation);
    c->add_option("--test-per-relation", cfg.test_per_relation);
    c->add_option("--fewshot-cases", cfg.fewshot_cases);
    c->add_option("--fewshot-test", cfg.fewshot_test);
    c->add_option("--distractors", cfg.distractors);
    c->callback([this] { run(); });
  }
  void run() {
    fs::create_directories(out_dir);
    RunManifest m("gen-toy");
    m.set_seed(cfg.seed);
    m.set_config({{"train_per_relation", cfg.train_per_relation},
                  {"test_per_relation", cfg.test_per_relation},
                  {"fewshot_cases", cfg.fewshot_cases},
                  {"fewshot_test", cfg.fewshot_test},
                  {"distractors", cfg.distractors}});
    ToyCorpus tc = generate_toy_corpus(cfg);
    auto save = [&](const Dataset& d, const std::string& file) {
      std::string p = (fs::path(out_dir) / file).string();
      save_dataset(d, p);
      m.add_artifact(p);
      m.set_count(file, d.cases.size());
    };
    save(tc.train, "train.jsonl");
    save(tc.test, "test.jsonl");
    save(tc.fewshot_cases, "fewshot_cases.jsonl");
    save(tc.fewshot_test, "fewshot_test.jsonl");
    std::string gaz;
    for (const auto& e : tc.entities) gaz += e + "\n";
    std::string gp = (fs::path(out_dir) / "gazetteer.txt").string();
    write_text(gp, gaz);
    m.add_artifact(gp);
    m.mark("generate");
    m.write(manifest_path_for(out_dir));
  }
};

struct InitEncoderCmd {
  std::string out;
  std::size_t dim = 64, buckets = std::size_t{1} << 15, window = 2;
  double self_weight = 0.7;
  std::uint64_t seed = 0;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("init-encoder", "write a freshly initialized toy encoder");
    c->add_option("--out", out)->required();
    c->add_option("--dim", dim);
    c->add_option("--buckets", buckets);
    c->add_option("--window", window);
    c->add_option("--self-weight", self_weight);
    c->add_option("--seed", seed);
    c->callback([this] { run(); });
  }
  void run() {
    RunManifest m("init-encoder");
    m.set_seed(seed);
    m.set_config({{"dim", dim}, {"vocab_buckets", buckets}, {"context_window", window},
                  {"self_weight", self_weight}});
    save_checkpoint(init_toy_params(dim, buckets, window, self_weight, seed), out);
    m.add_artifact(out);
    m.mark("init");
    m.write(manifest_path_for(out));
  }
};

struct BuildCasebaseCmd {
  std::string dataset, out, gazetteer;
  EncoderFlags enc;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("build-casebase", "encode a dataset into a casebase directory");
    c->add_option("--dataset", dataset)->required();
    c->add_option("--out", out)->required();
    c->add_option("--gazetteer", gazetteer, "entity forms, one per line");
    enc.add(c);
    c->callback([this] { run(); });
  }
  void run() {
    RunManifest m("build-casebase");
    m.add_input(dataset);
    m.add_input(enc.path());
    if (!gazetteer.empty()) m.add_input(gazetteer);
    auto backend = enc.load();
    RuleRecognizer ner = make_recognizer(gazetteer);
    Dataset d = load_dataset(dataset);
    m.mark("load");
    Casebase cb = Casebase::build(d, *backend, ner);
    m.mark("encode");
    cb.save(out);
    m.set_config(enc.to_json());
    m.set_count("entries", cb.size());
    m.add_artifact(out);
    m.mark("write");
    m.write(manifest_path_for(out));
    std::cout << "casebase: " << cb.size() << " entries, dim " << cb.dim() << "\n";
  }
};

struct TrainCmd {
  std::string dataset, casebase, checkpoint, out_checkpoint, gazetteer, casebase_out;
  TrainConfig cfg;
  bool no_wh = false;
  double clip = 0.0;
  std::size_t dim = 64, buckets = std::size_t{1} << 15, window = 2;
  double self_weight = 0.7;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("train", "fine-tune the toy encoder on a dataset");
    c->add_option("--dataset", dataset)->required();
    c->add_option("--casebase", casebase, "casebase built from the dataset with --checkpoint");
    c->add_option("--checkpoint", checkpoint, "initial encoder (fresh one when omitted)");
    c->add_option("--out-checkpoint", out_checkpoint)->required();
    c->add_option("--casebase-out", casebase_out, "also write the refreshed casebase");
    c->add_option("--gazetteer", gazetteer);
    c->add_option("--tau", cfg.tau);
    c->add_option("--k", cfg.k);
    c->add_option("--threshold", cfg.sim_threshold);
    c->add_flag("--no-wh-filter", no_wh);
    c->add_option("--lr", cfg.lr);
    c->add_option("--epochs", cfg.epochs);
    c->add_option("--seed", cfg.seed);
    c->add_option("--grad-clip", clip, "gradient norm cap (0 = off)");
    c->add_option("--batch-size", cfg.batch_size);
    c->add_option("--dim", dim, "fresh encoder only");
    c->add_option("--buckets", buckets, "fresh encoder only");
    c->add_option("--window", window, "fresh encoder only");
    c->add_option("--self-weight", self_weight, "fresh encoder only");
    c->callback([this] { run(); });
  }
  void run() {
    cfg.use_wh_filter = !no_wh;
    if (clip > 0.0) cfg.grad_clip = clip;
    cfg.validate();
    RunManifest m("train");
    m.set_seed(cfg.seed);
    m.add_input(dataset);
    ToyEncoder enc(checkpoint.empty() ? init_toy_params(dim, buckets, window, self_weight, cfg.seed)
                                      : load_checkpoint(checkpoint));
    if (!checkpoint.empty()) m.add_input(checkpoint);
    RuleRecognizer ner = make_recognizer(gazetteer);
    Dataset d = load_dataset(dataset);
    Casebase cb;
    if (!casebase.empty()) {
      m.add_input(casebase);
      cb = Casebase::load(casebase);
      if (cb.encoder_fingerprint() != enc.fingerprint())
        throw PreconditionError("casebase was built with encoder " + cb.encoder_fingerprint() +
                                ", not " + enc.fingerprint());
    } else {
      cb = Casebase::build(d, enc, ner);
    }
    m.mark("load");
    const std::string trace_path = out_checkpoint + ".trace.jsonl";
    std::string trace;
    TrainResult r = train(d, cb, enc, ner, cfg, [&](const EpochStats& s) {
      json line = {{"epoch", s.epoch}, {"mean_loss", s.mean_loss},
                   {"skipped_count", s.skipped}, {"lr", s.lr}};
      trace += line.dump() + "\n";
      std::cerr << line.dump() << "\n";
    });
    m.mark("train");
    save_checkpoint(enc.params(), out_checkpoint);
    write_text(trace_path, trace);
    // The checkpoint stores 32-bit floats; re-encode with exactly those
    // values so the casebase fingerprint matches the saved encoder.
    enc = ToyEncoder(load_checkpoint(out_checkpoint));
    m.add_artifact(out_checkpoint);
    m.add_artifact(trace_path);
    if (!casebase_out.empty()) {
      cb.refresh(enc, ner);
      cb.save(casebase_out);
      m.add_artifact(casebase_out);
    }
    std::size_t skipped = 0;
    for (const auto& s : r.trace) skipped += s.skipped;
    m.set_count("instances", d.cases.size());
    m.set_count("skipped_instance_epochs", skipped);
    m.set_config({{"tau", cfg.tau}, {"k", cfg.k}, {"threshold", cfg.sim_threshold},
                  {"wh_filter", cfg.use_wh_filter}, {"lr", cfg.lr}, {"epochs", cfg.epochs},
                  {"grad_clip", cfg.grad_clip ? json(*cfg.grad_clip) : json(nullptr)},
                  {"batch_size", cfg.batch_size}, {"shuffle", cfg.shuffle},
                  {"initial_checkpoint", checkpoint.empty() ? json(nullptr) : json(checkpoint)}});
    m.mark("write");
    m.write(manifest_path_for(out_checkpoint));
  }
};

struct PredictCmd {
  std::string dataset, casebase, out, gazetteer;
  EncoderFlags enc;
  RetrievalFlags ret;
  std::size_t jobs = 1;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("predict", "predict answers by case reuse");
    c->add_option("--dataset", dataset)->required();
    c->add_option("--casebase", casebase)->required();
    c->add_option("--out", out)->required();
    c->add_option("--gazetteer", gazetteer);
    c->add_option("--jobs", jobs)->check(CLI::PositiveNumber);
    enc.add(c);
    ret.add(c);
    c->callback([this] { run(); });
  }
  void run() {
    RunManifest m("predict");
    m.add_input(dataset);
    m.add_input(casebase);
    m.add_input(enc.path());
    auto backend = enc.load();
    RuleRecognizer ner = make_recognizer(gazetteer);
    Dataset d = load_dataset(dataset);
    Casebase cb = Casebase::load(casebase);
    if (cb.encoder_fingerprint() != backend->fingerprint())
      throw PreconditionError("casebase fingerprint " + cb.encoder_fingerprint() +
                              " does not match encoder " + backend->fingerprint());
    m.mark("load");
    BatchPrediction bp = predict_all(d, cb, *backend, ner, ret.options(jobs));
    m.mark("predict");
    save_predictions(bp.predictions, out);
    for (const auto& f : bp.failures) std::cerr << f.question_id << ": " << f.message << "\n";
    std::size_t fallback = 0;
    for (const auto& p : bp.predictions) fallback += p.used_fallback;
    json cfg = ret.to_json();
    cfg["encoder"] = enc.to_json();
    m.set_config(cfg);
    m.set_count("predictions", bp.predictions.size());
    m.set_count("failures", bp.failures.size());
    m.set_count("fallback_retrievals", fallback);
    m.add_artifact(out);
    m.mark("write");
    m.write(manifest_path_for(out));
    if (!bp.failures.empty()) throw Error(std::to_string(bp.failures.size()) + " questions failed");
  }
};

struct EvaluateCmd {
  std::string predictions, dataset, out, subset = "all", unit = "chars";
  bool instances = false;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("evaluate", "EM, F1, Span-EM and Span-F1 of a prediction file");
    c->add_option("--predictions", predictions)->required();
    c->add_option("--dataset", dataset)->required();
    c->add_option("--out", out)->required();
    c->add_option("--subset", subset)->check(CLI::IsMember({"all", "multi-mention"}));
    c->add_option("--span-unit", unit)->check(CLI::IsMember({"chars", "tokens"}));
    c->add_flag("--instances", instances, "include per-question scores");
    c->callback([this] { run(); });
  }
  void run() {
    RunManifest m("evaluate");
    m.add_input(predictions);
    m.add_input(dataset);
    EvalOptions o;
    o.subset = subset == "all" ? EvalSubset::kAll : EvalSubset::kMultiMention;
    o.span_unit = unit == "chars" ? SpanUnit::kChars : SpanUnit::kTokens;
    EvalResult r = evaluate(load_predictions(predictions), load_dataset(dataset), o);
    json j = eval_to_json(r, instances);
    j["subset"] = subset;
    write_text(out, j.dump(2) + "\n");
    m.set_config({{"subset", subset}, {"span_unit", unit}});
    m.set_count("n", r.n);
    m.set_count("missing", r.missing);
    m.add_artifact(out);
    m.mark("evaluate");
    m.write(manifest_path_for(out));
    json brief = j;
    brief.erase("instances");
    std::cout << brief.dump(2) << "\n";
  }
};

std::vector<std::size_t> parse_ks(const std::string& s) {
  std::vector<std::size_t> ks;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t pos = 0;
      unsigned long v = std::stoul(item, &pos);
      if (pos != item.size() || v == 0) throw std::invalid_argument(item);
      ks.push_back(v);
    } catch (const std::exception&) {
      throw ValidationError("bad k value: '" + item + "'");
    }
  }
  if (ks.empty()) throw ValidationError("--ks is empty");
  return ks;
}

struct AblateKCmd {
  std::string dataset, casebase, out, ks = "1,5,10,20", gazetteer;
  EncoderFlags enc;
  RetrievalFlags ret;
  std::size_t jobs = 1;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("ablate-k", "evaluate once per retrieval count k");
    c->add_option("--dataset", dataset)->required();
    c->add_option("--casebase", casebase)->required();
    c->add_option("--out", out, "output prefix: <out>.csv and <out>.json")->required();
    c->add_option("--ks", ks, "comma-separated k values");
    c->add_option("--gazetteer", gazetteer);
    c->add_option("--jobs", jobs)->check(CLI::PositiveNumber);
    enc.add(c);
    ret.add(c);
    c->callback([this] { run(); });
  }
  void run() {
    RunManifest m("ablate-k");
    m.add_input(dataset);
    m.add_input(casebase);
    m.add_input(enc.path());
    std::vector<std::size_t> k_values = parse_ks(ks);
    auto backend = enc.load();
    RuleRecognizer ner = make_recognizer(gazetteer);
    Dataset d = load_dataset(dataset);
    Casebase cb = Casebase::load(casebase);
    std::optional<std::string> cache;
    if (const char* env = std::getenv("CBR_MRC_CACHE_DIR"); env && *env) cache = env;
    m.mark("load");
    auto rows = ablate_k(d, cb, *backend, ner, k_values, ret.options(jobs), cache);
    m.mark("ablate");
    write_text(out + ".csv", ablation_csv(rows));
    write_text(out + ".json", ablation_json(rows).dump(2) + "\n");
    json cfg = ret.to_json();
    cfg.erase("k");
    cfg["ks"] = k_values;
    cfg["encoder"] = enc.to_json();
    cfg["cache_dir"] = cache ? json(*cache) : json(nullptr);
    m.set_config(cfg);
    m.set_count("rows", rows.size());
    m.add_artifact(out + ".csv");
    m.add_artifact(out + ".json");
    m.write(out + ".manifest.json");
    std::cout << ablation_csv(rows);
  }
};

struct AugmentCmd {
  std::string casebase, new_dataset, out, gazetteer;
  std::size_t samples = 256;
  EncoderFlags enc;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("augment", "append target-domain cases to a casebase");
    c->add_option("--casebase", casebase)->required();
    c->add_option("--new-dataset", new_dataset)->required();
    c->add_option("--out", out)->required();
    c->add_option("--samples", samples, "cases taken from the start of the new dataset (0 = all)");
    c->add_option("--gazetteer", gazetteer);
    enc.add(c);
    c->callback([this] { run(); });
  }
  void run() {
    RunManifest m("augment");
    m.add_input(casebase);
    m.add_input(new_dataset);
    m.add_input(enc.path());
    auto backend = enc.load();
    RuleRecognizer ner = make_recognizer(gazetteer);
    Casebase cb = Casebase::load(casebase);
    Dataset extra = load_dataset(new_dataset);
    const std::size_t available = extra.cases.size();
    if (samples > 0 && extra.cases.size() > samples) extra.cases.resize(samples);
    m.mark("load");
    Casebase grown = cb.augment(extra, *backend, ner);
    grown.save(out);
    m.set_config({{"samples", samples}, {"encoder", enc.to_json()}});
    m.set_count("base_entries", cb.size());
    m.set_count("new_dataset_cases", available);
    m.set_count("added", extra.cases.size());
    m.set_count("entries", grown.size());
    m.add_artifact(out);
    m.mark("augment");
    m.write(manifest_path_for(out));
    std::cout << "casebase: " << cb.size() << " + " << extra.cases.size() << " = " << grown.size()
              << " entries\n";
  }
};

struct DiversityCmd {
  std::string train, test, out, gazetteer, linkage = "average", exclude;
  std::vector<std::string> systems;
  std::size_t c = 6, b = 8, neighbors = 20, jobs = 1;
  double lower_bound = 0.9;
  EncoderFlags enc;

  void add(CLI::App& app) {
    auto* cmd = app.add_subcommand("analyze-diversity", "lexical-diversity bucket report");
    cmd->add_option("--train", train)->required();
    cmd->add_option("--test", test)->required();
    cmd->add_option("--predictions", systems,
                    "NAME=PATH per system; the first is the reference")
        ->required();
    cmd->add_option("--out", out, "output directory")->required();
    cmd->add_option("--C", c)->check(CLI::PositiveNumber);
    cmd->add_option("--B", b)->check(CLI::PositiveNumber);
    cmd->add_option("--neighbors", neighbors);
    cmd->add_option("--lower-bound", lower_bound);
    cmd->add_option("--linkage", linkage)->check(CLI::IsMember({"average", "single", "complete"}));
    cmd->add_option("--exclude", exclude, "file of test question ids to drop");
    cmd->add_option("--gazetteer", gazetteer);
    cmd->add_option("--jobs", jobs)->check(CLI::PositiveNumber);
    enc.add(cmd);
    cmd->callback([this] { run(); });
  }
  void run() {
    fs::create_directories(out);
    RunManifest m("analyze-diversity");
    m.add_input(train);
    m.add_input(test);
    m.add_input(enc.path());
    auto backend = enc.load();
    RuleRecognizer ner = make_recognizer(gazetteer);
    Dataset tr = load_dataset(train);
    Dataset te = load_dataset(test);
    if (!exclude.empty()) {
      m.add_input(exclude);
      std::set<std::string> drop;
      std::ifstream in(exclude);
      for (std::string line; std::getline(in, line);)
        if (!line.empty()) drop.insert(line);
      std::erase_if(te.cases, [&](const Case& x) { return drop.count(x.question.id) > 0; });
    }
    std::vector<std::string> names;
    std::vector<std::map<std::string, double>> f1;
    for (const auto& spec : systems) {
      auto eq = spec.find('=');
      if (eq == std::string::npos || eq == 0)
        throw ValidationError("--predictions expects NAME=PATH, got " + spec);
      names.push_back(spec.substr(0, eq));
      const std::string path = spec.substr(eq + 1);
      m.add_input(path);
      EvalResult r = evaluate(load_predictions(path), te);
      std::map<std::string, double> per;
      for (const auto& s : r.instances) per[s.question_id] = s.f1;
      f1.push_back(std::move(per));
    }
    m.mark("load");

    GraphConfig gc;
    gc.max_neighbors = neighbors;
    gc.lower_bound = lower_bound;
    gc.jobs = jobs;
    std::vector<std::string> ids;
    std::vector<EmbeddingVector> vecs;
    for (const auto& x : tr.cases) {
      ids.push_back(x.question.id);
      vecs.push_back(backend->encode_question(mask_question(x.question, ner)));
    }
    SimilarityGraph g = build_similarity_graph(ids, vecs, gc);
    std::vector<Edge> edges = undirected_edges(g);
    m.mark("graph");
    Dendrogram dg = hac(tr.cases.size(), edges, parse_linkage(linkage));
    m.mark("hac");
    CutThresholds th = compute_cut_thresholds(edges, c);
    TestAssignment ta = assign_test(te, vecs, *backend, ner);
    std::vector<TestClustering> tcs;
    json clusters = json::array();
    for (std::size_t i = 0; i < th.thresholds.size(); ++i) {
      FlatClustering fc = cut(dg, th.thresholds[i]);
      fc.tightness = i;
      auto div = cluster_diversity(fc, tr);
      tcs.push_back(label_test(ta, fc, div));
      json cl = json::array();
      for (const auto& dv : div)
        cl.push_back({{"cluster", dv.cluster}, {"size", dv.size},
                      {"unique_tokens", dv.unique_tokens}, {"score", dv.score}});
      clusters.push_back({{"tightness", i}, {"threshold", fc.threshold},
                          {"clusters", fc.clusters}, {"diversity", cl}});
    }
    BucketReport rep = bucket_report(tcs, names, f1, b);
    m.mark("report");
    json j = report_to_json(rep);
    j["thresholds_padded"] = th.padded;
    j["linkage"] = std::string(to_string(parse_linkage(linkage)));
    j["edges"] = edges.size();
    j["test_questions"] = ta.question_ids.size();
    j["test_duplicates_dropped"] = ta.duplicates_dropped;
    const std::string rp = (fs::path(out) / "report.json").string();
    const std::string cp = (fs::path(out) / "clusters.json").string();
    const std::string pc = (fs::path(out) / "per_clustering.csv").string();
    const std::string av = (fs::path(out) / "averaged.csv").string();
    write_text(rp, j.dump(2) + "\n");
    write_text(cp, clusters.dump(2) + "\n");
    write_text(pc, per_clustering_csv(rep));
    write_text(av, averaged_csv(rep));
    for (const auto& p : {rp, cp, pc, av}) m.add_artifact(p);
    m.set_config({{"C", c}, {"B", b}, {"neighbors", neighbors}, {"lower_bound", lower_bound},
                  {"linkage", linkage}, {"systems", names}, {"encoder", enc.to_json()}});
    m.set_count("train_questions", tr.cases.size());
    m.set_count("test_questions", ta.question_ids.size());
    m.set_count("test_duplicates_dropped", ta.duplicates_dropped);
    m.set_note("thresholds_padded", th.padded);
    m.write(manifest_path_for(out));
    json mm = j["min_max_diff"];
    std::cout << "min-max F1 difference: " << mm.dump() << "\n";
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cbr-mrc: case-based extractive question answering"};
  app.require_subcommand(1);
  IngestCmd ingest;
  GenToyCmd gen_toy;
  InitEncoderCmd init_encoder;
  BuildCasebaseCmd build_casebase;
  TrainCmd train_cmd;
  PredictCmd predict_cmd;
  EvaluateCmd evaluate_cmd;
  AblateKCmd ablate;
  AugmentCmd augment;
  DiversityCmd diversity;
  ingest.add(app);
  gen_toy.add(app);
  init_encoder.add(app);
  build_casebase.add(app);
  train_cmd.add(app);
  predict_cmd.add(app);
  evaluate_cmd.add(app);
  ablate.add(app);
  augment.add(app);
  diversity.add(app);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const cbr::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
