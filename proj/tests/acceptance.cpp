// Acceptance run: one PASS/FAIL line per criterion. Exit status is non-zero
// when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cbr/casebase.hpp"
#include "cbr/corpus.hpp"
#include "cbr/diversity.hpp"
#include "cbr/encoder.hpp"
#include "cbr/error.hpp"
#include "cbr/metrics.hpp"
#include "cbr/pipeline.hpp"
#include "cbr/reuse.hpp"
#include "cbr/spanner.hpp"
#include "cbr/textproc.hpp"
#include "cbr/toydata.hpp"
#include "cbr/trainer.hpp"
#include "helpers.hpp"

using namespace cbr;

namespace {

// Pinned tolerances.
constexpr double kGradRelTol = 1e-4;
constexpr double kGradSeconds = 10.0;
constexpr double kLossTol = 1e-9;
constexpr double kAggregateTol = 1e-9;
constexpr double kMaskCosineTol = 1e-6;
constexpr double kF1Tol = 1e-12;
constexpr double kHacSimTol = 1e-12;
constexpr double kToySeconds = 120.0;

struct Outcome {
  bool ok = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double raw_dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double raw_cosine(const std::vector<double>& a, const std::vector<double>& b) {
  return raw_dot(a, b) / std::sqrt(raw_dot(a, a) * raw_dot(b, b));
}

// ---- gradient and loss -----------------------------------------------------

Outcome gradient_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  GradCheckReport r = finite_difference_check(24, 2024);
  const double secs = seconds_since(t0);
  const bool ok = r.instances == 24 && r.entries_checked > 0 &&
                  r.max_relative_error <= kGradRelTol && secs < kGradSeconds;
  return {ok, fmt("%zu instances, %zu entries, max rel err %.3g, small-entry abs err %.3g, "
                  "%zu near-tie redraws, %.2f s",
                  r.instances, r.entries_checked, r.max_relative_error, r.max_abs_error_small,
                  r.redrawn_near_ties, secs)};
}

Outcome loss_closed_forms() {
  // Every candidate is gold.
  std::vector<double> sims = {0.3, -1.2, 2.5};
  auto all_gold = soft_nn_loss(sims, {true, true, true}, 1.0);
  // One positive, one negative, same similarity.
  auto sym = soft_nn_loss(std::vector<double>{0.7, 0.7}, {true, false}, 1.0);
  // Positive at similarity 2, negative at 0.
  auto pn = soft_nn_loss(std::vector<double>{2.0, 0.0}, {true, false}, 1.0);
  const double want_pn = std::log1p(std::exp(-2.0));
  const bool ok = all_gold.report.value == 0.0 &&
                  std::abs(sym.report.value - std::log(2.0)) <= kLossTol &&
                  std::abs(pn.report.value - want_pn) <= kLossTol;
  return {ok, fmt("all-gold %.17g, symmetric %.17g (log 2 = %.17g), p=2/n=0 %.17g (want %.17g)",
                  all_gold.report.value, sym.report.value, std::log(2.0), pn.report.value,
                  want_pn)};
}

// ---- reuse -----------------------------------------------------------------

std::vector<double> draw_vec(Rng& rng, std::size_t dim, bool integer) {
  std::vector<double> v(dim);
  do {
    for (auto& x : v)
      x = integer ? static_cast<double>(static_cast<int>(rng.below(5)) - 2) : rng.uniform(-1.0, 1.0);
  } while (raw_dot(v, v) == 0.0);
  return v;
}

Outcome reuse_oracle() {
  Rng rng(31337);
  RuleRecognizer ner;
  constexpr std::size_t kDim = 4;
  std::size_t exact = 0, max_cands = 0, ties = 0;
  double worst = 0.0;
  std::string first_failure;
  for (int inst = 0; inst < 100; ++inst) {
    const bool integer = inst % 2 == 1;
    testing::VectorStore store(kDim);
    // Target.
    const std::size_t T = 1 + rng.below(17);
    Passage p = make_passage("target", testing::random_text(rng, T));
    Question q = make_question("tq", "what " + testing::random_text(rng, 3));
    store.question(q.id, draw_vec(rng, kDim, integer));
    std::map<TokenRange, std::vector<double>> cand_vecs;
    for (std::size_t s = 0; s < T; ++s)
      for (std::size_t e = s + 1; e <= std::min(T, s + kMaxNgram); ++e) {
        auto v = testing::as_stored(draw_vec(rng, kDim, integer));
        store.span(p.id, s, e, v);
        cand_vecs[{s, e}] = v;
      }
    max_cands = std::max(max_cands, cand_vecs.size());

    // Cases.
    Dataset cases;
    std::vector<std::vector<std::vector<double>>> answer_vecs;
    const std::size_t n_cases = 1 + rng.below(5);
    for (std::size_t k = 0; k < n_cases; ++k) {
      Case c;
      const std::string qid = "k" + std::to_string(k);
      c.question = make_question(qid, "what " + testing::random_text(rng, 3));
      const std::size_t words = 3 + rng.below(8);
      c.passage = make_passage("p-" + qid, testing::random_text(rng, words));
      store.question(qid, draw_vec(rng, kDim, integer));
      std::vector<std::vector<double>> avs;
      const std::size_t n_ans = 1 + rng.below(3);
      std::set<TokenRange> used;
      while (c.answers.size() < n_ans) {
        const std::size_t s = rng.below(words);
        const TokenRange r{s, std::min(words, s + 1 + rng.below(3))};
        if (!used.insert(r).second) {
          if (used.size() >= words) break;
          continue;
        }
        c.answers.push_back(make_answer_from_tokens(c.passage, r));
        auto v = testing::as_stored(draw_vec(rng, kDim, integer));
        store.span(c.passage.id, r.start, r.end, v);
        avs.push_back(v);
      }
      answer_vecs.push_back(avs);
      cases.cases.push_back(std::move(c));
    }

    ImportedEncoder enc = store.encoder();
    Casebase cb = Casebase::build(cases, enc, ner);
    Prediction pred = predict(q, p, cb, enc, ner, RetrievalConfig::inference(5));

    // Brute force over (span, case, answer).
    std::optional<TokenRange> best;
    double best_score = 0.0;
    std::size_t n_best = 0;
    for (const auto& [r, v] : cand_vecs) {
      double agg = 0.0;
      for (const auto& avs : answer_vecs) {
        double m = -INFINITY;
        for (const auto& a : avs) m = std::max(m, raw_dot(v, a));
        agg += m;
      }
      // Map order is (start, end) ascending, so strict > keeps the earlier
      // start and then the shorter span.
      if (!best || agg > best_score) {
        best = r;
        best_score = agg;
        n_best = 1;
      } else if (agg == best_score) {
        ++n_best;
      }
    }
    if (n_best > 1) ++ties;
    const double err = std::abs(pred.aggregate - best_score);
    worst = std::max(worst, err);
    const bool same = pred.answer.tokens() == *best && err <= kAggregateTol &&
                      pred.provenance.size() == n_cases;
    if (same) {
      ++exact;
    } else if (first_failure.empty()) {
      first_failure = fmt(" first mismatch at instance %d: got [%zu,%zu) want [%zu,%zu)", inst,
                          pred.answer.token_start, pred.answer.token_end, best->start, best->end);
    }
  }
  return {exact == 100 && max_cands <= 50,
          fmt("%zu/100 match, max candidates %zu, %zu instances with tied maxima, "
              "max aggregate err %.3g",
              exact, max_cands, ties, worst) +
              first_failure};
}

// ---- retrieval -------------------------------------------------------------

Outcome retrieval_oracle() {
  Rng rng(4242);
  RuleRecognizer ner;
  std::size_t ranked_ok = 0, filtered_ok = 0, filtered_nonempty = 0;
  for (int b = 0; b < 50; ++b) {
    const std::size_t n = 1 + rng.below(200);
    const std::size_t dim = 2 + rng.below(7);
    auto rc = testing::random_cases(rng, n, dim, "c" + std::to_string(b) + "_");
    ImportedEncoder enc = rc.store.encoder();
    Casebase cb = Casebase::build(rc.dataset, enc, ner);

    // Filters off: exhaustive scan, score descending then index.
    auto query = testing::random_vector(rng, dim);
    const std::size_t k = 1 + rng.below(n + 5);
    auto hits = cb.retrieve(query, std::nullopt, RetrievalConfig::inference(k));
    std::vector<std::pair<double, std::size_t>> scan;
    for (std::size_t i = 0; i < n; ++i) scan.push_back({-raw_cosine(query, rc.question_vecs[i]), i});
    std::sort(scan.begin(), scan.end());
    bool ok = hits.size() == std::min(k, n);
    for (std::size_t j = 0; ok && j < hits.size(); ++j)
      ok = hits[j].index == scan[j].second && std::abs(hits[j].score + scan[j].first) <= 1e-9;
    ranked_ok += ok;

    // Threshold 0.95, wh-filter, self-exclusion.
    const std::size_t probe = rng.below(n);
    const auto wh = extract_wh_keyword(rc.dataset.cases[probe].question);
    auto filtered = cb.retrieve(rc.question_vecs[probe], wh,
                                RetrievalConfig::training(n, rc.dataset.cases[probe].question.id));
    std::set<std::size_t> want, got;
    for (std::size_t i = 0; i < n; ++i)
      if (i != probe && raw_cosine(rc.question_vecs[probe], rc.question_vecs[i]) >= 0.95 &&
          extract_wh_keyword(rc.dataset.cases[i].question) == wh)
        want.insert(i);
    for (const auto& h : filtered) got.insert(h.index);
    filtered_ok += got == want && got.size() == filtered.size();
    filtered_nonempty += !want.empty();
  }
  return {ranked_ok == 50 && filtered_ok == 50,
          fmt("unfiltered %zu/50, filtered %zu/50 (%zu with a non-empty filtered set)", ranked_ok,
              filtered_ok, filtered_nonempty)};
}

// ---- masking ---------------------------------------------------------------

std::string surface(const std::string& form, Rng& rng) {
  // Some mentions appear lowercase, some title-cased.
  if (rng.below(2) == 0) return form;
  std::string s = form;
  bool start = true;
  for (char& ch : s) {
    if (start && ch >= 'a' && ch <= 'z') ch = static_cast<char>(ch - 'a' + 'A');
    start = ch == ' ';
  }
  return s;
}

Outcome masking_invariance() {
  Rng rng(77);
  const std::set<std::string> frame_words = {"who", "did", "meet", "near", "after", "what",
                                             "gave", "the", "prize", "to", "where"};
  std::vector<std::string> forms;
  while (forms.size() < 40) {
    std::string f;
    const std::size_t words = 1 + rng.below(3);
    for (std::size_t i = 0; i < words; ++i) {
      std::string w;
      do w = testing::random_word(rng);
      while (w.size() < 4 || frame_words.count(w));
      f += (i ? " " : "") + w;
    }
    forms.push_back(f);
  }
  Gazetteer gaz(forms);
  RuleRecognizer ner(gaz);
  ToyEncoder enc(init_toy_params(64, std::size_t{1} << 15, 2, 0.7, 5));
  const std::vector<std::string> frames = {"who did {} meet near {} ?",
                                           "what gave {} the prize after {} ?",
                                           "where did {} meet {} ?"};
  auto fill = [](std::string frame, const std::string& a, const std::string& b) {
    frame.replace(frame.find("{}"), 2, a);
    frame.replace(frame.find("{}"), 2, b);
    return frame;
  };
  std::size_t ok = 0;
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    const std::string& frame = frames[rng.below(frames.size())];
    Question q1 = make_question("m1", fill(frame, surface(rng.pick(forms), rng),
                                           surface(rng.pick(forms), rng)));
    Question q2 = make_question("m2", fill(frame, surface(rng.pick(forms), rng),
                                           surface(rng.pick(forms), rng)));
    MaskedQuestion m1 = mask_question(q1, ner);
    MaskedQuestion m2 = mask_question(q2, ner);
    const double cos = cosine(enc.encode_question(m1), enc.encode_question(m2));
    worst = std::max(worst, std::abs(cos - 1.0));
    ok += m1.masked_text == m2.masked_text && m1.mask_count == 2 &&
          std::abs(cos - 1.0) <= kMaskCosineTol;
  }
  return {ok == 50, fmt("%zu/50 pairs identical after masking, max |cos - 1| %.3g", ok, worst)};
}

// ---- candidates ------------------------------------------------------------

Outcome candidate_completeness() {
  Rng rng(99);
  const std::vector<std::string> extras = {
      "Ana Lee Bo Ray Kim", "March 3 , 1999", "\"the old mill road at dusk\"", "1,204",
      "Tomas Vik",          "in 1987",        "seven",                          "Lu Pam Sor Ivo"};
  std::size_t ok = 0, with_extras = 0;
  for (int i = 0; i < 100; ++i) {
    std::string text;
    const std::size_t chunks = 1 + rng.below(6);
    for (std::size_t c = 0; c < chunks; ++c) {
      if (c) text += ' ';
      text += rng.below(3) == 0 ? rng.pick(extras) : testing::random_text(rng, 1 + rng.below(4));
    }
    Passage p = make_passage("cc" + std::to_string(i), text);
    const std::size_t T = p.tokens.size();
    auto cands = generate_candidates(p, RuleRecognizer{});

    std::set<TokenRange> want;
    for (std::size_t n = 1; n <= kMaxNgram; ++n)
      for (std::size_t s = 0; s + n <= T; ++s) want.insert({s, s + n});
    std::size_t ngrams = 0;
    for (std::size_t n = 1; n <= kMaxNgram; ++n) ngrams += T >= n ? T - n + 1 : 0;
    std::size_t extra = 0;
    for (const auto& m : recognize_entities(p.tokens, p.text))
      if (want.insert(m.tokens).second) ++extra;
    with_extras += extra > 0;

    std::set<TokenRange> got;
    for (const auto& c : cands) got.insert(c.tokens());
    bool good = got == want && cands.size() == ngrams + extra && got.size() == cands.size();
    std::vector<TokenRange> spans;
    for (const auto& m : recognize_entities(p.tokens, p.text)) spans.push_back(m.tokens);
    good = good && count_candidates(T, spans) == cands.size();
    // Random gold spans of length <= 3.
    for (int g = 0; g < 3 && T > 0; ++g) {
      const std::size_t s = rng.below(T);
      const TokenRange r{s, std::min(T, s + 1 + rng.below(3))};
      good = good && got.count(r) == 1;
    }
    ok += good;
  }
  return {ok == 100, fmt("%zu/100 passages complete, %zu with entity extras", ok, with_extras)};
}

// ---- metrics ---------------------------------------------------------------

Outcome metrics_hand_cases() {
  const double f1 = token_f1("Graham Bell", {"Alexander Graham Bell"});
  const double sf1 = span_f1({"p", 5, 15}, {{"p", 10, 20}});
  Passage p = make_passage("p", "the cat saw the cat");
  AnswerSpan first = make_answer_from_tokens(p, {0, 2});
  AnswerSpan second = make_answer_from_tokens(p, {3, 5});
  const int text_em = exact_match(second.text, {first.text});
  const int em_other = span_em({"p", second.char_start, second.char_end},
                               {{"p", first.char_start, first.char_end}});
  const int em_same = span_em({"p", first.char_start, first.char_end},
                              {{"p", first.char_start, first.char_end}});
  const bool ok = std::abs(f1 - 0.8) <= kF1Tol && sf1 == 0.5 && text_em == 1 && em_other == 0 &&
                  em_same == 1;
  return {ok, fmt("token F1 %.17g, span F1 %.17g, text EM %d vs span EM %d/%d", f1, sf1, text_em,
                  em_other, em_same)};
}

// ---- toy corpus ------------------------------------------------------------

struct ToyRun {
  ToyCorpus corpus;
  std::unique_ptr<RuleRecognizer> ner;
  std::unique_ptr<ToyEncoder> untrained;
  std::unique_ptr<ToyEncoder> trained;
  std::unique_ptr<Casebase> cb_untrained;
  std::unique_ptr<Casebase> cb_trained;
  EvalResult before, after;
  double seconds = 0.0;
  double final_loss = 0.0;
};

EvalResult run_eval(const Dataset& d, const Casebase& cb, const EncoderBackend& enc,
                    const EntityRecognizer& ner, std::size_t k = 5) {
  PredictOptions po;
  po.retrieval = RetrievalConfig::inference(k);
  auto bp = predict_all(d, cb, enc, ner, po);
  return evaluate(to_predicted_map(bp.predictions), d);
}

ToyRun& toy_run() {
  static ToyRun run = [] {
    ToyRun r;
    const auto t0 = std::chrono::steady_clock::now();
    r.corpus = generate_toy_corpus();
    r.ner = std::make_unique<RuleRecognizer>(r.corpus.gazetteer());
    TrainConfig cfg;
    auto params = init_toy_params(64, std::size_t{1} << 15, 2, 0.7, cfg.seed);
    r.untrained = std::make_unique<ToyEncoder>(params);
    r.trained = std::make_unique<ToyEncoder>(params);
    r.cb_untrained =
        std::make_unique<Casebase>(Casebase::build(r.corpus.train, *r.untrained, *r.ner));
    r.before = run_eval(r.corpus.test, *r.cb_untrained, *r.untrained, *r.ner);
    r.cb_trained = std::make_unique<Casebase>(*r.cb_untrained);
    TrainResult tr = train(r.corpus.train, *r.cb_trained, *r.trained, *r.ner, cfg);
    r.final_loss = tr.trace.back().mean_loss;
    r.after = run_eval(r.corpus.test, *r.cb_trained, *r.trained, *r.ner);
    r.seconds = seconds_since(t0);
    return r;
  }();
  return run;
}

Outcome toy_end_to_end() {
  ToyRun& r = toy_run();
  const bool ok = r.corpus.train.cases.size() == 500 && r.corpus.test.cases.size() == 100 &&
                  r.before.em <= 40.0 && r.after.em >= 90.0 && r.seconds < kToySeconds;
  return {ok, fmt("%zu train / %zu test, EM %.1f untrained -> %.1f trained (final loss %.4f), "
                  "%.1f s",
                  r.corpus.train.cases.size(), r.corpus.test.cases.size(), r.before.em,
                  r.after.em, r.final_loss, r.seconds)};
}

Outcome few_shot() {
  ToyRun& r = toy_run();
  const std::string fp = r.trained->fingerprint();
  const EvalResult before = run_eval(r.corpus.fewshot_test, *r.cb_trained, *r.trained, *r.ner);
  Casebase grown = r.cb_trained->augment(r.corpus.fewshot_cases, *r.trained, *r.ner);
  const EvalResult after = run_eval(r.corpus.fewshot_test, grown, *r.trained, *r.ner);
  const bool ok = r.corpus.fewshot_cases.cases.size() == 32 &&
                  r.corpus.fewshot_test.cases.size() == 20 && fp == r.trained->fingerprint() &&
                  before.em < 30.0 && after.em >= 70.0;
  return {ok, fmt("%zu cases added, EM on %zu unseen-relation questions %.1f -> %.1f",
                  r.corpus.fewshot_cases.cases.size(), r.corpus.fewshot_test.cases.size(),
                  before.em, after.em)};
}

Outcome k_ablation() {
  ToyRun& r = toy_run();
  auto rows = ablate_k(r.corpus.test, *r.cb_trained, *r.trained, *r.ner, {1, 5, 10, 20},
                       PredictOptions{});
  const EvalResult direct = run_eval(r.corpus.test, *r.cb_trained, *r.trained, *r.ner, 1);
  bool same = !rows.empty() && rows[0].k == 1;
  if (same) {
    const EvalResult& a = rows[0].result;
    same = a.em == direct.em && a.f1 == direct.f1 && a.span_em == direct.span_em &&
           a.span_f1 == direct.span_f1 && a.n == direct.n && a.missing == direct.missing &&
           a.instances.size() == direct.instances.size();
    for (std::size_t i = 0; same && i < a.instances.size(); ++i)
      same = a.instances[i].question_id == direct.instances[i].question_id &&
             a.instances[i].f1 == direct.instances[i].f1 &&
             a.instances[i].span_f1 == direct.instances[i].span_f1;
  }
  const std::string csv = ablation_csv(rows);
  const auto lines = std::count(csv.begin(), csv.end(), '\n');
  std::string series;
  for (const auto& row : rows) series += fmt(" k=%zu:%.1f", row.k, row.result.em);
  return {rows.size() == 4 && lines == 5 && same,
          fmt("%zu rows, k=1 row %s predict+evaluate; EM", rows.size(),
              same ? "equals" : "differs from") +
              series};
}

// ---- diversity -------------------------------------------------------------

// Average linkage by definition: mean leaf-pair similarity, missing pairs 0.
std::vector<Merge> brute_force_hac(std::size_t n, const std::vector<Edge>& edges) {
  std::vector<std::vector<double>> w(n, std::vector<double>(n, 0.0));
  for (const auto& e : edges) w[e.a][e.b] = w[e.b][e.a] = e.sim;
  std::map<std::size_t, std::vector<std::size_t>> active;
  for (std::size_t i = 0; i < n; ++i) active[i] = {i};
  std::vector<Merge> out;
  std::size_t next = n;
  while (active.size() > 1) {
    std::optional<Merge> best;
    for (auto i = active.begin(); i != active.end(); ++i)
      for (auto j = std::next(i); j != active.end(); ++j) {
        double s = 0.0;
        for (auto x : i->second)
          for (auto y : j->second) s += w[x][y];
        s /= static_cast<double>(i->second.size() * j->second.size());
        if (!best || s > best->similarity) best = Merge{i->first, j->first, 0, s, 0};
      }
    auto leaves = active[best->left];
    leaves.insert(leaves.end(), active[best->right].begin(), active[best->right].end());
    active.erase(best->left);
    active.erase(best->right);
    best->merged = next;
    best->size = leaves.size();
    active[next++] = leaves;
    out.push_back(*best);
  }
  return out;
}

Outcome hac_oracle() {
  Rng rng(8080);
  std::size_t ok = 0;
  for (int g = 0; g < 50; ++g) {
    const std::size_t n = 1 + rng.below(8);
    std::vector<Edge> edges;
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = a + 1; b < n; ++b)
        if (rng.below(2) == 0) edges.push_back({a, b, rng.uniform(0.05, 1.0)});
    Dendrogram d = hac(n, edges, Linkage::kAverage);
    auto want = brute_force_hac(n, edges);
    bool same = d.leaves == n && d.merges.size() == want.size();
    for (std::size_t i = 0; same && i < want.size(); ++i) {
      const Merge& m = d.merges[i];
      same = m.left == want[i].left && m.right == want[i].right && m.merged == want[i].merged &&
             m.size == want[i].size && std::abs(m.similarity - want[i].similarity) <= kHacSimTol;
    }
    ok += same;
  }
  return {ok == 50, fmt("%zu/50 random graphs match the brute-force dendrogram", ok)};
}

Outcome controlled_diversity() {
  // Two question groups with identical vectors inside each group.
  testing::VectorStore store(3);
  Dataset d;
  const std::vector<std::pair<std::string, std::string>> rows = {
      {"a0", "red fox runs"},   {"b0", "cat naps here"}, {"a1", "red fox sleeps"},
      {"b1", "cat naps here"},  {"a2", "blue fox runs"}, {"b2", "Dog Naps"},
  };
  for (const auto& [qid, text] : rows) {
    Case c;
    c.question = make_question(qid, "what is " + qid);
    c.passage = make_passage("p-" + qid, text);
    c.answers.push_back(make_answer_from_tokens(c.passage, {0, 1}));
    d.cases.push_back(c);
    store.question(qid, qid[0] == 'a' ? std::vector<double>{1, 0, 0} : std::vector<double>{0, 1, 0});
  }
  ImportedEncoder enc = store.encoder();
  RuleRecognizer ner;
  SimilarityGraph g = build_similarity_graph(d, enc, ner);
  FlatClustering fc = cut(hac(g), 0.9);
  auto div = cluster_diversity(fc, d);
  // a: {red, fox, runs, sleeps, blue} over 3; b: {cat, naps, here, dog} over 3.
  const std::vector<std::size_t> want_labels = {0, 1, 0, 1, 0, 1};
  const bool ok = fc.labels == want_labels && div.size() == 2 && div[0].unique_tokens == 5 &&
                  div[0].size == 3 && div[0].score == 5.0 / 3.0 && div[1].unique_tokens == 4 &&
                  div[1].size == 3 && div[1].score == 4.0 / 3.0;
  return {ok, fmt("%zu clusters, scores %.17g and %.17g (hand 5/3 and 4/3)", fc.clusters,
                  div.empty() ? -1.0 : div[0].score, div.size() < 2 ? -1.0 : div[1].score)};
}

Outcome bucket_report_and_refinement() {
  ToyRun& r = toy_run();
  const Dataset& tr = r.corpus.train;
  std::vector<std::string> ids;
  std::vector<EmbeddingVector> vecs;
  for (const auto& c : tr.cases) {
    ids.push_back(c.question.id);
    vecs.push_back(r.trained->encode_question(mask_question(c.question, *r.ner)));
  }
  SimilarityGraph g = build_similarity_graph(ids, vecs);
  auto edges = undirected_edges(g);
  Dendrogram dg = hac(tr.cases.size(), edges);
  CutThresholds th = compute_cut_thresholds(edges, 6);
  TestAssignment ta = assign_test(r.corpus.test, vecs, *r.trained, *r.ner);
  std::vector<FlatClustering> cuts;
  std::vector<TestClustering> tcs;
  for (double t : th.thresholds) {
    cuts.push_back(cut(dg, t));
    tcs.push_back(label_test(ta, cuts.back(), cluster_diversity(cuts.back(), tr)));
  }
  std::vector<std::map<std::string, double>> f1(2);
  for (const auto& s : r.after.instances) f1[0][s.question_id] = s.f1;
  for (const auto& s : r.before.instances) f1[1][s.question_id] = s.f1;
  BucketReport rep = bucket_report(tcs, {"trained", "untrained"}, f1, 8);

  // Each cut at a higher threshold refines every cut at a lower one.
  bool refines = std::is_sorted(th.thresholds.begin(), th.thresholds.end());
  for (std::size_t lo = 0; lo < cuts.size(); ++lo)
    for (std::size_t hi = lo + 1; hi < cuts.size(); ++hi) {
      std::map<std::size_t, std::size_t> coarse_of;
      for (std::size_t x = 0; x < tr.cases.size(); ++x) {
        auto [it, fresh] = coarse_of.emplace(cuts[hi].labels[x], cuts[lo].labels[x]);
        if (!fresh && it->second != cuts[lo].labels[x]) refines = false;
      }
      if (cuts[hi].clusters < cuts[lo].clusters) refines = false;
    }

  const bool shape = rep.per_clustering.size() == 6 && rep.buckets == 8 &&
                     rep.thresholds.size() == 6 && rep.averaged.size() == 8 &&
                     rep.min_max_diff.size() == 2 && rep.counts.size() == 6;
  const auto js = report_to_json(rep);
  std::string clusters;
  for (const auto& c : cuts) clusters += fmt(" %zu", c.clusters);
  return {shape && refines && js.contains("min_max_diff"),
          fmt("C=%zu clusterings, B=%zu buckets, min-max F1 diff trained %.2f untrained %.2f, "
              "clusters per cut:",
              rep.per_clustering.size(), rep.buckets,
              rep.min_max_diff.empty() ? -1.0 : rep.min_max_diff[0],
              rep.min_max_diff.size() < 2 ? -1.0 : rep.min_max_diff[1]) +
              clusters + (refines ? ", refinement holds" : ", refinement violated") +
              (th.padded ? " (thresholds padded)" : "")};
}

// ---- optional MRQA counts ----------------------------------------------------

std::optional<Outcome> mrqa_counts() {
  const char* dir = std::getenv("CBR_MRQA_DIR");
  if (!dir) return std::nullopt;
  const std::vector<std::pair<std::string, std::size_t>> want = {
      {"train/NaturalQuestionsShort.jsonl.gz", 104071}, {"dev/NaturalQuestionsShort.jsonl.gz", 12836},
      {"train/NewsQA.jsonl.gz", 74160},                 {"dev/NewsQA.jsonl.gz", 4212},
      {"dev/BioASQ.jsonl.gz", 1504},                    {"dev/RelationExtraction.jsonl.gz", 2948},
  };
  bool ok = true;
  std::string detail;
  for (const auto& [rel, n] : want) {
    const std::string path = std::string(dir) + "/" + rel;
    if (!std::filesystem::exists(path)) return std::nullopt;
    const std::size_t got = ingest_mrqa(path).dataset.cases.size();
    ok = ok && got == n;
    detail += fmt(" %s=%zu/%zu", rel.c_str(), got, n);
  }
  return Outcome{ok, "ingested" + detail};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient-oracle", gradient_oracle},
      {"loss-closed-forms", loss_closed_forms},
      {"reuse-oracle", reuse_oracle},
      {"retrieval-oracle", retrieval_oracle},
      {"masking-invariance", masking_invariance},
      {"candidate-completeness", candidate_completeness},
      {"metrics-hand-cases", metrics_hand_cases},
      {"toy-end-to-end", toy_end_to_end},
      {"few-shot-adaptation", few_shot},
      {"k-ablation", k_ablation},
      {"hac-oracle", hac_oracle},
      {"diversity-controlled", controlled_diversity},
      {"diversity-report", bucket_report_and_refinement},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    std::printf("%s %s: %s\n", o.ok ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
    failed += !o.ok;
  }
  if (auto m = mrqa_counts()) {
    std::printf("%s mrqa-counts: %s\n", m->ok ? "PASS" : "FAIL", m->detail.c_str());
    failed += !m->ok;
  } else {
    std::printf("SKIP mrqa-counts: set CBR_MRQA_DIR to an MRQA download (train/ and dev/)\n");
  }
  std::printf("%d criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
