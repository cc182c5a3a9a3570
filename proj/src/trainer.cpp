#include "cbr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "cbr/error.hpp"
#include "cbr/rng.hpp"
#include "cbr/spanner.hpp"

namespace cbr {

void TrainConfig::validate() const {
  if (!(tau > 0.0)) throw PreconditionError("temperature must be positive");
  if (!(lr >= 0.0)) throw PreconditionError("learning rate must be non-negative");
  if (k < 1) throw PreconditionError("k must be >= 1");
  if (batch_size < 1) throw PreconditionError("batch size must be >= 1");
  if (grad_clip && !(*grad_clip > 0.0)) throw PreconditionError("grad clip must be positive");
}

RetrievalConfig training_retrieval(const TrainConfig& cfg, const std::string& qid) {
  RetrievalConfig r = RetrievalConfig::training(cfg.k, qid, cfg.sim_threshold);
  r.use_wh_filter = cfg.use_wh_filter;
  return r;
}

namespace {

double log_sum_exp(std::span<const double> xs) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : xs) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

}  // namespace

SoftNnTerms soft_nn_loss(std::span<const double> best_sims,
                         const std::vector<bool>& positive, double tau) {
  if (!(tau > 0.0)) throw PreconditionError("temperature must be positive");
  if (positive.size() != best_sims.size())
    throw PreconditionError("positive mask does not match spans");
  std::vector<double> pos, neg;
  for (std::size_t s = 0; s < best_sims.size(); ++s)
    (positive[s] ? pos : neg).push_back(best_sims[s] / tau);
  if (pos.empty()) throw PreconditionError("soft nearest-neighbor loss needs a gold span");

  SoftNnTerms out;
  auto& r = out.report;
  r.n_positives = pos.size();
  r.n_candidates = best_sims.size();
  r.positive_term = log_sum_exp(pos);
  r.value = neg.empty() ? 0.0 : softplus(log_sum_exp(neg) - r.positive_term);
  r.partition_term = r.positive_term + r.value;

  // dL/dm_s = softmax over all spans - softmax over gold spans (gold only).
  out.dvalue_dsim.resize(best_sims.size());
  for (std::size_t s = 0; s < best_sims.size(); ++s) {
    const double m = best_sims[s] / tau;
    double d = std::exp(m - r.partition_term);
    if (positive[s]) d -= std::exp(m - r.positive_term);
    out.dvalue_dsim[s] = d / tau;
  }
  return out;
}

double SparseGradient::norm() const {
  double s = 0.0;
  for (const auto& [row, g] : rows)
    for (double v : g) s += v * v;
  return std::sqrt(s);
}

void SparseGradient::scale(double f) {
  for (auto& [row, g] : rows)
    for (double& v : g) v *= f;
}

void SparseGradient::add(const SparseGradient& other) {
  for (const auto& [row, g] : other.rows) {
    auto& dst = rows[row];
    if (dst.empty()) dst.assign(g.size(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
  }
}

double SparseGradient::max_abs() const {
  double m = 0.0;
  for (const auto& [row, g] : rows)
    for (double v : g) m = std::max(m, std::abs(v));
  return m;
}

namespace {

// Spans of the instance and retrieved answers as linear forms over the
// table, with the best-matching answer of every span.
struct Geometry {
  std::vector<LinearForm> span_forms;
  std::vector<EmbeddingVector> span_vecs;
  std::vector<bool> positive;
  std::vector<LinearForm> answer_forms;  // flattened over cases
  std::vector<EmbeddingVector> answer_vecs;
  std::vector<double> best_sim;
  std::vector<std::size_t> best_answer;
};

std::vector<std::size_t> buckets_of(const TokenSequence& toks, std::size_t v) {
  std::vector<std::size_t> out;
  out.reserve(toks.size());
  for (const auto& t : toks) out.push_back(bucket_of(t.text, v));
  return out;
}

Geometry build_geometry(const Case& instance, const std::vector<const Case*>& retrieved,
                        const ToyEncoderParams& params, const EntityRecognizer& ner,
                        Similarity sim) {
  Geometry g;
  const std::size_t w = params.context_window;
  const double alpha = params.self_weight;

  std::set<TokenRange> gold;
  for (const auto& a : instance.answers) gold.insert(a.tokens());
  std::set<TokenRange> spans(gold);
  for (const auto& c : generate_candidates(instance.passage, ner)) spans.insert(c.tokens());

  const auto inst_b = buckets_of(instance.passage.tokens, params.vocab_buckets);
  for (const auto& r : spans) {
    g.span_forms.push_back(span_form(inst_b, r, w, alpha));
    g.span_vecs.push_back(apply_form(g.span_forms.back(), params));
    g.positive.push_back(gold.count(r) > 0);
  }
  for (const Case* c : retrieved) {
    const auto b = buckets_of(c->passage.tokens, params.vocab_buckets);
    for (const auto& a : c->answers) {
      g.answer_forms.push_back(span_form(b, a.tokens(), w, alpha));
      g.answer_vecs.push_back(apply_form(g.answer_forms.back(), params));
    }
  }
  g.best_sim.resize(g.span_vecs.size());
  g.best_answer.resize(g.span_vecs.size());
  for (std::size_t s = 0; s < g.span_vecs.size(); ++s) {
    double best = -std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t a = 0; a < g.answer_vecs.size(); ++a) {
      double v = similarity(g.span_vecs[s], g.answer_vecs[a], sim);
      if (v > best) {
        best = v;
        arg = a;
      }
    }
    g.best_sim[s] = best;
    g.best_answer[s] = arg;
  }
  return g;
}

void accumulate(SparseGradient& grad, const LinearForm& form, std::span<const double> dir,
                double scale) {
  for (const auto& [row, w] : form) {
    auto& dst = grad.rows[row];
    if (dst.empty()) dst.assign(dir.size(), 0.0);
    for (std::size_t k = 0; k < dir.size(); ++k) dst[k] += scale * w * dir[k];
  }
}

bool has_answers(const std::vector<const Case*>& retrieved) {
  return std::any_of(retrieved.begin(), retrieved.end(),
                     [](const Case* c) { return !c->answers.empty(); });
}

LossReport skipped_report() {
  LossReport r;
  r.skipped = true;
  return r;
}

}  // namespace

LossReport compute_loss(const Case& instance, const std::vector<const Case*>& retrieved,
                        const ToyEncoderParams& params, double tau,
                        const EntityRecognizer& ner, Similarity sim) {
  if (!has_answers(retrieved)) return skipped_report();
  Geometry g = build_geometry(instance, retrieved, params, ner, sim);
  return soft_nn_loss(g.best_sim, g.positive, tau).report;
}

LossAndGradient compute_gradient(const Case& instance,
                                 const std::vector<const Case*>& retrieved,
                                 const ToyEncoderParams& params, double tau,
                                 const EntityRecognizer& ner, Similarity sim) {
  LossAndGradient out;
  if (!has_answers(retrieved)) {
    out.report = skipped_report();
    return out;
  }
  Geometry g = build_geometry(instance, retrieved, params, ner, sim);
  SoftNnTerms terms = soft_nn_loss(g.best_sim, g.positive, tau);
  out.report = terms.report;

  std::vector<double> dir(params.dim);
  for (std::size_t s = 0; s < g.span_vecs.size(); ++s) {
    const double c = terms.dvalue_dsim[s];
    if (c == 0.0) continue;
    const auto& v = g.span_vecs[s];
    const auto& u = g.answer_vecs[g.best_answer[s]];
    const auto& uform = g.answer_forms[g.best_answer[s]];
    if (sim == Similarity::kDot) {
      accumulate(out.gradient, g.span_forms[s], u, c);
      accumulate(out.gradient, uform, v, c);
      continue;
    }
    const double nv = l2_norm(v);
    const double nu = l2_norm(u);
    if (nv == 0.0 || nu == 0.0) continue;
    const double cs = dot(v, u) / (nv * nu);
    // d cos / dv = u / (|v||u|) - cos v / |v|^2, symmetric in u.
    for (std::size_t k = 0; k < params.dim; ++k) dir[k] = u[k] / (nv * nu) - cs * v[k] / (nv * nv);
    accumulate(out.gradient, g.span_forms[s], dir, c);
    for (std::size_t k = 0; k < params.dim; ++k) dir[k] = v[k] / (nv * nu) - cs * u[k] / (nu * nu);
    accumulate(out.gradient, uform, dir, c);
  }
  return out;
}

void apply_gradient(ToyEncoderParams& params, const SparseGradient& g, double lr) {
  if (lr == 0.0) return;
  for (const auto& [row, d] : g.rows) {
    auto r = params.row(row);
    for (std::size_t k = 0; k < params.dim; ++k) r[k] -= lr * d[k];
  }
}

TrainResult train(const Dataset& dataset, Casebase& cb, ToyEncoder& encoder,
                  const EntityRecognizer& ner, const TrainConfig& cfg,
                  const std::function<void(const EpochStats&)>& on_epoch) {
  cfg.validate();
  if (dataset.cases.empty()) throw PreconditionError("cannot train on an empty dataset");
  std::vector<std::size_t> entry_of(dataset.cases.size());
  for (std::size_t i = 0; i < dataset.cases.size(); ++i) {
    auto e = cb.find(dataset.cases[i].question.id);
    if (!e)
      throw PreconditionError("training case " + dataset.cases[i].question.id +
                              " is not in the casebase");
    entry_of[i] = *e;
  }

  Rng rng(cfg.seed);
  std::vector<std::size_t> order(dataset.cases.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainResult result;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (cfg.shuffle) rng.shuffle(order);
    EpochStats stats;
    stats.epoch = epoch;
    stats.lr = cfg.lr;
    stats.instances = order.size();
    double loss_sum = 0.0;
    SparseGradient batch;
    std::size_t in_batch = 0;
    auto flush = [&] {
      if (in_batch == 0) return;
      batch.scale(1.0 / static_cast<double>(in_batch));
      if (cfg.grad_clip) {
        const double n = batch.norm();
        if (n > *cfg.grad_clip) batch.scale(*cfg.grad_clip / n);
      }
      apply_gradient(encoder.mutable_params(), batch, cfg.lr);
      batch.rows.clear();
      in_batch = 0;
    };
    for (std::size_t i : order) {
      const Case& inst = dataset.cases[i];
      const CaseEntry& self = cb.entry(entry_of[i]);
      auto hits = cb.retrieve(self.question_vec, self.wh, training_retrieval(cfg, inst.question.id));
      std::vector<const Case*> retrieved;
      retrieved.reserve(hits.size());
      for (const auto& h : hits) retrieved.push_back(&h.entry->case_data);
      LossAndGradient lg =
          compute_gradient(inst, retrieved, encoder.params(), cfg.tau, ner, cfg.similarity);
      if (lg.report.skipped) {
        ++stats.skipped;
        continue;
      }
      loss_sum += lg.report.value;
      batch.add(lg.gradient);
      if (++in_batch == cfg.batch_size) flush();
    }
    flush();
    stats.mean_loss = loss_sum / static_cast<double>(order.size());
    cb.refresh(encoder, ner);
    result.trace.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  return result;
}

// ---- finite-difference oracle ---------------------------------------------

namespace {

const std::vector<std::string>& check_words() {
  static const std::vector<std::string> words = {
      "alpha", "beta", "gamma", "delta", "river", "stone", "north", "field",
      "glass", "cloud", "ember", "maple", "quartz", "harbor"};
  return words;
}

Case random_case(Rng& rng, const std::string& id, std::size_t max_tokens) {
  const std::size_t n = 2 + rng.below(max_tokens - 1);
  std::string text;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) text += ' ';
    text += rng.pick(check_words());
  }
  Case c;
  c.question = make_question(id, "what is it ?");
  c.passage = make_passage("p-" + id, text);
  const std::size_t answers = 1 + rng.below(2);
  std::set<TokenRange> used;
  for (std::size_t a = 0; a < answers; ++a) {
    std::size_t len = 1 + rng.below(std::min<std::size_t>(2, n));
    std::size_t start = rng.below(n - len + 1);
    if (!used.insert({start, start + len}).second) continue;
    c.answers.push_back(make_answer_from_tokens(c.passage, {start, start + len}));
  }
  return c;
}

// True when some span's best answer is within `margin` of a different
// answer (one with another linear form, so the two can separate).
bool near_tie(const Geometry& g, Similarity sim, double margin) {
  for (std::size_t s = 0; s < g.span_vecs.size(); ++s) {
    const auto& best_form = g.answer_forms[g.best_answer[s]];
    for (std::size_t a = 0; a < g.answer_vecs.size(); ++a) {
      if (a == g.best_answer[s]) continue;
      const auto& f = g.answer_forms[a];
      const bool same = f.size() == best_form.size() &&
                        std::equal(f.begin(), f.end(), best_form.begin(),
                                   [](const RowWeight& x, const RowWeight& y) {
                                     return x.row == y.row && x.weight == y.weight;
                                   });
      if (same) continue;
      if (g.best_sim[s] - similarity(g.span_vecs[s], g.answer_vecs[a], sim) < margin)
        return true;
    }
  }
  return false;
}

}  // namespace

GradCheckReport finite_difference_check(std::size_t n_instances, std::uint64_t seed,
                                        bool include_cosine) {
  constexpr double kEps = 1e-4;
  constexpr double kTiny = 1e-8;
  constexpr double kTieMargin = 1e-3;
  constexpr std::size_t kMaxDraws = 1000;
  Rng rng(seed);
  RuleRecognizer ner;
  GradCheckReport rep;
  for (std::size_t n = 0; n < n_instances; ++n) {
    const Similarity sim =
        include_cosine && n % 2 == 1 ? Similarity::kCosine : Similarity::kDot;
    ToyEncoderParams params;
    double tau = 1.0;
    Case inst;
    std::vector<Case> cases;
    std::size_t draws = 0;
    while (true) {
      const std::size_t window = rng.below(3);
      const double alpha = rng.uniform(0.3, 1.0);
      params = init_toy_params(4, 32, window, alpha, seed * 7919 + n * kMaxDraws + draws);
      tau = rng.uniform(0.5, 2.0);
      inst = random_case(rng, "t" + std::to_string(n), 10);
      cases.clear();
      const std::size_t k = 1 + rng.below(3);
      for (std::size_t j = 0; j < k; ++j)
        cases.push_back(random_case(rng, "r" + std::to_string(n) + "_" + std::to_string(j), 10));
      std::vector<const Case*> ptrs;
      for (const auto& c : cases) ptrs.push_back(&c);
      if (!near_tie(build_geometry(inst, ptrs, params, ner, sim), sim, kTieMargin)) break;
      ++rep.redrawn_near_ties;
      if (++draws == kMaxDraws)
        throw PreconditionError("could not draw a gradient-check instance without near ties");
    }
    std::vector<const Case*> retrieved;
    for (const auto& c : cases) retrieved.push_back(&c);

    LossAndGradient lg = compute_gradient(inst, retrieved, params, tau, ner, sim);
    ++rep.instances;
    if (lg.report.value == 0.0) ++rep.zero_loss_instances;

    // Every row a span or answer form touches.
    std::set<std::size_t> rows;
    auto touch = [&](const Case& c, const std::vector<TokenRange>& ranges) {
      auto b = buckets_of(c.passage.tokens, params.vocab_buckets);
      for (const auto& r : ranges)
        for (const auto& rw : span_form(b, r, params.context_window, params.self_weight))
          rows.insert(rw.row);
    };
    std::vector<TokenRange> all;
    for (const auto& c : generate_candidates(inst.passage, ner)) all.push_back(c.tokens());
    for (const auto& a : inst.answers) all.push_back(a.tokens());
    touch(inst, all);
    for (const auto& c : cases) {
      std::vector<TokenRange> ans;
      for (const auto& a : c.answers) ans.push_back(a.tokens());
      touch(c, ans);
    }

    for (std::size_t row : rows) {
      for (std::size_t d = 0; d < params.dim; ++d) {
        double& x = params.table[row * params.dim + d];
        const double saved = x;
        x = saved + kEps;
        const double up = compute_loss(inst, retrieved, params, tau, ner, sim).value;
        x = saved - kEps;
        const double down = compute_loss(inst, retrieved, params, tau, ner, sim).value;
        x = saved;
        const double numeric = (up - down) / (2.0 * kEps);
        auto it = lg.gradient.rows.find(row);
        const double analytic = it == lg.gradient.rows.end() ? 0.0 : it->second[d];
        if (std::abs(analytic) > kTiny) {
          ++rep.entries_checked;
          const double rel = std::abs(analytic - numeric) /
                             std::max(std::abs(analytic), std::abs(numeric));
          rep.max_relative_error = std::max(rep.max_relative_error, rel);
        } else {
          rep.max_abs_error_small =
              std::max(rep.max_abs_error_small, std::abs(analytic - numeric));
        }
      }
    }
  }
  return rep;
}

}  // namespace cbr
