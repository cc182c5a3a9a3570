#include "cbr/diversity.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>
#include <unordered_map>
#include <unordered_set>

#include "cbr/error.hpp"

namespace cbr {

namespace {

void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  for (std::size_t j = 0; j < jobs; ++j)
    pool.emplace_back([&, j] {
      for (std::size_t i = j; i < n; i += jobs) fn(i);
    });
  for (auto& t : pool) t.join();
}

std::string lower_ascii(std::string s) {
  for (auto& c : s)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return s;
}

// Pairwise statistics between two clusters over existing edges.
struct PairStats {
  double sum = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::size_t count = 0;

  void add(const PairStats& o) {
    if (count == 0) {
      *this = o;
      return;
    }
    sum += o.sum;
    min = std::min(min, o.min);
    max = std::max(max, o.max);
    count += o.count;
  }
};

double linkage_value(const PairStats& s, std::size_t na, std::size_t nb, Linkage l) {
  switch (l) {
    case Linkage::kAverage:
      return s.sum / (static_cast<double>(na) * static_cast<double>(nb));
    case Linkage::kSingle:
      return s.count ? s.max : 0.0;
    case Linkage::kComplete:
      return s.count == na * nb ? s.min : 0.0;
  }
  return 0.0;
}

}  // namespace

SimilarityGraph build_similarity_graph(const std::vector<std::string>& ids,
                                       const std::vector<EmbeddingVector>& vecs,
                                       const GraphConfig& cfg) {
  if (ids.size() != vecs.size()) throw PreconditionError("ids and vectors differ in length");
  SimilarityGraph g;
  g.ids = ids;
  g.neighbors.resize(ids.size());
  parallel_for(ids.size(), cfg.jobs, [&](std::size_t i) {
    std::vector<Neighbor> cand;
    for (std::size_t j = 0; j < vecs.size(); ++j) {
      if (j == i) continue;
      // Clamp rounding noise so identical questions score exactly 1.
      double s = std::min(1.0, dot(vecs[i], vecs[j]));
      if (s >= cfg.lower_bound) cand.push_back({j, s});
    }
    auto cmp = [](const Neighbor& a, const Neighbor& b) {
      return a.score != b.score ? a.score > b.score : a.node < b.node;
    };
    if (cand.size() > cfg.max_neighbors) {
      std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(cfg.max_neighbors),
                        cand.end(), cmp);
      cand.resize(cfg.max_neighbors);
    } else {
      std::sort(cand.begin(), cand.end(), cmp);
    }
    g.neighbors[i] = std::move(cand);
  });
  return g;
}

SimilarityGraph build_similarity_graph(const Dataset& train, const EncoderBackend& backend,
                                       const EntityRecognizer& ner, const GraphConfig& cfg) {
  std::vector<std::string> ids;
  std::vector<EmbeddingVector> vecs(train.cases.size());
  for (const auto& c : train.cases) ids.push_back(c.question.id);
  parallel_for(train.cases.size(), cfg.jobs, [&](std::size_t i) {
    vecs[i] = backend.encode_question(mask_question(train.cases[i].question, ner));
  });
  return build_similarity_graph(ids, vecs, cfg);
}

std::vector<Edge> undirected_edges(const SimilarityGraph& g) {
  std::map<std::pair<std::size_t, std::size_t>, double> m;
  for (std::size_t i = 0; i < g.neighbors.size(); ++i)
    for (const auto& nb : g.neighbors[i]) {
      auto key = std::minmax(i, nb.node);
      auto [it, fresh] = m.emplace(key, nb.score);
      if (!fresh) it->second = std::max(it->second, nb.score);
    }
  std::vector<Edge> out;
  out.reserve(m.size());
  for (const auto& [k, s] : m) out.push_back({k.first, k.second, s});
  return out;
}

std::string_view to_string(Linkage l) {
  switch (l) {
    case Linkage::kAverage: return "average";
    case Linkage::kSingle: return "single";
    case Linkage::kComplete: return "complete";
  }
  return "?";
}

Linkage parse_linkage(std::string_view s) {
  if (s == "average") return Linkage::kAverage;
  if (s == "single") return Linkage::kSingle;
  if (s == "complete") return Linkage::kComplete;
  throw ValidationError("unknown linkage: " + std::string(s));
}

Dendrogram hac(std::size_t n, const std::vector<Edge>& edges, Linkage linkage) {
  Dendrogram d;
  d.leaves = n;
  if (n == 0) return d;

  std::vector<std::unordered_map<std::size_t, PairStats>> adj(2 * n - 1);
  std::vector<std::size_t> size(2 * n - 1, 0);
  std::set<std::size_t> active;
  for (std::size_t i = 0; i < n; ++i) {
    size[i] = 1;
    active.insert(i);
  }
  for (const auto& e : edges) {
    if (e.a >= n || e.b >= n || e.a == e.b)
      throw PreconditionError("edge endpoints out of range");
    if (!(e.sim >= 0.0)) throw PreconditionError("edge weights must be non-negative");
    PairStats s{e.sim, e.sim, e.sim, 1};
    adj[e.a][e.b].add(s);
    adj[e.b][e.a].add(s);
  }

  // Ordered by similarity descending, then (left, right) ascending.
  using Key = std::tuple<double, std::size_t, std::size_t>;
  std::set<Key> heap;
  auto key_of = [&](std::size_t a, std::size_t b) {
    if (a > b) std::swap(a, b);
    double v = linkage_value(adj[a].at(b), size[a], size[b], linkage);
    return Key{-v, a, b};
  };
  for (std::size_t a = 0; a < n; ++a)
    for (const auto& [b, s] : adj[a])
      if (a < b) heap.insert(key_of(a, b));

  for (std::size_t step = 0; step + 1 < n; ++step) {
    std::size_t a, b;
    double sim;
    if (!heap.empty() && -std::get<0>(*heap.begin()) > 0.0) {
      std::tie(sim, a, b) = *heap.begin();
      sim = -sim;
    } else {
      // Every remaining pair sits at similarity 0; take the smallest ids.
      auto it = active.begin();
      a = *it++;
      b = *it;
      sim = 0.0;
    }
    const std::size_t m = n + step;
    for (std::size_t x : {a, b})
      for (const auto& [y, s] : adj[x]) heap.erase(key_of(x, y));
    size[m] = size[a] + size[b];
    for (std::size_t x : {a, b}) {
      for (const auto& [y, s] : adj[x]) {
        if (y == a || y == b) continue;
        adj[m][y].add(s);
        adj[y].erase(x);
      }
      adj[x].clear();
      active.erase(x);
    }
    for (const auto& [y, s] : adj[m]) adj[y][m] = s;
    for (const auto& [y, s] : adj[m]) heap.insert(key_of(m, y));
    active.insert(m);
    d.merges.push_back({a, b, m, sim, size[m]});
  }
  return d;
}

Dendrogram hac(const SimilarityGraph& g, Linkage linkage) {
  return hac(g.size(), undirected_edges(g), linkage);
}

std::size_t nearest_centroid(const std::vector<double>& centroids, double v) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < centroids.size(); ++j)
    if (std::abs(v - centroids[j]) < std::abs(v - centroids[best])) best = j;
  return best;
}

std::vector<double> kmeans_1d(const std::vector<double>& values, std::size_t k,
                              std::size_t max_iter) {
  if (k == 0) throw PreconditionError("k-means needs k >= 1");
  if (values.empty()) throw PreconditionError("k-means over no values");
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  std::vector<double> c(k);
  for (std::size_t j = 0; j < k; ++j) {
    auto idx = static_cast<std::size_t>((static_cast<double>(j) + 0.5) / static_cast<double>(k) *
                                        static_cast<double>(n));
    c[j] = sorted[std::min(idx, n - 1)];
  }
  std::vector<std::size_t> assign(n, k);
  for (std::size_t it = 0; it < max_iter; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t a = nearest_centroid(c, sorted[i]);
      if (a != assign[i]) {
        assign[i] = a;
        changed = true;
      }
    }
    if (!changed) break;
    std::vector<long double> sum(k, 0.0L);
    std::vector<std::size_t> cnt(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sum[assign[i]] += sorted[i];
      ++cnt[assign[i]];
    }
    for (std::size_t j = 0; j < k; ++j)
      if (cnt[j]) c[j] = static_cast<double>(sum[j] / static_cast<long double>(cnt[j]));
  }
  std::sort(c.begin(), c.end());
  return c;
}

CutThresholds compute_cut_thresholds(const std::vector<Edge>& edges, std::size_t c) {
  if (c == 0) throw PreconditionError("need at least one threshold");
  CutThresholds out;
  std::vector<double> values;
  values.reserve(edges.size());
  for (const auto& e : edges) values.push_back(e.sim);
  std::vector<double> distinct = values;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() < c) {
    out.padded = true;
    out.thresholds = distinct;
    if (out.thresholds.empty()) out.thresholds.push_back(1.0);
    while (out.thresholds.size() < c) out.thresholds.push_back(out.thresholds.back());
    return out;
  }
  out.thresholds = kmeans_1d(values, c);
  return out;
}

FlatClustering cut(const Dendrogram& d, double threshold) {
  const std::size_t n = d.leaves;
  std::vector<std::size_t> parent(n == 0 ? 0 : 2 * n - 1);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& m : d.merges) {
    if (m.similarity < threshold) break;
    parent[find(m.left)] = m.merged;
    parent[find(m.right)] = m.merged;
  }
  FlatClustering fc;
  fc.threshold = threshold;
  fc.labels.resize(n);
  std::unordered_map<std::size_t, std::size_t> dense;
  for (std::size_t i = 0; i < n; ++i) {
    auto [it, fresh] = dense.emplace(find(i), dense.size());
    fc.labels[i] = it->second;
  }
  fc.clusters = dense.size();
  return fc;
}

std::vector<ClusterDiversity> cluster_diversity(const FlatClustering& clustering,
                                                const std::vector<const Passage*>& passages) {
  if (passages.size() != clustering.labels.size())
    throw PreconditionError("clustering and passages differ in length");
  std::vector<std::unordered_set<std::string>> vocab(clustering.clusters);
  std::vector<ClusterDiversity> out(clustering.clusters);
  for (std::size_t i = 0; i < passages.size(); ++i) {
    const std::size_t c = clustering.labels[i];
    ++out[c].size;
    for (const auto& t : passages[i]->tokens) vocab[c].insert(lower_ascii(t.text));
  }
  for (std::size_t c = 0; c < out.size(); ++c) {
    out[c].cluster = c;
    out[c].unique_tokens = vocab[c].size();
    out[c].score = out[c].size ? static_cast<double>(out[c].unique_tokens) /
                                     static_cast<double>(out[c].size)
                               : 0.0;
  }
  return out;
}

std::vector<ClusterDiversity> cluster_diversity(const FlatClustering& clustering,
                                                const Dataset& train) {
  std::vector<const Passage*> ps;
  for (const auto& c : train.cases) ps.push_back(&c.passage);
  return cluster_diversity(clustering, ps);
}

std::vector<std::size_t> unique_triples(const Dataset& d) {
  std::set<std::tuple<std::string, std::vector<std::string>, std::string>> seen;
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < d.cases.size(); ++i) {
    const Case& c = d.cases[i];
    std::vector<std::string> answers;
    for (const auto& a : c.answers) answers.push_back(a.text);
    std::sort(answers.begin(), answers.end());
    answers.erase(std::unique(answers.begin(), answers.end()), answers.end());
    if (seen.emplace(c.question.text, std::move(answers), c.passage.text).second)
      keep.push_back(i);
  }
  return keep;
}

std::vector<std::size_t> nearest_train(const std::vector<EmbeddingVector>& test_vecs,
                                       const std::vector<EmbeddingVector>& train_vecs) {
  if (train_vecs.empty()) throw PreconditionError("no train questions to assign to");
  std::vector<std::size_t> out;
  out.reserve(test_vecs.size());
  for (const auto& q : test_vecs) {
    std::size_t best = 0;
    double best_s = dot(q, train_vecs[0]);
    for (std::size_t j = 1; j < train_vecs.size(); ++j) {
      double s = dot(q, train_vecs[j]);
      if (s > best_s) {
        best_s = s;
        best = j;
      }
    }
    out.push_back(best);
  }
  return out;
}

TestAssignment assign_test(const Dataset& test, const std::vector<EmbeddingVector>& train_vecs,
                           const EncoderBackend& backend, const EntityRecognizer& ner) {
  if (train_vecs.empty()) throw PreconditionError("no train questions to assign to");
  TestAssignment a;
  std::vector<std::size_t> keep = unique_triples(test);
  a.duplicates_dropped = test.cases.size() - keep.size();
  std::vector<EmbeddingVector> vecs;
  for (std::size_t i : keep) {
    a.question_ids.push_back(test.cases[i].question.id);
    vecs.push_back(backend.encode_question(mask_question(test.cases[i].question, ner)));
  }
  a.nearest = nearest_train(vecs, train_vecs);
  return a;
}

TestClustering label_test(const TestAssignment& a, const FlatClustering& train_clustering,
                          const std::vector<ClusterDiversity>& div) {
  TestClustering t;
  t.threshold = train_clustering.threshold;
  t.question_ids = a.question_ids;
  for (std::size_t i = 0; i < a.nearest.size(); ++i) {
    std::size_t c = train_clustering.labels.at(a.nearest[i]);
    t.clusters.push_back(c);
    t.diversity.push_back(div.at(c).score);
  }
  for (const auto& d : div) t.cluster_scores.push_back(d.score);
  return t;
}

BucketReport bucket_report(const std::vector<TestClustering>& clusterings,
                           const std::vector<std::string>& systems,
                           const std::vector<std::map<std::string, double>>& f1,
                           std::size_t b) {
  if (systems.size() != f1.size()) throw PreconditionError("one F1 map per system required");
  if (systems.empty()) throw PreconditionError("no systems to report");
  if (b == 0) throw PreconditionError("need at least one bucket");
  BucketReport r;
  r.buckets = b;
  r.systems = systems;
  const std::size_t ns = systems.size();

  std::vector<double> scores;
  for (const auto& tc : clusterings) {
    r.thresholds.push_back(tc.threshold);
    scores.insert(scores.end(), tc.cluster_scores.begin(), tc.cluster_scores.end());
  }
  if (scores.empty()) scores.push_back(0.0);
  r.centroids = kmeans_1d(scores, b);

  using Row = std::vector<std::optional<double>>;
  for (const auto& tc : clusterings) {
    std::vector<std::vector<long double>> sum(b, std::vector<long double>(ns, 0.0L));
    std::vector<std::size_t> cnt(b, 0);
    for (std::size_t i = 0; i < tc.question_ids.size(); ++i) {
      const std::size_t bk = nearest_centroid(r.centroids, tc.diversity[i]);
      ++cnt[bk];
      for (std::size_t s = 0; s < ns; ++s) {
        auto it = f1[s].find(tc.question_ids[i]);
        sum[bk][s] += it == f1[s].end() ? 0.0L : static_cast<long double>(it->second);
      }
    }
    std::vector<Row> table(b, Row(ns));
    for (std::size_t bk = 0; bk < b; ++bk)
      if (cnt[bk])
        for (std::size_t s = 0; s < ns; ++s)
          table[bk][s] = static_cast<double>(100.0L * sum[bk][s] / static_cast<long double>(cnt[bk]));
    r.per_clustering.push_back(std::move(table));
    r.counts.push_back(std::move(cnt));
  }

  r.averaged.assign(b, Row(ns));
  r.difference.assign(b, Row(ns > 0 ? ns - 1 : 0));
  for (std::size_t bk = 0; bk < b; ++bk) {
    for (std::size_t s = 0; s < ns; ++s) {
      long double sum = 0, dsum = 0;
      std::size_t n = 0;
      for (const auto& table : r.per_clustering) {
        if (!table[bk][s]) continue;
        sum += *table[bk][s];
        dsum += *table[bk][0] - *table[bk][s];
        ++n;
      }
      if (n == 0) continue;
      r.averaged[bk][s] = static_cast<double>(sum / static_cast<long double>(n));
      if (s > 0) r.difference[bk][s - 1] = static_cast<double>(dsum / static_cast<long double>(n));
    }
  }
  for (std::size_t s = 0; s < ns; ++s) {
    std::optional<double> lo, hi;
    for (std::size_t bk = 0; bk < b; ++bk) {
      const auto& v = r.averaged[bk][s];
      if (!v) continue;
      lo = lo ? std::min(*lo, *v) : *v;
      hi = hi ? std::max(*hi, *v) : *v;
    }
    r.min_max_diff.push_back(lo ? *hi - *lo : 0.0);
  }
  return r;
}

namespace {

nlohmann::json opt_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::string opt_csv(const std::optional<double>& v) {
  if (!v) return "";
  std::ostringstream os;
  os.precision(10);
  os << *v;
  return os.str();
}

}  // namespace

nlohmann::json report_to_json(const BucketReport& r) {
  using nlohmann::json;
  json j;
  j["buckets"] = r.buckets;
  j["systems"] = r.systems;
  j["thresholds"] = r.thresholds;
  j["bucket_centroids"] = r.centroids;
  json per = json::array();
  for (std::size_t c = 0; c < r.per_clustering.size(); ++c) {
    json rows = json::array();
    for (std::size_t bk = 0; bk < r.buckets; ++bk) {
      json row = {{"bucket", bk}, {"diversity", r.centroids[bk]}, {"questions", r.counts[c][bk]}};
      json f = json::object();
      for (std::size_t s = 0; s < r.systems.size(); ++s)
        f[r.systems[s]] = opt_json(r.per_clustering[c][bk][s]);
      row["f1"] = f;
      rows.push_back(row);
    }
    per.push_back({{"clustering", c}, {"threshold", r.thresholds[c]}, {"rows", rows}});
  }
  j["per_clustering"] = per;
  json avg = json::array();
  for (std::size_t bk = 0; bk < r.buckets; ++bk) {
    json f = json::object(), d = json::object();
    for (std::size_t s = 0; s < r.systems.size(); ++s) {
      f[r.systems[s]] = opt_json(r.averaged[bk][s]);
      if (s > 0) d[r.systems[s]] = opt_json(r.difference[bk][s - 1]);
    }
    avg.push_back({{"bucket", bk}, {"diversity", r.centroids[bk]}, {"f1", f},
                   {"reference_minus_system", d}});
  }
  j["averaged"] = avg;
  j["reference_system"] = r.systems.front();
  json mm = json::object();
  for (std::size_t s = 0; s < r.systems.size(); ++s) mm[r.systems[s]] = r.min_max_diff[s];
  j["min_max_diff"] = mm;
  ReferenceAnnotation ref;
  j["published_min_max_diff"] = {{"cbr-mrc", ref.cbr}, {"blanc", ref.blanc}, {"made", ref.made}};
  return j;
}

std::string per_clustering_csv(const BucketReport& r) {
  std::ostringstream os;
  os.precision(10);
  os << "clustering,threshold,bucket,diversity,questions";
  for (const auto& s : r.systems) os << ',' << s;
  os << '\n';
  for (std::size_t c = 0; c < r.per_clustering.size(); ++c)
    for (std::size_t bk = 0; bk < r.buckets; ++bk) {
      os << c << ',' << r.thresholds[c] << ',' << bk << ',' << r.centroids[bk] << ','
         << r.counts[c][bk];
      for (std::size_t s = 0; s < r.systems.size(); ++s)
        os << ',' << opt_csv(r.per_clustering[c][bk][s]);
      os << '\n';
    }
  return os.str();
}

std::string averaged_csv(const BucketReport& r) {
  std::ostringstream os;
  os.precision(10);
  os << "bucket,diversity";
  for (const auto& s : r.systems) os << ",f1_" << s;
  for (std::size_t s = 1; s < r.systems.size(); ++s) os << ",diff_" << r.systems[s];
  os << '\n';
  for (std::size_t bk = 0; bk < r.buckets; ++bk) {
    os << bk << ',' << r.centroids[bk];
    for (std::size_t s = 0; s < r.systems.size(); ++s) os << ',' << opt_csv(r.averaged[bk][s]);
    for (std::size_t s = 1; s < r.systems.size(); ++s)
      os << ',' << opt_csv(r.difference[bk][s - 1]);
    os << '\n';
  }
  return os.str();
}

}  // namespace cbr
