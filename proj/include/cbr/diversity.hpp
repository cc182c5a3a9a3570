#pragma once

// Lexical-diversity analysis: a sparse similarity graph over masked
// training questions, average-linkage HAC, flat cuts at k-means thresholds,
// per-cluster diversity, test assignment and bucketed F1 reports.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cbr/corpus.hpp"
#include "cbr/encoder.hpp"
#include "cbr/textproc.hpp"

namespace cbr {

struct Neighbor {
  std::size_t node = 0;
  double score = 0.0;
};

struct GraphConfig {
  std::size_t max_neighbors = 20;
  double lower_bound = 0.9;
  std::size_t jobs = 1;
};

// Per-node neighbor lists (score descending, then node ascending). The
// lists are directed; undirected_edges applies the symmetric closure.
struct SimilarityGraph {
  std::vector<std::string> ids;
  std::vector<std::vector<Neighbor>> neighbors;

  std::size_t size() const { return ids.size(); }
};

// `vecs` must be unit norm (dot product is the cosine).
SimilarityGraph build_similarity_graph(const std::vector<std::string>& ids,
                                       const std::vector<EmbeddingVector>& vecs,
                                       const GraphConfig& cfg = {});
SimilarityGraph build_similarity_graph(const Dataset& train, const EncoderBackend& backend,
                                       const EntityRecognizer& ner,
                                       const GraphConfig& cfg = {});

struct Edge {
  std::size_t a = 0;  // a < b
  std::size_t b = 0;
  double sim = 0.0;
};

// Symmetric closure: an edge exists when either endpoint lists the other.
// Sorted by (a, b).
std::vector<Edge> undirected_edges(const SimilarityGraph& g);

enum class Linkage { kAverage, kSingle, kComplete };

std::string_view to_string(Linkage l);
Linkage parse_linkage(std::string_view s);

struct Merge {
  std::size_t left = 0;    // smaller cluster id
  std::size_t right = 0;
  std::size_t merged = 0;  // n, n+1, ...
  double similarity = 0.0;
  std::size_t size = 0;
};

struct Dendrogram {
  std::size_t leaves = 0;
  std::vector<Merge> merges;  // n - 1 merges when n > 0
};

// Agglomerates until one cluster remains. Missing pairs have similarity 0;
// edge weights must be non-negative. Ties go to the smallest (left, right)
// cluster id pair.
Dendrogram hac(std::size_t n, const std::vector<Edge>& edges,
               Linkage linkage = Linkage::kAverage);
Dendrogram hac(const SimilarityGraph& g, Linkage linkage = Linkage::kAverage);

// Lloyd's algorithm on the line. Seeds are the sorted values at quantiles
// (j + 0.5) / k; points go to the nearest centroid, lower index on ties;
// an empty cluster keeps its centroid. Centroids come back ascending.
std::vector<double> kmeans_1d(const std::vector<double>& values, std::size_t k,
                              std::size_t max_iter = 100);
// Index of the nearest centroid, lower index on ties.
std::size_t nearest_centroid(const std::vector<double>& centroids, double v);

struct CutThresholds {
  std::vector<double> thresholds;  // ascending, size C
  bool padded = false;             // fewer than C distinct edge scores
};

CutThresholds compute_cut_thresholds(const std::vector<Edge>& edges, std::size_t c);

struct FlatClustering {
  double threshold = 0.0;
  std::size_t tightness = 0;
  std::vector<std::size_t> labels;  // per node; dense ids by first appearance
  std::size_t clusters = 0;
};

// Applies merges in order while their similarity is >= threshold.
FlatClustering cut(const Dendrogram& d, double threshold);

struct ClusterDiversity {
  std::size_t cluster = 0;
  std::size_t unique_tokens = 0;
  std::size_t size = 0;
  double score = 0.0;
};

// Unique lowercased passage tokens across the cluster's members divided by
// the member count. `passages[i]` is node i's passage.
std::vector<ClusterDiversity> cluster_diversity(const FlatClustering& clustering,
                                                const std::vector<const Passage*>& passages);
std::vector<ClusterDiversity> cluster_diversity(const FlatClustering& clustering,
                                                const Dataset& train);

// Indices of the first occurrence of each unique (question, answers,
// passage) triple.
std::vector<std::size_t> unique_triples(const Dataset& d);

// Nearest train vector by dot product per test vector; lower index on ties.
// Throws PreconditionError when the train side is empty.
std::vector<std::size_t> nearest_train(const std::vector<EmbeddingVector>& test_vecs,
                                       const std::vector<EmbeddingVector>& train_vecs);

struct TestAssignment {
  std::vector<std::string> question_ids;  // unique test triples, dataset order
  std::vector<std::size_t> nearest;       // train node per question
  std::size_t duplicates_dropped = 0;
};

TestAssignment assign_test(const Dataset& test, const std::vector<EmbeddingVector>& train_vecs,
                           const EncoderBackend& backend, const EntityRecognizer& ner);

// One test clustering: the assigned cluster and its diversity per question.
struct TestClustering {
  double threshold = 0.0;
  std::vector<std::string> question_ids;
  std::vector<std::size_t> clusters;
  std::vector<double> diversity;
  // Diversity score of every train cluster (bucketing uses all of them).
  std::vector<double> cluster_scores;
};

TestClustering label_test(const TestAssignment& a, const FlatClustering& train_clustering,
                          const std::vector<ClusterDiversity>& div);

struct BucketReport {
  std::size_t buckets = 0;
  std::vector<double> centroids;  // bucket diversity centroids, ascending
  std::vector<std::string> systems;
  std::vector<double> thresholds;
  // [clustering][bucket][system] mean F1 x 100; nullopt when empty.
  std::vector<std::vector<std::vector<std::optional<double>>>> per_clustering;
  // [bucket][system] mean over clusterings with data.
  std::vector<std::vector<std::optional<double>>> averaged;
  // [bucket][system - 1] mean over clusterings of F1(reference) - F1(system);
  // the reference is systems[0].
  std::vector<std::vector<std::optional<double>>> difference;
  std::vector<double> min_max_diff;  // per system, on `averaged`
  // [clustering][bucket] test questions in the bucket.
  std::vector<std::vector<std::size_t>> counts;
};

// `f1[s]` maps question id to F1 in [0, 1] for systems[s]. Questions absent
// from a system's map count as F1 0.
BucketReport bucket_report(const std::vector<TestClustering>& clusterings,
                           const std::vector<std::string>& systems,
                           const std::vector<std::map<std::string, double>>& f1,
                           std::size_t b = 8);

nlohmann::json report_to_json(const BucketReport& r);
// Absolute F1 per clustering, one row per (clustering, bucket).
std::string per_clustering_csv(const BucketReport& r);
// Averaged absolute series and reference-minus-system differences.
std::string averaged_csv(const BucketReport& r);

// Published min-max F1 differences, attached to reports for comparison.
struct ReferenceAnnotation {
  double cbr = 4.10;
  double blanc = 15.38;
  double made = 11.80;
};

}  // namespace cbr
