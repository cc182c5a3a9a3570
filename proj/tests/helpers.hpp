#pragma once

// Small utilities shared by the test programs.

#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cbr/corpus.hpp"
#include "cbr/encoder.hpp"
#include "cbr/rng.hpp"

namespace testing {

inline std::string fixture(const std::string& name) {
  return std::string(CBR_FIXTURE_DIR) + "/" + name;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("cbr-test-" + tag + "-" + std::to_string(::getpid()) + "-" +
             std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string str() const { return path_.string(); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline void spit(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

// Lowercase letters only, so the rule recognizer never fires on it.
inline std::string random_word(cbr::Rng& rng) {
  // No "e": keeps cardinal number words out of the vocabulary.
  static const std::string letters = "abdgiklmnoprstuvz";
  std::string w;
  const std::size_t n = 2 + rng.below(5);
  for (std::size_t i = 0; i < n; ++i) w += letters[rng.below(letters.size())];
  return w;
}

inline std::string random_text(cbr::Rng& rng, std::size_t words) {
  std::string s;
  for (std::size_t i = 0; i < words; ++i) {
    if (i) s += ' ';
    s += random_word(rng);
  }
  return s;
}

inline std::vector<double> random_vector(cbr::Rng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

// Collects rows for an in-memory imported backend.
class VectorStore {
 public:
  explicit VectorStore(std::size_t dim) { file_.dim = dim; file_.fingerprint = "test-store"; }

  void question(const std::string& qid, const std::vector<double>& v) {
    add(cbr::EmbeddingKey::question(qid), v);
  }
  void span(const std::string& pid, std::size_t s, std::size_t e, const std::vector<double>& v) {
    add(cbr::EmbeddingKey::span(pid, s, e), v);
  }
  const cbr::EmbeddingFile& file() const { return file_; }
  cbr::ImportedEncoder encoder() const { return cbr::ImportedEncoder(file_); }

 private:
  void add(cbr::EmbeddingKey k, const std::vector<double>& v) {
    file_.rows.push_back({std::move(k), std::vector<float>(v.begin(), v.end())});
  }
  cbr::EmbeddingFile file_;
};

// The f32 value a stored double comes back as.
inline std::vector<double> as_stored(const std::vector<double>& v) {
  std::vector<double> out;
  for (double x : v) out.push_back(static_cast<double>(static_cast<float>(x)));
  return out;
}


// Random cases served by an imported backend. Question vectors sit around a
// few shared directions with varying noise, so cosines spread across
// [0.8, 1]; all words are lowercase so no entities are recognized.
struct RandomCases {
  cbr::Dataset dataset;
  VectorStore store;
  std::vector<std::vector<double>> question_vecs;  // as stored (f32)
  std::vector<std::vector<std::vector<double>>> answer_vecs;
  explicit RandomCases(std::size_t dim) : store(dim) {}
};

inline RandomCases random_cases(cbr::Rng& rng, std::size_t n, std::size_t dim,
                                const std::string& prefix = "c",
                                std::size_t max_answers = 3) {
  static const std::vector<std::string> wh = {"who", "what", "when", "where"};
  RandomCases out(dim);
  std::vector<std::vector<double>> centers;
  for (int i = 0; i < 3; ++i) centers.push_back(random_vector(rng, dim));
  for (std::size_t i = 0; i < n; ++i) {
    const std::string qid = prefix + std::to_string(i);
    cbr::Case c;
    c.question = cbr::make_question(qid, rng.pick(wh) + " " + random_text(rng, 3));
    const std::size_t words = 5 + rng.below(8);
    c.passage = cbr::make_passage("p-" + qid, random_text(rng, words));
    const std::size_t answers = 1 + rng.below(max_answers);
    std::vector<cbr::TokenRange> used;
    for (std::size_t a = 0; a < answers; ++a) {
      std::size_t s = rng.below(words);
      std::size_t e = std::min(words, s + 1 + rng.below(3));
      cbr::TokenRange r{s, e};
      if (std::find(used.begin(), used.end(), r) != used.end()) continue;
      used.push_back(r);
      c.answers.push_back(cbr::make_answer_from_tokens(c.passage, r));
    }
    const auto& center = centers[rng.below(centers.size())];
    const double noise = rng.uniform(0.0, 0.5);
    std::vector<double> q(dim);
    for (std::size_t k = 0; k < dim; ++k) q[k] = center[k] + noise * rng.uniform(-1.0, 1.0);
    out.store.question(qid, q);
    out.question_vecs.push_back(as_stored(q));
    std::vector<std::vector<double>> avs;
    for (const auto& a : c.answers) {
      auto v = random_vector(rng, dim);
      out.store.span(c.passage.id, a.token_start, a.token_end, v);
      avs.push_back(as_stored(v));
    }
    out.answer_vecs.push_back(avs);
    out.dataset.cases.push_back(std::move(c));
  }
  return out;
}

}  // namespace testing
