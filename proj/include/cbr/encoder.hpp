#pragma once

// Encoder backends: a trainable hash-bucket toy encoder and a backend that
// serves vectors exported by an external model.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "cbr/corpus.hpp"
#include "cbr/textproc.hpp"

namespace cbr {

using EmbeddingVector = std::vector<double>;

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> v);
double cosine(std::span<const double> a, std::span<const double> b);

class EncoderBackend {
 public:
  virtual ~EncoderBackend() = default;

  virtual std::size_t dim() const = 0;
  virtual bool trainable() const = 0;
  // Identifies the parameters; casebases refuse to mix fingerprints.
  virtual std::string fingerprint() const = 0;

  // Unit-norm question embedding.
  virtual EmbeddingVector encode_question(const MaskedQuestion& mq) const = 0;
  // Unnormalized contextual span embedding.
  virtual EmbeddingVector encode_span(const Passage& p, TokenRange span) const = 0;
  virtual std::vector<EmbeddingVector> encode_spans(
      const Passage& p, std::span<const TokenRange> spans) const;
};

struct ToyEncoderParams {
  std::size_t dim = 64;
  std::size_t vocab_buckets = std::size_t{1} << 15;
  std::size_t context_window = 2;
  double self_weight = 0.7;
  std::vector<double> table;  // vocab_buckets x dim, row-major

  std::span<double> row(std::size_t r) { return {table.data() + r * dim, dim}; }
  std::span<const double> row(std::size_t r) const {
    return {table.data() + r * dim, dim};
  }
  bool operator==(const ToyEncoderParams&) const = default;
};

// Throws PreconditionError when sizes or values are invalid.
void validate(const ToyEncoderParams& p);

// Table entries uniform in [-0.5/sqrt(d), 0.5/sqrt(d)].
ToyEncoderParams init_toy_params(std::size_t dim, std::size_t vocab_buckets,
                                 std::size_t context_window, double self_weight,
                                 std::uint64_t seed);

std::size_t bucket_of(std::string_view token, std::size_t vocab_buckets);

// A vector expressed as a weighted sum of table rows. Rows are unique and
// ascending.
struct RowWeight {
  std::size_t row;
  double weight;
};
using LinearForm = std::vector<RowWeight>;

// Contextual vector of token `i` over the bucket sequence. With window 0
// there is no mixing and the vector is the token's own row; otherwise
// self_weight * own row + (1 - self_weight) * mean of the rows within
// `window` positions (excluding i, clipped at the ends).
LinearForm token_form(std::span<const std::size_t> buckets, std::size_t i,
                      std::size_t window, double self_weight);
// Mean of the token forms over the range.
LinearForm span_form(std::span<const std::size_t> buckets, TokenRange r,
                     std::size_t window, double self_weight);
EmbeddingVector apply_form(const LinearForm& f, const ToyEncoderParams& p);

class ToyEncoder : public EncoderBackend {
 public:
  explicit ToyEncoder(ToyEncoderParams params);

  std::size_t dim() const override { return params_.dim; }
  bool trainable() const override { return true; }
  std::string fingerprint() const override;

  EmbeddingVector encode_question(const MaskedQuestion& mq) const override;
  EmbeddingVector encode_span(const Passage& p, TokenRange span) const override;
  std::vector<EmbeddingVector> encode_spans(
      const Passage& p, std::span<const TokenRange> spans) const override;

  std::vector<EmbeddingVector> encode_passage_tokens(const Passage& p) const;
  std::vector<std::size_t> buckets(const TokenSequence& tokens) const;

  const ToyEncoderParams& params() const { return params_; }
  // Exclusive access for the trainer.
  ToyEncoderParams& mutable_params() { return params_; }

 private:
  ToyEncoderParams params_;
};

// Checkpoint: JSON manifest plus a little-endian f32 table file next to it.
void save_checkpoint(const ToyEncoderParams& p, const std::string& manifest_path);
ToyEncoderParams load_checkpoint(const std::string& manifest_path);

// ---- embedding files -------------------------------------------------------

enum class KeyKind { kQuestion, kSpan };

struct EmbeddingKey {
  KeyKind kind = KeyKind::kQuestion;
  std::string id;  // question id or passage id
  std::size_t start = 0;
  std::size_t end = 0;

  static EmbeddingKey question(std::string qid) {
    return {KeyKind::kQuestion, std::move(qid), 0, 0};
  }
  static EmbeddingKey span(std::string pid, std::size_t s, std::size_t e) {
    return {KeyKind::kSpan, std::move(pid), s, e};
  }
  std::string describe() const;
  auto operator<=>(const EmbeddingKey&) const = default;
};

struct EmbeddingRow {
  EmbeddingKey key;
  std::vector<float> values;
};

struct EmbeddingFile {
  std::size_t dim = 0;
  std::string fingerprint;
  std::vector<EmbeddingRow> rows;
};

// Writes the manifest at `manifest_path` plus `<stem>.vectors.f32` and
// `<stem>.keys.tsv` beside it. Output bytes depend only on the input.
void write_embedding_file(const EmbeddingFile& f, const std::string& manifest_path);
EmbeddingFile read_embedding_file(const std::string& manifest_path);

class ImportedEncoder : public EncoderBackend {
 public:
  explicit ImportedEncoder(EmbeddingFile file);
  static ImportedEncoder load(const std::string& manifest_path);

  std::size_t dim() const override { return dim_; }
  bool trainable() const override { return false; }
  std::string fingerprint() const override { return fingerprint_; }

  // Lookups by question id / (passage id, token span); LookupError if absent.
  EmbeddingVector encode_question(const MaskedQuestion& mq) const override;
  EmbeddingVector encode_span(const Passage& p, TokenRange span) const override;

  EmbeddingVector lookup(const EmbeddingKey& key) const;
  std::size_t size() const { return rows_.size(); }

 private:
  std::size_t dim_;
  std::string fingerprint_;
  std::map<EmbeddingKey, std::size_t> index_;
  std::vector<std::vector<float>> rows_;
};

}  // namespace cbr
