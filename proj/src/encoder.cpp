#include "cbr/encoder.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <sstream>

#include <json.hpp>

#include "cbr/error.hpp"
#include "cbr/rng.hpp"
#include "io_util.hpp"

namespace cbr {

using json = nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "f32le files are read and written with native byte order");

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double l2_norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

double cosine(std::span<const double> a, std::span<const double> b) {
  double na = l2_norm(a);
  double nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}

std::vector<EmbeddingVector> EncoderBackend::encode_spans(
    const Passage& p, std::span<const TokenRange> spans) const {
  std::vector<EmbeddingVector> out;
  out.reserve(spans.size());
  for (const auto& s : spans) out.push_back(encode_span(p, s));
  return out;
}

// ---- toy encoder -----------------------------------------------------------

void validate(const ToyEncoderParams& p) {
  if (p.dim < 2) throw PreconditionError("toy encoder dim must be >= 2");
  if (p.vocab_buckets < 1) throw PreconditionError("toy encoder needs >= 1 bucket");
  if (!(p.self_weight > 0.0 && p.self_weight <= 1.0))
    throw PreconditionError("toy encoder self weight must lie in (0, 1]");
  if (p.table.size() != p.dim * p.vocab_buckets)
    throw PreconditionError("toy encoder table has wrong shape");
  for (double v : p.table)
    if (!std::isfinite(v)) throw PreconditionError("toy encoder table has non-finite entry");
}

ToyEncoderParams init_toy_params(std::size_t dim, std::size_t vocab_buckets,
                                 std::size_t context_window, double self_weight,
                                 std::uint64_t seed) {
  ToyEncoderParams p;
  p.dim = dim;
  p.vocab_buckets = vocab_buckets;
  p.context_window = context_window;
  p.self_weight = self_weight;
  p.table.assign(dim * vocab_buckets, 0.0);
  if (dim < 2 || vocab_buckets < 1) validate(p);
  const double bound = 0.5 / std::sqrt(static_cast<double>(dim));
  Rng rng(seed);
  for (auto& v : p.table) v = rng.uniform(-bound, bound);
  validate(p);
  return p;
}

std::size_t bucket_of(std::string_view token, std::size_t vocab_buckets) {
  return static_cast<std::size_t>(detail::fnv1a(token) % vocab_buckets);
}

namespace {

void add_weight(LinearForm& f, std::size_t row, double w) {
  f.push_back({row, w});
}

// Sorts by row and merges duplicates; weights of equal rows are added in
// their original order so the result is deterministic.
void canonicalize(LinearForm& f) {
  std::stable_sort(f.begin(), f.end(),
                   [](const RowWeight& a, const RowWeight& b) { return a.row < b.row; });
  std::size_t out = 0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (out > 0 && f[out - 1].row == f[i].row) {
      f[out - 1].weight += f[i].weight;
    } else {
      f[out++] = f[i];
    }
  }
  f.resize(out);
}

void append_token(LinearForm& f, std::span<const std::size_t> buckets, std::size_t i,
                  std::size_t window, double self_weight, double scale) {
  if (window == 0) {
    add_weight(f, buckets[i], scale);
    return;
  }
  add_weight(f, buckets[i], scale * self_weight);
  std::size_t lo = i >= window ? i - window : 0;
  std::size_t hi = std::min(buckets.size(), i + window + 1);
  std::size_t count = hi - lo - 1;
  if (count == 0) return;
  double w = scale * (1.0 - self_weight) / static_cast<double>(count);
  for (std::size_t j = lo; j < hi; ++j)
    if (j != i) add_weight(f, buckets[j], w);
}

}  // namespace

LinearForm token_form(std::span<const std::size_t> buckets, std::size_t i,
                      std::size_t window, double self_weight) {
  LinearForm f;
  append_token(f, buckets, i, window, self_weight, 1.0);
  canonicalize(f);
  return f;
}

LinearForm span_form(std::span<const std::size_t> buckets, TokenRange r,
                     std::size_t window, double self_weight) {
  if (r.start >= r.end || r.end > buckets.size())
    throw PreconditionError("span [" + std::to_string(r.start) + ", " +
                            std::to_string(r.end) + ") invalid for " +
                            std::to_string(buckets.size()) + " tokens");
  LinearForm f;
  const double scale = 1.0 / static_cast<double>(r.size());
  for (std::size_t i = r.start; i < r.end; ++i)
    append_token(f, buckets, i, window, self_weight, scale);
  canonicalize(f);
  return f;
}

EmbeddingVector apply_form(const LinearForm& f, const ToyEncoderParams& p) {
  EmbeddingVector v(p.dim, 0.0);
  for (const auto& [row, w] : f) {
    auto r = p.row(row);
    for (std::size_t k = 0; k < p.dim; ++k) v[k] += w * r[k];
  }
  return v;
}

ToyEncoder::ToyEncoder(ToyEncoderParams params) : params_(std::move(params)) {
  validate(params_);
}

std::string ToyEncoder::fingerprint() const {
  std::ostringstream cfg;
  cfg << "toy:" << params_.dim << ':' << params_.vocab_buckets << ':'
      << params_.context_window << ':' << params_.self_weight;
  std::uint64_t h = detail::fnv1a(cfg.str());
  h = detail::fnv1a(
      std::string_view(reinterpret_cast<const char*>(params_.table.data()),
                       params_.table.size() * sizeof(double)),
      h);
  return "toy-" + detail::hex64(h);
}

std::vector<std::size_t> ToyEncoder::buckets(const TokenSequence& tokens) const {
  std::vector<std::size_t> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(bucket_of(t.text, params_.vocab_buckets));
  return out;
}

EmbeddingVector ToyEncoder::encode_question(const MaskedQuestion& mq) const {
  if (mq.masked_tokens.empty())
    throw PreconditionError("cannot encode empty question " + mq.question_id);
  auto b = buckets(mq.masked_tokens);
  EmbeddingVector v = apply_form(
      span_form(b, {0, b.size()}, params_.context_window, params_.self_weight), params_);
  double n = l2_norm(v);
  if (n == 0.0) {
    EmbeddingVector e(params_.dim, 0.0);
    e[0] = 1.0;
    return e;
  }
  for (auto& x : v) x /= n;
  return v;
}

EmbeddingVector ToyEncoder::encode_span(const Passage& p, TokenRange span) const {
  if (span.start >= span.end || span.end > p.tokens.size())
    throw PreconditionError("span [" + std::to_string(span.start) + ", " +
                            std::to_string(span.end) + ") invalid for passage " + p.id);
  auto b = buckets(p.tokens);
  return apply_form(span_form(b, span, params_.context_window, params_.self_weight),
                    params_);
}

std::vector<EmbeddingVector> ToyEncoder::encode_spans(
    const Passage& p, std::span<const TokenRange> spans) const {
  auto b = buckets(p.tokens);
  std::vector<EmbeddingVector> out;
  out.reserve(spans.size());
  for (const auto& s : spans) {
    if (s.start >= s.end || s.end > p.tokens.size())
      throw PreconditionError("span [" + std::to_string(s.start) + ", " +
                              std::to_string(s.end) + ") invalid for passage " + p.id);
    out.push_back(apply_form(
        span_form(b, s, params_.context_window, params_.self_weight), params_));
  }
  return out;
}

std::vector<EmbeddingVector> ToyEncoder::encode_passage_tokens(const Passage& p) const {
  auto b = buckets(p.tokens);
  std::vector<EmbeddingVector> out;
  out.reserve(b.size());
  for (std::size_t i = 0; i < b.size(); ++i)
    out.push_back(apply_form(
        token_form(b, i, params_.context_window, params_.self_weight), params_));
  return out;
}

namespace {

std::string stem(const std::string& manifest_path) {
  const std::string ext = ".json";
  if (manifest_path.size() > ext.size() &&
      manifest_path.compare(manifest_path.size() - ext.size(), ext.size(), ext) == 0)
    return manifest_path.substr(0, manifest_path.size() - ext.size());
  return manifest_path;
}

std::string base_name(const std::string& path) {
  auto slash = path.find_last_of('/');
  return slash == std::string::npos ? path : path.substr(slash + 1);
}

json read_json(const std::string& path) {
  std::string text = detail::read_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError("invalid JSON in " + path + ": " + e.what(),
                      static_cast<long long>(e.byte));
  }
}

}  // namespace

void save_checkpoint(const ToyEncoderParams& p, const std::string& manifest_path) {
  validate(p);
  const std::string table_path = stem(manifest_path) + ".table.f32";
  json m{{"kind", "toy-encoder"},
         {"dim", p.dim},
         {"vocab_buckets", p.vocab_buckets},
         {"context_window", p.context_window},
         {"self_weight", p.self_weight},
         {"dtype", "f32le"},
         {"table", base_name(table_path)}};
  std::vector<float> f(p.table.begin(), p.table.end());
  detail::write_file(table_path,
                     std::string_view(reinterpret_cast<const char*>(f.data()),
                                      f.size() * sizeof(float)));
  detail::write_file(manifest_path, m.dump(2) + "\n");
}

ToyEncoderParams load_checkpoint(const std::string& manifest_path) {
  json m = read_json(manifest_path);
  ToyEncoderParams p;
  try {
    if (m.at("kind") != "toy-encoder") throw FormatError("not a toy-encoder checkpoint");
    if (m.at("dtype") != "f32le") throw FormatError("unsupported checkpoint dtype");
    p.dim = m.at("dim").get<std::size_t>();
    p.vocab_buckets = m.at("vocab_buckets").get<std::size_t>();
    p.context_window = m.at("context_window").get<std::size_t>();
    p.self_weight = m.at("self_weight").get<double>();
  } catch (const json::exception& e) {
    throw FormatError("bad checkpoint manifest " + manifest_path + ": " + e.what());
  }
  const std::string table_path =
      detail::join_path(detail::parent_dir(manifest_path), m.at("table").get<std::string>());
  std::string bytes = detail::read_file(table_path);
  const std::size_t expected = p.dim * p.vocab_buckets * sizeof(float);
  if (bytes.size() != expected)
    throw FormatError("checkpoint table " + table_path + " has " +
                          std::to_string(bytes.size()) + " bytes, expected " +
                          std::to_string(expected),
                      static_cast<long long>(std::min(bytes.size(), expected)));
  std::vector<float> f(p.dim * p.vocab_buckets);
  std::memcpy(f.data(), bytes.data(), expected);
  p.table.assign(f.begin(), f.end());
  validate(p);
  return p;
}

// ---- embedding files -------------------------------------------------------

std::string EmbeddingKey::describe() const {
  if (kind == KeyKind::kQuestion) return "question " + id;
  return "span (" + id + ", " + std::to_string(start) + ", " + std::to_string(end) + ")";
}

void write_embedding_file(const EmbeddingFile& f, const std::string& manifest_path) {
  const std::string base = stem(manifest_path);
  const std::string vec_path = base + ".vectors.f32";
  const std::string key_path = base + ".keys.tsv";
  std::string vec_bytes;
  vec_bytes.reserve(f.rows.size() * f.dim * sizeof(float));
  std::ostringstream keys;
  for (const auto& r : f.rows) {
    if (r.values.size() != f.dim)
      throw PreconditionError("embedding row for " + r.key.describe() + " has dim " +
                              std::to_string(r.values.size()) + ", expected " +
                              std::to_string(f.dim));
    if (r.key.id.find_first_of("\t\n") != std::string::npos)
      throw PreconditionError("embedding key id contains a tab or newline: " + r.key.id);
    vec_bytes.append(reinterpret_cast<const char*>(r.values.data()),
                     r.values.size() * sizeof(float));
    if (r.key.kind == KeyKind::kQuestion) {
      keys << "question\t" << r.key.id << "\t\t\n";
    } else {
      keys << "span\t" << r.key.id << '\t' << r.key.start << '\t' << r.key.end << '\n';
    }
  }
  json m{{"dim", f.dim},
         {"count", f.rows.size()},
         {"dtype", "f32le"},
         {"vectors", base_name(vec_path)},
         {"keys", base_name(key_path)}};
  if (!f.fingerprint.empty()) m["fingerprint"] = f.fingerprint;
  detail::write_file(vec_path, vec_bytes);
  detail::write_file(key_path, keys.str());
  detail::write_file(manifest_path, m.dump(2) + "\n");
}

namespace {

EmbeddingKey parse_key(std::string_view line, long long line_no) {
  std::vector<std::string> fields;
  std::size_t pos = 0;
  while (true) {
    auto tab = line.find('\t', pos);
    fields.emplace_back(line.substr(pos, tab - pos));
    if (tab == std::string_view::npos) break;
    pos = tab + 1;
  }
  if (fields.size() != 4) throw FormatError("keys line needs 4 tab-separated fields", line_no);
  if (fields[0] == "question") return EmbeddingKey::question(fields[1]);
  if (fields[0] != "span") throw FormatError("unknown key kind '" + fields[0] + "'", line_no);
  try {
    std::size_t s = std::stoull(fields[2]);
    std::size_t e = std::stoull(fields[3]);
    if (s >= e) throw FormatError("span key with start >= end", line_no);
    return EmbeddingKey::span(fields[1], s, e);
  } catch (const std::logic_error&) {
    throw FormatError("span key with non-numeric offsets", line_no);
  }
}

}  // namespace

EmbeddingFile read_embedding_file(const std::string& manifest_path) {
  json m = read_json(manifest_path);
  EmbeddingFile f;
  std::size_t count = 0;
  std::string vec_name, key_name;
  try {
    f.dim = m.at("dim").get<std::size_t>();
    count = m.at("count").get<std::size_t>();
    if (m.at("dtype") != "f32le") throw FormatError("unsupported dtype in " + manifest_path);
    vec_name = m.at("vectors").get<std::string>();
    key_name = m.at("keys").get<std::string>();
    f.fingerprint = m.value("fingerprint", "");
  } catch (const json::exception& e) {
    throw FormatError("bad embedding manifest " + manifest_path + ": " + e.what());
  }
  if (f.dim == 0) throw FormatError("embedding manifest dim must be positive");
  const std::string dir = detail::parent_dir(manifest_path);
  std::string bytes = detail::read_file(detail::join_path(dir, vec_name));
  const std::size_t row_bytes = f.dim * sizeof(float);
  if (bytes.size() != count * row_bytes) {
    throw FormatError("vectors file holds " + std::to_string(bytes.size()) +
                          " bytes; manifest dim " + std::to_string(f.dim) + " x count " +
                          std::to_string(count) + " needs " +
                          std::to_string(count * row_bytes),
                      static_cast<long long>(std::min(bytes.size(), count * row_bytes)));
  }
  if (f.fingerprint.empty())
    f.fingerprint = "imported-" + detail::hex64(detail::fnv1a(bytes));
  f.rows.reserve(count);
  detail::for_each_line(detail::join_path(dir, key_name),
                        [&](std::string_view line, std::size_t no) {
                          if (f.rows.size() >= count)
                            throw FormatError("keys file has more lines than count",
                                              static_cast<long long>(no));
                          EmbeddingRow r;
                          r.key = parse_key(line, static_cast<long long>(no));
                          r.values.resize(f.dim);
                          std::memcpy(r.values.data(), bytes.data() + f.rows.size() * row_bytes,
                                      row_bytes);
                          f.rows.push_back(std::move(r));
                          return true;
                        });
  if (f.rows.size() != count)
    throw FormatError("keys file has " + std::to_string(f.rows.size()) + " lines, manifest count " +
                      std::to_string(count));
  return f;
}

ImportedEncoder::ImportedEncoder(EmbeddingFile file)
    : dim_(file.dim), fingerprint_(std::move(file.fingerprint)) {
  rows_.reserve(file.rows.size());
  for (auto& r : file.rows) {
    if (r.values.size() != dim_)
      throw FormatError("row for " + r.key.describe() + " does not match manifest dim");
    if (!index_.emplace(r.key, rows_.size()).second)
      throw FormatError("duplicate embedding key " + r.key.describe());
    rows_.push_back(std::move(r.values));
  }
}

ImportedEncoder ImportedEncoder::load(const std::string& manifest_path) {
  return ImportedEncoder(read_embedding_file(manifest_path));
}

EmbeddingVector ImportedEncoder::lookup(const EmbeddingKey& key) const {
  auto it = index_.find(key);
  if (it == index_.end()) throw LookupError("no embedding for " + key.describe());
  const auto& r = rows_[it->second];
  return EmbeddingVector(r.begin(), r.end());
}

EmbeddingVector ImportedEncoder::encode_question(const MaskedQuestion& mq) const {
  // Exported question vectors are unit norm up to f32 rounding; renormalize
  // so cosine retrieval sees exact unit vectors.
  EmbeddingVector v = lookup(EmbeddingKey::question(mq.question_id));
  double n = l2_norm(v);
  if (n == 0.0) throw FormatError("zero question vector for " + mq.question_id);
  for (auto& x : v) x /= n;
  return v;
}

EmbeddingVector ImportedEncoder::encode_span(const Passage& p, TokenRange span) const {
  return lookup(EmbeddingKey::span(p.id, span.start, span.end));
}

}  // namespace cbr
