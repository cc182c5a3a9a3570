#include "cbr/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "cbr/error.hpp"
#include "corpus_io.hpp"
#include "io_util.hpp"

namespace cbr {

using json = nlohmann::json;

namespace {

constexpr std::string_view kMask = "[MASK]";

bool is_space(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
         c == '\v';
}

// Multi-byte punctuation the tokenizer peels like ASCII punctuation.
constexpr std::string_view kUtf8Punct[] = {
    "“", "”", "‘", "’", "–", "—",
    "…", "«", "»", "¿", "¡",
};

// Length of the punctuation character at text[pos], 0 if not punctuation.
std::size_t punct_len(std::string_view text, std::size_t pos) {
  unsigned char c = static_cast<unsigned char>(text[pos]);
  if (c < 0x80) return std::ispunct(c) ? 1 : 0;
  for (auto p : kUtf8Punct) {
    if (text.substr(pos, p.size()) == p) return p.size();
  }
  return 0;
}

// Length of the punctuation character ending at text[end-1], 0 if none.
std::size_t punct_len_before(std::string_view text, std::size_t begin,
                             std::size_t end) {
  unsigned char c = static_cast<unsigned char>(text[end - 1]);
  if (c < 0x80) return std::ispunct(c) ? 1 : 0;
  for (auto p : kUtf8Punct) {
    if (end - begin >= p.size() && text.substr(end - p.size(), p.size()) == p)
      return p.size();
  }
  return 0;
}

void emit(std::string_view text, std::size_t b, std::size_t e,
          TokenSequence& out) {
  out.push_back(Token{std::string(text.substr(b, e - b)), b, e});
}

// Peels punctuation from both ends of [b, e) and emits the pieces.
void split_segment(std::string_view text, std::size_t b, std::size_t e,
                   TokenSequence& out) {
  while (b < e) {
    std::size_t n = punct_len(text, b);
    if (n == 0) break;
    emit(text, b, b + n, out);
    b += n;
  }
  std::vector<std::pair<std::size_t, std::size_t>> trailing;
  while (e > b) {
    std::size_t n = punct_len_before(text, b, e);
    if (n == 0) break;
    trailing.emplace_back(e - n, e);
    e -= n;
  }
  if (b < e) emit(text, b, e, out);
  for (auto it = trailing.rbegin(); it != trailing.rend(); ++it)
    emit(text, it->first, it->second, out);
}

void split_chunk(std::string_view text, std::size_t b, std::size_t e,
                 TokenSequence& out) {
  while (b < e) {
    auto pos = text.substr(b, e - b).find(kMask);
    if (pos == std::string_view::npos) {
      split_segment(text, b, e, out);
      return;
    }
    split_segment(text, b, b + pos, out);
    emit(text, b + pos, b + pos + kMask.size(), out);
    b += pos + kMask.size();
  }
}

}  // namespace

TokenSequence tokenize(std::string_view text) {
  TokenSequence out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t start = i;
    while (i < text.size() && !is_space(static_cast<unsigned char>(text[i]))) ++i;
    if (start < i) split_chunk(text, start, i, out);
  }
  return out;
}

Passage make_passage(std::string id, std::string text) {
  Passage p{std::move(id), std::move(text), {}};
  p.tokens = tokenize(p.text);
  return p;
}

Question make_question(std::string id, std::string text) {
  Question q{std::move(id), std::move(text), {}};
  q.tokens = tokenize(q.text);
  return q;
}

AnswerSpan make_answer(const Passage& p, std::size_t char_start,
                       std::size_t char_end) {
  if (char_start >= char_end || char_end > p.text.size()) {
    throw ValidationError("answer offsets [" + std::to_string(char_start) +
                          ", " + std::to_string(char_end) +
                          ") out of bounds for passage " + p.id);
  }
  const auto& toks = p.tokens;
  auto first = std::find_if(toks.begin(), toks.end(), [&](const Token& t) {
    return t.char_end > char_start;
  });
  if (first == toks.end() || first->char_start >= char_end) {
    throw ValidationError("answer offsets [" + std::to_string(char_start) +
                          ", " + std::to_string(char_end) +
                          ") cover no token in passage " + p.id);
  }
  auto last = first;
  while (last != toks.end() && last->char_start < char_end) ++last;
  AnswerSpan a;
  a.token_start = static_cast<std::size_t>(first - toks.begin());
  a.token_end = static_cast<std::size_t>(last - toks.begin());
  a.char_start = char_start;
  a.char_end = char_end;
  a.text = p.text.substr(char_start, char_end - char_start);
  return a;
}

AnswerSpan make_answer_from_tokens(const Passage& p, TokenRange r) {
  if (r.start >= r.end || r.end > p.tokens.size()) {
    throw ValidationError("token range [" + std::to_string(r.start) + ", " +
                          std::to_string(r.end) + ") invalid for passage " +
                          p.id);
  }
  std::size_t cs = p.tokens[r.start].char_start;
  std::size_t ce = p.tokens[r.end - 1].char_end;
  return AnswerSpan{r.start, r.end, cs, ce, p.text.substr(cs, ce - cs)};
}

void validate_case(const Case& c) {
  if (c.question.text.empty())
    throw ValidationError("question " + c.question.id + " has empty text");
  if (c.answers.empty())
    throw ValidationError("question " + c.question.id + " has no answers");
  const auto& p = c.passage;
  for (const auto& a : c.answers) {
    if (a.char_start >= a.char_end || a.char_end > p.text.size() ||
        a.token_start >= a.token_end || a.token_end > p.tokens.size()) {
      throw ValidationError("answer of " + c.question.id + " out of bounds");
    }
    if (p.text.compare(a.char_start, a.char_end - a.char_start, a.text) != 0) {
      throw ValidationError("answer text of " + c.question.id +
                            " does not match passage slice");
    }
    // The token range must be the minimal cover of the byte range.
    if (p.tokens[a.token_start].char_end <= a.char_start ||
        p.tokens[a.token_end - 1].char_start >= a.char_end ||
        (a.token_start > 0 &&
         p.tokens[a.token_start - 1].char_end > a.char_start) ||
        (a.token_end < p.tokens.size() &&
         p.tokens[a.token_end].char_start < a.char_end)) {
      throw ValidationError("answer of " + c.question.id +
                            " has token offsets disagreeing with characters");
    }
  }
}

namespace {

// Byte offset of every code point boundary; entry i is the byte offset of
// code point i, with a final entry for text.size().
std::vector<std::size_t> codepoint_offsets(std::string_view text) {
  std::vector<std::size_t> out;
  out.reserve(text.size() + 1);
  std::size_t i = 0;
  while (i < text.size()) {
    out.push_back(i);
    i += detail::utf8_length(static_cast<unsigned char>(text[i]));
  }
  out.push_back(text.size());
  return out;
}

struct MrqaLine {
  Passage passage;
  std::vector<Case> cases;
};

MrqaLine parse_mrqa_line(const json& rec, const std::string& passage_id) {
  if (!rec.contains("context") || !rec["context"].is_string())
    throw ValidationError("record has no context string");
  MrqaLine out;
  out.passage = make_passage(passage_id, rec["context"].get<std::string>());
  const auto cps = codepoint_offsets(out.passage.text);
  if (!rec.contains("qas") || !rec["qas"].is_array())
    throw ValidationError("record has no qas array");
  for (const auto& qa : rec["qas"]) {
    std::string qid = qa.at("qid").get<std::string>();
    Case c;
    c.question = make_question(qid, qa.at("question").get<std::string>());
    c.passage = out.passage;
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (const auto& det : qa.at("detected_answers")) {
      const std::string text = det.at("text").get<std::string>();
      for (const auto& span : det.at("char_spans")) {
        auto s = span.at(0).get<long long>();
        auto e_incl = span.at(1).get<long long>();
        if (s < 0 || e_incl < s ||
            static_cast<std::size_t>(e_incl) + 1 >= cps.size()) {
          throw ValidationError("qid " + qid + ": char span [" +
                                std::to_string(s) + ", " +
                                std::to_string(e_incl) + "] out of range");
        }
        std::size_t bs = cps[static_cast<std::size_t>(s)];
        std::size_t be = cps[static_cast<std::size_t>(e_incl) + 1];
        if (out.passage.text.compare(bs, be - bs, text) != 0) {
          throw ValidationError("qid " + qid + ": answer \"" + text +
                                "\" does not match context at [" +
                                std::to_string(s) + ", " +
                                std::to_string(e_incl) + "]");
        }
        if (!seen.emplace(bs, be).second) continue;
        c.answers.push_back(make_answer(out.passage, bs, be));
      }
    }
    if (c.answers.empty())
      throw ValidationError("qid " + qid + " has no detected answers");
    std::sort(c.answers.begin(), c.answers.end(),
              [](const AnswerSpan& a, const AnswerSpan& b) {
                return std::tie(a.char_start, a.char_end) <
                       std::tie(b.char_start, b.char_end);
              });
    out.cases.push_back(std::move(c));
  }
  return out;
}

std::string stem_of(const std::string& path) {
  auto slash = path.find_last_of('/');
  std::string name = slash == std::string::npos ? path : path.substr(slash + 1);
  auto dot = name.find('.');
  return dot == std::string::npos ? name : name.substr(0, dot);
}

}  // namespace

IngestResult ingest_mrqa(const std::string& path,
                         std::optional<std::size_t> limit) {
  IngestResult result;
  result.dataset.name = stem_of(path);
  std::unordered_set<std::string> qids;
  bool header_seen = false;
  detail::for_each_line(path, [&](std::string_view line, std::size_t no) {
    if (line.empty()) return true;
    ++result.lines_read;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      result.errors.push_back({no, std::string("invalid JSON: ") + e.what()});
      ++result.lines_skipped;
      return true;
    }
    if (!header_seen && rec.contains("header")) {
      header_seen = true;
      const auto& h = rec["header"];
      if (h.is_object() && h.contains("dataset") && h["dataset"].is_string())
        result.dataset.name = h["dataset"].get<std::string>();
      return true;
    }
    std::string pid = rec.contains("id") && rec["id"].is_string()
                          ? rec["id"].get<std::string>()
                          : result.dataset.name + ":" + std::to_string(no);
    try {
      MrqaLine parsed = parse_mrqa_line(rec, pid);
      for (auto& c : parsed.cases) {
        if (!qids.insert(c.question.id).second)
          throw ValidationError("duplicate qid " + c.question.id);
      }
      for (auto& c : parsed.cases) {
        if (limit && result.dataset.cases.size() >= *limit) return false;
        result.dataset.cases.push_back(std::move(c));
      }
    } catch (const ValidationError& e) {
      result.errors.push_back({no, e.what()});
      ++result.lines_skipped;
    } catch (const json::exception& e) {
      result.errors.push_back({no, std::string("malformed record: ") + e.what()});
      ++result.lines_skipped;
    }
    return !(limit && result.dataset.cases.size() >= *limit);
  });
  return result;
}

DatasetStats dataset_stats(const Dataset& d) {
  DatasetStats s;
  s.cases = d.cases.size();
  if (d.cases.empty()) return s;
  std::size_t answers = 0;
  std::map<std::pair<std::string, std::string>, std::set<std::string>> contexts;
  for (const auto& c : d.cases) {
    answers += c.answers.size();
    for (const auto& a : c.answers)
      contexts[{c.question.text, a.text}].insert(c.passage.id);
  }
  s.mean_answers_per_case =
      static_cast<double>(answers) / static_cast<double>(d.cases.size());
  s.unique_qa_pairs = contexts.size();
  for (const auto& [key, pids] : contexts)
    if (pids.size() >= 2) ++s.multi_context_pairs;
  s.multi_context_fraction = static_cast<double>(s.multi_context_pairs) /
                             static_cast<double>(s.unique_qa_pairs);
  return s;
}

Case truncate_context(const Case& c, std::size_t radius) {
  const auto& toks = c.passage.tokens;
  if (toks.empty() || c.answers.empty()) return c;
  const auto& first = c.answers.front();
  std::size_t lo = first.token_start > radius ? first.token_start - radius : 0;
  std::size_t hi = std::min(toks.size(), first.token_end + radius);
  std::size_t cs = toks[lo].char_start;
  std::size_t ce = toks[hi - 1].char_end;
  if (cs == 0 && ce == c.passage.text.size()) return c;

  Case out;
  out.question = c.question;
  out.passage = make_passage(c.passage.id + "#" + std::to_string(lo) + "-" +
                                 std::to_string(hi),
                             c.passage.text.substr(cs, ce - cs));
  for (const auto& a : c.answers) {
    if (a.char_start < cs || a.char_end > ce) continue;
    out.answers.push_back(make_answer(out.passage, a.char_start - cs,
                                      a.char_end - cs));
  }
  return out;
}

namespace {

json case_to_json(const Case& c) {
  json answers = json::array();
  for (const auto& a : c.answers) {
    answers.push_back({{"text", a.text},
                       {"char_start", a.char_start},
                       {"char_end", a.char_end},
                       {"token_start", a.token_start},
                       {"token_end", a.token_end}});
  }
  return json{{"qid", c.question.id},
              {"question", c.question.text},
              {"passage_id", c.passage.id},
              {"context", c.passage.text},
              {"answers", std::move(answers)}};
}

}  // namespace

namespace detail {

nlohmann::json case_to_json_object(const Case& c) { return case_to_json(c); }

std::string case_json_line(const Case& c) { return case_to_json(c).dump(); }

Case case_from_json(const nlohmann::json& rec, std::size_t line_no) {
  try {
    Case c;
    c.question = make_question(rec.at("qid").get<std::string>(),
                               rec.at("question").get<std::string>());
    c.passage = make_passage(rec.at("passage_id").get<std::string>(),
                             rec.at("context").get<std::string>());
    for (const auto& a : rec.at("answers")) {
      AnswerSpan span = make_answer(c.passage, a.at("char_start").get<std::size_t>(),
                                    a.at("char_end").get<std::size_t>());
      if (span.text != a.at("text").get<std::string>())
        throw ValidationError("answer text mismatch for " + c.question.id);
      c.answers.push_back(std::move(span));
    }
    validate_case(c);
    return c;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed case record: ") + e.what(),
                      static_cast<long long>(line_no));
  } catch (const ValidationError& e) {
    throw FormatError(e.what(), static_cast<long long>(line_no));
  }
}

Case case_from_json_line(std::string_view line, std::size_t line_no) {
  json rec;
  try {
    rec = json::parse(line);
  } catch (const json::exception& e) {
    throw FormatError(std::string("invalid JSON: ") + e.what(),
                      static_cast<long long>(line_no));
  }
  return case_from_json(rec, line_no);
}

}  // namespace detail

void save_dataset(const Dataset& d, const std::string& path) {
  std::ostringstream out;
  out << json{{"dataset", d.name}, {"format", "cbr-mrc-dataset"}, {"version", 1}}
             .dump()
      << '\n';
  for (const auto& c : d.cases) out << detail::case_json_line(c) << '\n';
  detail::write_file(path, out.str());
}

Dataset load_dataset(const std::string& path) {
  Dataset d;
  bool header = false;
  std::unordered_set<std::string> qids;
  detail::for_each_line(path, [&](std::string_view line, std::size_t no) {
    if (line.empty()) return true;
    if (!header) {
      json h;
      try {
        h = json::parse(line);
      } catch (const json::exception&) {
        throw FormatError("dataset header is not JSON", static_cast<long long>(no));
      }
      if (!h.contains("format") || h["format"] != "cbr-mrc-dataset")
        throw FormatError("not a cbr-mrc dataset file", static_cast<long long>(no));
      d.name = h.value("dataset", "");
      header = true;
      return true;
    }
    Case c = detail::case_from_json_line(line, no);
    if (!qids.insert(c.question.id).second)
      throw FormatError("duplicate qid " + c.question.id, static_cast<long long>(no));
    d.cases.push_back(std::move(c));
    return true;
  });
  if (!header) throw FormatError("empty dataset file " + path, 0);
  return d;
}

}  // namespace cbr
