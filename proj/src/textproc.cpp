#include "cbr/textproc.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <regex>

#include "cbr/error.hpp"
#include "io_util.hpp"

namespace cbr {

std::string_view to_string(EntityKind k) {
  switch (k) {
    case EntityKind::kName: return "name";
    case EntityKind::kNumber: return "number";
    case EntityKind::kDatetime: return "datetime";
    case EntityKind::kQuoted: return "quoted";
  }
  return "unknown";
}

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool is_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
    return std::isdigit(static_cast<unsigned char>(c));
  });
}

bool is_capitalized(std::string_view s) {
  return !s.empty() && std::isupper(static_cast<unsigned char>(s.front()));
}

bool is_mask(const Token& t) { return t.text == kMaskToken; }

constexpr std::array<std::string_view, 12> kMonths = {
    "January", "February", "March",     "April",   "May",      "June",
    "July",    "August",   "September", "October", "November", "December"};
constexpr std::array<std::string_view, 7> kWeekdays = {
    "Monday", "Tuesday", "Wednesday", "Thursday", "Friday", "Saturday", "Sunday"};
constexpr std::array<std::string_view, 31> kCardinals = {
    "zero",    "one",      "two",      "three",    "four",     "five",
    "six",     "seven",    "eight",    "nine",     "ten",      "eleven",
    "twelve",  "thirteen", "fourteen", "fifteen",  "sixteen",  "seventeen",
    "eighteen", "nineteen", "twenty",  "thirty",   "forty",    "fifty",
    "sixty",   "seventy",  "eighty",   "ninety",   "hundred",  "thousand",
    "million"};

// Capitalized words that start sentences without naming anything.
constexpr std::array<std::string_view, 24> kSentenceOpeners = {
    "The",  "A",    "An",   "In",    "On",   "At",    "Who",   "What",
    "When", "Where", "Which", "Why", "How",  "Whose", "Whom",  "It",
    "He",   "She",  "They", "This",  "That", "There", "We",    "I"};

template <std::size_t N>
bool in(const std::array<std::string_view, N>& set, std::string_view s) {
  return std::find(set.begin(), set.end(), s) != set.end();
}

bool is_number_token(std::string_view s) {
  static const std::regex re(R"([+-]?[0-9]+([.,][0-9]+)*)");
  if (std::regex_match(s.begin(), s.end(), re)) return true;
  return in(kCardinals, lower(s)) || lower(s) == "billion";
}

bool is_year(std::string_view s) { return s.size() == 4 && is_digits(s); }

bool is_day_number(std::string_view s) {
  if (s.empty() || s.size() > 2 || !is_digits(s)) return false;
  int v = std::stoi(std::string(s));
  return v >= 1 && v <= 31;
}

bool is_sentence_end(std::string_view s) {
  return s == "." || s == "!" || s == "?";
}

class Claims {
 public:
  explicit Claims(std::size_t n) : claimed_(n, false) {}
  bool free(std::size_t i) const { return !claimed_[i]; }
  bool free(std::size_t b, std::size_t e) const {
    for (std::size_t i = b; i < e; ++i)
      if (claimed_[i]) return false;
    return true;
  }
  void claim(std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) claimed_[i] = true;
  }

 private:
  std::vector<bool> claimed_;
};

EntityMention make_mention(const TokenSequence& toks, std::size_t b,
                           std::size_t e, EntityKind kind) {
  return EntityMention{{b, e}, toks[b].char_start, toks[e - 1].char_end, kind};
}

void find_quoted(const TokenSequence& toks, Claims& claims,
                 std::vector<EntityMention>& out) {
  std::optional<std::size_t> straight;
  std::optional<std::size_t> curly;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    const auto& t = toks[i].text;
    if (t == "\"") {
      if (!straight) {
        straight = i;
      } else {
        if (i > *straight + 1 && claims.free(*straight + 1, i)) {
          out.push_back(make_mention(toks, *straight + 1, i, EntityKind::kQuoted));
          claims.claim(*straight + 1, i);
        }
        straight.reset();
      }
    } else if (t == "“") {
      curly = i;
    } else if (t == "”" && curly) {
      if (i > *curly + 1 && claims.free(*curly + 1, i)) {
        out.push_back(make_mention(toks, *curly + 1, i, EntityKind::kQuoted));
        claims.claim(*curly + 1, i);
      }
      curly.reset();
    }
  }
}

void find_datetimes(const TokenSequence& toks, Claims& claims,
                    std::vector<EntityMention>& out) {
  auto is_anchor = [&](std::size_t i) {
    const auto& t = toks[i].text;
    return in(kMonths, t) || in(kWeekdays, t) || is_year(t);
  };
  auto is_part = [&](std::size_t i) {
    return is_anchor(i) || is_day_number(toks[i].text);
  };
  std::size_t i = 0;
  while (i < toks.size()) {
    if (!claims.free(i) || is_mask(toks[i]) || !is_part(i)) {
      ++i;
      continue;
    }
    std::size_t b = i;
    std::size_t e = i + 1;
    bool anchored = is_anchor(i);
    while (e < toks.size() && claims.free(e)) {
      if (is_part(e)) {
        anchored = anchored || is_anchor(e);
        ++e;
      } else if (toks[e].text == "," && e + 1 < toks.size() &&
                 claims.free(e + 1) && is_part(e + 1)) {
        e += 2;
        anchored = anchored || is_anchor(e - 1);
      } else {
        break;
      }
    }
    if (anchored) {
      out.push_back(make_mention(toks, b, e, EntityKind::kDatetime));
      claims.claim(b, e);
    }
    i = e;
  }
}

void find_numbers(const TokenSequence& toks, Claims& claims,
                  std::vector<EntityMention>& out) {
  std::size_t i = 0;
  while (i < toks.size()) {
    if (!claims.free(i) || !is_number_token(toks[i].text)) {
      ++i;
      continue;
    }
    std::size_t e = i + 1;
    while (e < toks.size() && claims.free(e) && is_number_token(toks[e].text)) ++e;
    out.push_back(make_mention(toks, i, e, EntityKind::kNumber));
    claims.claim(i, e);
    i = e;
  }
}

void find_names(const TokenSequence& toks, const Gazetteer& gaz, Claims& claims,
                std::vector<EntityMention>& out) {
  const std::size_t n = toks.size();
  // Tokens covered by a gazetteer entry (longest match first).
  std::vector<bool> gazetted(n, false);
  if (!gaz.empty()) {
    std::size_t i = 0;
    while (i < n) {
      std::size_t matched = 0;
      for (std::size_t len = std::min(gaz.max_tokens(), n - i); len >= 1; --len) {
        if (!claims.free(i, i + len)) continue;
        std::string joined = lower(toks[i].text);
        for (std::size_t j = i + 1; j < i + len; ++j) joined += " " + lower(toks[j].text);
        if (gaz.contains(joined)) {
          matched = len;
          break;
        }
      }
      if (matched > 0) {
        for (std::size_t j = i; j < i + matched; ++j) gazetted[j] = true;
        i += matched;
      } else {
        ++i;
      }
    }
  }

  auto nameish = [&](std::size_t i) {
    return claims.free(i) && !is_mask(toks[i]) &&
           (gazetted[i] || is_capitalized(toks[i].text));
  };
  std::size_t i = 0;
  while (i < n) {
    if (!nameish(i)) {
      ++i;
      continue;
    }
    std::size_t b = i;
    std::size_t e = i + 1;
    while (e < n && nameish(e)) ++e;
    i = e;
    const bool sentence_start = b == 0 || is_sentence_end(toks[b - 1].text);
    if (sentence_start) {
      if (!gazetted[b] && in(kSentenceOpeners, toks[b].text)) ++b;
      if (b == e) continue;
      // A lone capitalized word opening a sentence is not a name.
      const bool still_initial = b == 0 || is_sentence_end(toks[b - 1].text);
      if (still_initial && e - b == 1 && !gazetted[b]) continue;
    }
    out.push_back(make_mention(toks, b, e, EntityKind::kName));
    claims.claim(b, e);
  }
}

}  // namespace

Gazetteer::Gazetteer(const std::vector<std::string>& forms) {
  for (const auto& f : forms) add(f);
}

Gazetteer Gazetteer::load(const std::string& path) {
  Gazetteer g;
  detail::for_each_line(path, [&](std::string_view line, std::size_t) {
    g.add(line);
    return true;
  });
  return g;
}

void Gazetteer::add(std::string_view form) {
  auto toks = tokenize(form);
  if (toks.empty()) return;
  std::string joined = lower(toks[0].text);
  for (std::size_t i = 1; i < toks.size(); ++i) joined += " " + lower(toks[i].text);
  forms_.insert(std::move(joined));
  max_tokens_ = std::max(max_tokens_, toks.size());
}

std::vector<EntityMention> RuleRecognizer::recognize(const TokenSequence& tokens,
                                                     std::string_view) const {
  std::vector<EntityMention> out;
  Claims claims(tokens.size());
  find_quoted(tokens, claims, out);
  find_datetimes(tokens, claims, out);
  find_numbers(tokens, claims, out);
  find_names(tokens, gazetteer_, claims, out);
  std::sort(out.begin(), out.end(), [](const EntityMention& a, const EntityMention& b) {
    return a.tokens < b.tokens;
  });
  return out;
}

std::vector<EntityMention> recognize_entities(const TokenSequence& tokens,
                                              std::string_view text,
                                              const Gazetteer& gazetteer) {
  return RuleRecognizer(gazetteer).recognize(tokens, text);
}

MaskedQuestion mask_question(const Question& q,
                             const std::vector<EntityMention>& mentions) {
  std::vector<EntityMention> sorted = mentions;
  std::sort(sorted.begin(), sorted.end(),
            [](const EntityMention& a, const EntityMention& b) { return a.tokens < b.tokens; });
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const auto& r = sorted[i].tokens;
    if (r.start >= r.end || r.end > q.tokens.size())
      throw PreconditionError("mention out of bounds in question " + q.id);
    if (i > 0 && sorted[i - 1].tokens.end > r.start)
      throw PreconditionError("overlapping mentions in question " + q.id);
  }

  MaskedQuestion mq;
  mq.question_id = q.id;
  auto push = [&](std::string_view text) {
    if (!mq.masked_text.empty()) mq.masked_text += ' ';
    std::size_t start = mq.masked_text.size();
    mq.masked_text += text;
    mq.masked_tokens.push_back(Token{std::string(text), start, mq.masked_text.size()});
  };
  std::size_t next = 0;
  for (std::size_t i = 0; i < q.tokens.size();) {
    if (next < sorted.size() && sorted[next].tokens.start == i) {
      push(kMaskToken);
      ++mq.mask_count;
      i = sorted[next].tokens.end;
      ++next;
    } else {
      push(q.tokens[i].text);
      if (is_mask(q.tokens[i])) ++mq.mask_count;
      ++i;
    }
  }
  return mq;
}

MaskedQuestion mask_question(const Question& q, const EntityRecognizer& ner) {
  return mask_question(q, ner.recognize(q.tokens, q.text));
}

std::optional<std::string> extract_wh_keyword(const Question& q) {
  static constexpr std::array<std::string_view, 9> kWh = {
      "who", "what", "when", "where", "which", "why", "how", "whose", "whom"};
  for (const auto& t : q.tokens) {
    std::string l = lower(t.text);
    if (in(kWh, l)) return l;
  }
  return std::nullopt;
}

}  // namespace cbr
