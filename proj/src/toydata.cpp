#include "cbr/toydata.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <map>
#include <set>

#include "cbr/error.hpp"
#include "cbr/rng.hpp"

namespace cbr {

namespace {

// Slot letters: P person (subject), I person (inventor), O object, Y year,
// B birth city, C capital city, K company, N country. Answer slots draw from
// small pools so every answer entity recurs across training cases.
struct Relation {
  std::string name;
  std::string question;
  char answer_slot;
  std::vector<std::string> contexts;
};

const std::vector<Relation>& relations() {
  static const std::vector<Relation> r = {
      {"inventor",
       "Who invented the {O}?",
       'I',
       {"The {O} was invented by {I} in a small workshop.",
        "Historians credit {I} with creating the first {O} decades ago.",
        "It was {I} who built the original {O} after years of work."}},
      {"birth-year",
       "When was {P} born?",
       'Y',
       {"Records show that {P} was born in {Y} near the coast.",
        "Somewhere around {Y} the child {P} entered the world.",
        "The archive lists {Y} as the year that {P} arrived."}},
      {"birth-city",
       "Where was {P} born?",
       'B',
       {"Records show that {P} was born in {B} into a large family.",
        "As a child {P} grew up in {B} with three sisters.",
        "The hometown of {P} is {B} say local papers."}},
      {"founder",
       "Which company did {P} found?",
       'K',
       {"In later life {P} founded {K} with two partners.",
        "The startup {K} was begun by {P} in a rented garage.",
        "Everyone agrees the firm {K} exists because of {P} alone."}},
      {"capital",
       "What is the capital of {N}?",
       'C',
       {"The capital of {N} is {C} and it lies on a river.",
        "Government offices of {N} sit in {C} near the old square.",
        "Today the city {C} serves as the seat of power for {N} again."}},
      {"moved-to",
       "Which town did {P} move to?",
       'B',
       {"Eventually {P} relocated toward {B} seeking fresh employment.",
        "Postwar {P} resettled inside {B} alongside longtime comrades.",
        "Ultimately {P} migrated toward {B} once factories shut."}},
  };
  return r;
}

constexpr std::size_t kBaseRelations = 5;

std::string make_word(Rng& rng) {
  static const std::string cons = "bdfgklmnprstvz";
  static const std::string vow = "aeiou";
  std::string w;
  const std::size_t syl = 2 + rng.below(2);
  for (std::size_t i = 0; i < syl; ++i) {
    w += cons[rng.below(cons.size())];
    w += vow[rng.below(vow.size())];
  }
  if (rng.below(2)) w += cons[rng.below(cons.size())];
  w[0] = static_cast<char>(w[0] - 'a' + 'A');
  return w;
}

struct Pools {
  std::map<char, std::vector<std::string>> by_slot;
};

Pools make_pools(Rng& rng) {
  Pools p;
  std::set<std::string> used;
  const std::array<std::pair<char, std::size_t>, 7> sizes = {
      {{'P', 150}, {'I', 20}, {'O', 100}, {'K', 20}, {'B', 20}, {'C', 20}, {'N', 100}}};
  for (auto [slot, n] : sizes) {
    auto& v = p.by_slot[slot];
    while (v.size() < n) {
      std::string w = make_word(rng);
      if (used.insert(w).second) v.push_back(w);
    }
  }
  std::vector<std::string> years;
  for (int y = 1700; y < 2000; ++y) years.push_back(std::to_string(y));
  rng.shuffle(years);
  years.resize(20);
  p.by_slot['Y'] = years;
  return p;
}

struct Filled {
  std::string text;
  std::size_t answer_start = 0;
  std::size_t answer_end = 0;
};

Filled fill(const std::string& tmpl, const std::map<char, std::string>& values, char answer) {
  Filled f;
  bool placed = false;
  for (std::size_t i = 0; i < tmpl.size(); ++i) {
    if (tmpl[i] == '{' && i + 2 < tmpl.size() && tmpl[i + 2] == '}') {
      const char slot = tmpl[i + 1];
      const std::string& v = values.at(slot);
      if (slot == answer && !placed) {
        f.answer_start = f.text.size();
        f.answer_end = f.text.size() + v.size();
        placed = true;
      }
      f.text += v;
      i += 2;
    } else {
      f.text += tmpl[i];
    }
  }
  return f;
}

std::set<char> slots_of(const Relation& r) {
  std::set<char> s;
  for (std::size_t i = 0; i + 2 < r.question.size(); ++i)
    if (r.question[i] == '{') s.insert(r.question[i + 1]);
  for (const auto& c : r.contexts)
    for (std::size_t i = 0; i + 2 < c.size(); ++i)
      if (c[i] == '{') s.insert(c[i + 1]);
  return s;
}

class Generator {
 public:
  Generator(const ToyCorpusConfig& cfg) : cfg_(cfg), rng_(cfg.seed), pools_(make_pools(rng_)) {}

  Case make(std::size_t rel, std::size_t tmpl, const std::vector<std::size_t>& distractor_rels,
            const std::string& id) {
    const Relation& r = relations()[rel];
    std::set<std::string> taken;
    std::map<char, std::string> values = draw(r, taken);

    std::vector<std::size_t> order(distractor_rels.size() + 1);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng_.shuffle(order);
    Filled main = fill(r.contexts[tmpl], values, r.answer_slot);
    std::vector<std::string> others;
    for (std::size_t rel_d : distractor_rels) {
      const Relation& dr = relations()[rel_d];
      auto dv = draw(dr, taken);
      others.push_back(fill(dr.contexts[rng_.below(dr.contexts.size())], dv, 0).text);
    }
    std::string text;
    std::size_t answer_start = 0;
    std::size_t next_other = 0;
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
      if (!text.empty()) text += ' ';
      if (order[pos] == 0) {
        answer_start = text.size() + main.answer_start;
        text += main.text;
      } else {
        text += others[next_other++];
      }
    }
    Case c;
    c.passage = make_passage("toy-p-" + id, text);
    c.question = make_question(id, fill(r.question, values, 0).text);
    c.answers.push_back(
        make_answer(c.passage, answer_start, answer_start + (main.answer_end - main.answer_start)));
    validate_case(c);
    return c;
  }

  // `n` distinct relations from `from`, in random order.
  std::vector<std::size_t> choose(std::vector<std::size_t> from, std::size_t n) {
    rng_.shuffle(from);
    from.resize(std::min(n, from.size()));
    return from;
  }

  const Pools& pools() const { return pools_; }

 private:
  std::map<char, std::string> draw(const Relation& r, std::set<std::string>& taken) {
    std::map<char, std::string> v;
    for (char s : slots_of(r)) {
      const auto& pool = pools_.by_slot.at(s);
      std::string w;
      do {
        w = rng_.pick(pool);
      } while (taken.count(w));
      taken.insert(w);
      v[s] = w;
    }
    return v;
  }

  ToyCorpusConfig cfg_;
  Rng rng_;
  Pools pools_;
};

std::string pad(std::size_t i) {
  std::string s = std::to_string(i);
  return std::string(s.size() < 5 ? 5 - s.size() : 0, '0') + s;
}

}  // namespace

ToyCorpus generate_toy_corpus(const ToyCorpusConfig& cfg) {
  Generator gen(cfg);
  ToyCorpus out;
  out.train.name = "toy-train";
  out.test.name = "toy-test";
  out.fewshot_cases.name = "toy-fewshot-cases";
  out.fewshot_test.name = "toy-fewshot-test";

  std::vector<std::size_t> base(kBaseRelations);
  for (std::size_t r = 0; r < kBaseRelations; ++r) base[r] = r;
  auto others = [&](std::size_t rel) {
    std::vector<std::size_t> v;
    for (std::size_t r : base)
      if (r != rel) v.push_back(r);
    return v;
  };
  // The sixth relation's passages always hold a founder sentence (the
  // relation its question resembles most) and never another city.
  auto fewshot_distractors = [&] {
    std::vector<std::size_t> d = {3};
    for (std::size_t r : gen.choose({0, 1}, cfg.distractors > 0 ? cfg.distractors - 1 : 0))
      d.push_back(r);
    return d;
  };

  std::size_t n = 0;
  for (std::size_t rel = 0; rel < kBaseRelations; ++rel)
    for (std::size_t i = 0; i < cfg.train_per_relation; ++i)
      out.train.cases.push_back(gen.make(rel, i % 3, gen.choose(others(rel), cfg.distractors), "toy-train-" + pad(n++)));
  n = 0;
  for (std::size_t rel = 0; rel < kBaseRelations; ++rel)
    for (std::size_t i = 0; i < cfg.test_per_relation; ++i)
      out.test.cases.push_back(gen.make(rel, i % 3, gen.choose(others(rel), cfg.distractors), "toy-test-" + pad(n++)));
  n = 0;
  for (std::size_t i = 0; i < cfg.fewshot_cases; ++i)
    out.fewshot_cases.cases.push_back(
        gen.make(kBaseRelations, i % 3, fewshot_distractors(), "toy-fs-case-" + pad(n++)));
  n = 0;
  for (std::size_t i = 0; i < cfg.fewshot_test; ++i)
    out.fewshot_test.cases.push_back(
        gen.make(kBaseRelations, i % 3, fewshot_distractors(), "toy-fs-test-" + pad(n++)));

  for (const auto& [slot, pool] : gen.pools().by_slot) {
    if (slot == 'Y') continue;
    for (auto w : pool) {
      std::transform(w.begin(), w.end(), w.begin(),
                     [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
      out.entities.push_back(w);
    }
  }
  std::sort(out.entities.begin(), out.entities.end());
  for (const auto& r : relations()) out.relations.push_back(r.name);
  return out;
}

}  // namespace cbr
