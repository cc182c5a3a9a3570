#pragma once

// Synthetic relational corpus for end-to-end checks: pseudo-word entities,
// a handful of relations with several context phrasings each, and passages
// padded with distractor sentences from other relations.

#include <cstdint>
#include <string>
#include <vector>

#include "cbr/corpus.hpp"
#include "cbr/textproc.hpp"

namespace cbr {

struct ToyCorpusConfig {
  std::size_t train_per_relation = 100;
  std::size_t test_per_relation = 20;
  std::size_t fewshot_cases = 32;
  std::size_t fewshot_test = 20;
  std::size_t distractors = 2;
  std::uint64_t seed = 7;
};

struct ToyCorpus {
  Dataset train;          // the five base relations
  Dataset test;           // held-out questions over the same relations
  Dataset fewshot_cases;  // sixth relation, for casebase augmentation
  Dataset fewshot_test;   // sixth relation, evaluation
  std::vector<std::string> entities;  // every pseudo-word entity, lowercase
  std::vector<std::string> relations;

  Gazetteer gazetteer() const { return Gazetteer(entities); }
};

ToyCorpus generate_toy_corpus(const ToyCorpusConfig& cfg = {});

}  // namespace cbr
