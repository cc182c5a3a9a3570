#pragma once

// Entity recognition, question masking and wh-keyword extraction.

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "cbr/corpus.hpp"

namespace cbr {

enum class EntityKind { kName, kNumber, kDatetime, kQuoted };

std::string_view to_string(EntityKind k);

struct EntityMention {
  TokenRange tokens;
  std::size_t char_start = 0;
  std::size_t char_end = 0;
  EntityKind kind = EntityKind::kName;

  bool operator==(const EntityMention&) const = default;
};

// Lowercase surface forms, possibly multi-word ("new york").
class Gazetteer {
 public:
  Gazetteer() = default;
  explicit Gazetteer(const std::vector<std::string>& forms);

  // One form per line, UTF-8; blank lines ignored.
  static Gazetteer load(const std::string& path);

  void add(std::string_view form);
  bool empty() const { return forms_.empty(); }
  std::size_t max_tokens() const { return max_tokens_; }
  bool contains(const std::string& lowered_joined) const {
    return forms_.count(lowered_joined) > 0;
  }

 private:
  std::unordered_set<std::string> forms_;
  std::size_t max_tokens_ = 0;
};

// Pluggable recognizer; mentions must come back sorted and non-overlapping.
class EntityRecognizer {
 public:
  virtual ~EntityRecognizer() = default;
  virtual std::vector<EntityMention> recognize(const TokenSequence& tokens,
                                               std::string_view text) const = 0;
};

// Deterministic rule recognizer. Kinds are claimed in precedence order
// quoted > datetime > number > name; a lower-precedence mention never
// includes a token already claimed.
class RuleRecognizer : public EntityRecognizer {
 public:
  RuleRecognizer() = default;
  explicit RuleRecognizer(Gazetteer gazetteer) : gazetteer_(std::move(gazetteer)) {}

  std::vector<EntityMention> recognize(const TokenSequence& tokens,
                                       std::string_view text) const override;

  const Gazetteer& gazetteer() const { return gazetteer_; }

 private:
  Gazetteer gazetteer_;
};

std::vector<EntityMention> recognize_entities(const TokenSequence& tokens,
                                              std::string_view text,
                                              const Gazetteer& gazetteer = {});

struct MaskedQuestion {
  std::string question_id;
  std::string masked_text;
  TokenSequence masked_tokens;
  std::size_t mask_count = 0;
};

inline constexpr std::string_view kMaskToken = "[MASK]";

// Replaces every mention by a single [MASK] token. Tokens are re-joined with
// single spaces. Throws PreconditionError on overlapping or out-of-bounds
// mentions.
MaskedQuestion mask_question(const Question& q,
                             const std::vector<EntityMention>& mentions);

// Recognize-then-mask convenience.
MaskedQuestion mask_question(const Question& q, const EntityRecognizer& ner);

// First token (case-insensitive) among who/what/when/where/which/why/how/
// whose/whom.
std::optional<std::string> extract_wh_keyword(const Question& q);

}  // namespace cbr
