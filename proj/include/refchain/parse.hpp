#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "refchain/labels.hpp"

namespace refchain {

enum class SpatialRelation {
  Near,
  Far,
  LeftOf,
  RightOf,
  FrontOf,
  Behind,
  Above,
  Below,
  On,
  Under,
  Between,
};
inline constexpr std::size_t kRelationCount = 11;

const char* relation_name(SpatialRelation rel);
std::optional<SpatialRelation> relation_from_name(std::string_view name);

enum class MentionRole { Target, Anchor };

struct Mention {
  std::string surface;          // raw token span of the first occurrence
  std::string canonical_class;  // member of the label set
  double match_score = 0.0;
  std::size_t mention_index = 0;  // token index of the first occurrence
  MentionRole role = MentionRole::Anchor;
};

struct RelationTriplet {
  std::size_t subject = 0;  // mention index
  SpatialRelation relation = SpatialRelation::Near;
  std::size_t object = 0;  // mention index
  // Second reference, present iff relation == Between.
  std::optional<std::size_t> second_object;

  friend bool operator==(const RelationTriplet&, const RelationTriplet&) = default;
};

struct ParsedUtterance {
  std::string utterance_id;
  std::string text;
  std::vector<Mention> mentions;  // first-occurrence order; at most mention_cap
  std::vector<RelationTriplet> triplets;
  bool over_token_cap = false;     // token count exceeded the cap; parsed fully anyway
  bool truncated_mentions = false;  // mention list was cut down to the cap

  // Index of the unique mention with role == Target.
  std::size_t target_index() const;
};

struct ParseOutcome {
  bool ok = false;
  ParsedUtterance parse;  // meaningful iff ok
  std::string error;      // meaningful iff !ok
};

struct ParserConfig {
  double match_threshold = 0.35;
  std::size_t token_cap = 24;    // W; exceeding it only sets a flag
  std::size_t mention_cap = 8;   // M; exceeding it truncates with a flag
};

struct MatchResult {
  std::string label;
  double score = 0.0;
};

// Lowercases and splits on every non-alphanumeric byte (multi-byte UTF-8
// sequences act as separators), so it is total on arbitrary input.
std::vector<std::string> tokenize(std::string_view text);

// Similarity in [0, 1] between a surface phrase and a label: the mean of a
// soft token-overlap score (per-token padded-trigram Dice, greedy one-to-one
// pairing, normalized by the larger token count) and the padded-trigram Dice
// of the whole strings. Exactly 1.0 iff the normalized strings are equal;
// capped strictly below 1.0 otherwise. Normalization lowercases, splits on
// non-alphanumerics, and strips a trailing plural 's'.
double class_similarity(std::string_view surface, std::string_view label);

// Best label by class_similarity; ties broken by lexicographically smaller
// label. No value when the best score is below `threshold`.
std::optional<MatchResult> match_class(std::string_view surface, const LabelSet& labels,
                                       double threshold = 0.35);

// Phrase table mapping token sequences ("to the left of") to relations.
// Matching is longest-first at each position; matched tokens are consumed.
class RelationLexicon {
 public:
  struct Entry {
    std::vector<std::string> tokens;
    SpatialRelation relation;
  };

  RelationLexicon() = default;
  explicit RelationLexicon(std::vector<Entry> entries);

  // Lines of `phrase => RelationName`; '#' comments and blank lines ignored.
  // Throws std::runtime_error with a line number on malformed entries.
  static RelationLexicon load(const std::string& path);

  const std::vector<Entry>& entries() const { return entries_; }

  // Longest entry whose tokens equal tokens[pos..pos+len); (length, relation).
  std::optional<std::pair<std::size_t, SpatialRelation>> longest_match(
      const std::vector<std::string>& tokens, std::size_t pos) const;

 private:
  std::vector<Entry> entries_;
};

// Rule-based parse: relation phrases are consumed first, function words and
// region nouns are dropped, remaining token runs become mention candidates
// matched through match_class, repeated classes merge into one mention. The
// target is the first mention after an imperative cue (choose, select, pick,
// find, grab, locate, identify) when one occurs, otherwise the leftmost
// mention. Each relation phrase links the nearest mention occurrence on its
// left (subject) to the nearest on its right (object); "between X and Y"
// additionally binds a second object. Total and deterministic on any input.
ParseOutcome parse_utterance(std::string_view text, const LabelSet& labels,
                             const RelationLexicon& lexicon, const ParserConfig& cfg = {});

}  // namespace refchain
