#include <doctest.h>

#include <algorithm>
#include <string>
#include <vector>

#include "refchain/parse.hpp"
#include "refchain/pathway.hpp"

using namespace refchain;

namespace {

const LabelSet& full_labels() {
  static const LabelSet labels = LabelSet::load(REFCHAIN_DATA_DIR "/scannet_labels.txt");
  return labels;
}

const RelationLexicon& lexicon() {
  static const RelationLexicon lex = RelationLexicon::load(REFCHAIN_DATA_DIR "/relations.lex");
  return lex;
}

ParsedUtterance must_parse(const std::string& text) {
  ParseOutcome outcome = parse_utterance(text, full_labels(), lexicon());
  REQUIRE_MESSAGE(outcome.ok, "failed to parse: ", text);
  return outcome.parse;
}

std::vector<std::string> ordered_classes(const ParsedUtterance& parse, const PathwayOrder& order) {
  std::vector<std::string> out;
  for (std::size_t m : order.ordered_mentions) out.push_back(parse.mentions[m].canonical_class);
  return out;
}

// A hand-built parse: class names double as surfaces; mention_index = slot.
ParsedUtterance manual_parse(const std::vector<std::string>& classes, std::size_t target,
                             std::vector<RelationTriplet> triplets) {
  ParsedUtterance p;
  p.utterance_id = "manual";
  for (std::size_t i = 0; i < classes.size(); ++i) {
    Mention m;
    m.surface = classes[i];
    m.canonical_class = classes[i];
    m.match_score = 1.0;
    m.mention_index = i;
    m.role = i == target ? MentionRole::Target : MentionRole::Anchor;
    p.mentions.push_back(m);
  }
  p.triplets = std::move(triplets);
  return p;
}

}  // namespace

TEST_CASE("worked ordering: tv, couch, pillow") {
  const auto p = must_parse(
      "The pillow on the couch that is on the right hand side of the room, when you are facing "
      "the TV, and is closest to the TV");
  const auto order = heuristic_order(p);
  CHECK(ordered_classes(p, order) == std::vector<std::string>{"tv", "couch", "pillow"});
}

TEST_CASE("worked ordering: bed then pillow (anchored)") {
  const auto p = must_parse(
      "The pillow on the bed that is on the far end of the room and is at the rear and right "
      "hand side of the bed");
  const auto order = heuristic_order(p);
  CHECK(ordered_classes(p, order) == std::vector<std::string>{"bed", "pillow"});
}

TEST_CASE("worked ordering: bed then pillow (cue target)") {
  const auto p = must_parse(
      "Standing at the end of the bed looking towards the pillows, choose the pillow that is "
      "in the front, smaller and more to the right.");
  const auto order = heuristic_order(p);
  CHECK(ordered_classes(p, order) == std::vector<std::string>{"bed", "pillow"});
}

TEST_CASE("worked ordering: kitchen cabinet target comes last") {
  const auto p = must_parse(
      "Select the kitchen cabinet on the wall near the stove and refrigerator, not the one "
      "near the refrigerator.");
  const auto order = heuristic_order(p);
  REQUIRE(order.ordered_mentions.size() == p.mentions.size());
  CHECK(p.mentions[order.ordered_mentions.back()].canonical_class == "kitchen cabinet");
}

TEST_CASE("target is always last and the order is a permutation") {
  for (const char* text :
       {"the chair near the desk", "choose the desk under the monitor beside the lamp",
        "pillow between the bed and the dresser"}) {
    const auto p = must_parse(text);
    const auto order = heuristic_order(p);
    REQUIRE(order.ordered_mentions.size() == p.mentions.size());
    CHECK(order.ordered_mentions.back() == p.target_index());
    std::vector<bool> seen(p.mentions.size(), false);
    for (std::size_t m : order.ordered_mentions) {
      CHECK(m < p.mentions.size());
      CHECK_FALSE(seen[m]);
      seen[m] = true;
    }
  }
}

TEST_CASE("order depends on the triplet set, not triplet list order") {
  auto p = manual_parse({"chair", "desk", "monitor", "lamp"}, 0,
                        {{0, SpatialRelation::Near, 1, {}},
                         {1, SpatialRelation::On, 2, {}},
                         {2, SpatialRelation::Near, 3, {}}});
  const auto base = heuristic_order(p);
  std::vector<RelationTriplet> shuffled = p.triplets;
  std::reverse(shuffled.begin(), shuffled.end());
  auto q = manual_parse({"chair", "desk", "monitor", "lamp"}, 0, std::move(shuffled));
  CHECK(heuristic_order(q) == base);
  // Chain of dependencies forces lamp, monitor, desk, chair.
  CHECK(base.ordered_mentions == std::vector<std::size_t>{3, 2, 1, 0});
}

TEST_CASE("unconstrained anchors emit later-mentioned first") {
  const auto p = manual_parse({"chair", "desk", "monitor"}, 0, {});
  const auto order = heuristic_order(p);
  CHECK(order.ordered_mentions == std::vector<std::size_t>{2, 1, 0});
}

TEST_CASE("cycles break by dropping the earliest-subject constraint") {
  // The two triplets demand monitor-before-desk and desk-before-monitor.
  // Desk is the earlier-mentioned subject, so the constraint its triplet
  // contributes (monitor-before-desk) is the one dropped.
  const auto p = manual_parse({"chair", "desk", "monitor"}, 0,
                              {{1, SpatialRelation::Near, 2, {}},
                               {2, SpatialRelation::Near, 1, {}}});
  const auto order = heuristic_order(p);
  CHECK(order.ordered_mentions == std::vector<std::size_t>{1, 2, 0});
}

TEST_CASE("edit distance matches hand-checked values and axioms") {
  using v = std::vector<std::string>;
  CHECK(edit_distance(v{}, v{}) == 0);
  CHECK(edit_distance(v{"a"}, v{}) == 1);
  CHECK(edit_distance(v{"a", "b", "c"}, v{"a", "c"}) == 1);
  CHECK(edit_distance(v{"a", "b"}, v{"b", "a"}) == 2);
  CHECK(edit_distance(v{"bed", "pillow"}, v{"bed", "pillow"}) == 0);
  CHECK(edit_distance(v{"tv", "couch", "pillow"}, v{"couch", "pillow"}) == 1);
  // Symmetry and triangle inequality on a few triples.
  const v a{"x", "y", "z"}, b{"y", "z"}, c{"x", "z", "w"};
  CHECK(edit_distance(a, b) == edit_distance(b, a));
  CHECK(edit_distance(a, c) <= edit_distance(a, b) + edit_distance(b, c));
}

TEST_CASE("normalized levenshtein divides by the longer length") {
  using v = std::vector<std::string>;
  CHECK(normalized_levenshtein(v{}, v{}) == 0.0);
  CHECK(normalized_levenshtein(v{"a", "b"}, v{"a", "b"}) == 0.0);
  CHECK(normalized_levenshtein(v{"a", "b"}, v{"c", "d"}) == 1.0);
  CHECK(normalized_levenshtein(v{"a", "b", "c", "d"}, v{"a", "b", "c"}) == doctest::Approx(0.25));
}

TEST_CASE("external order records parse and bind to mentions") {
  const auto p = must_parse("the pillow on the bed");
  std::map<std::string, ParsedUtterance> parses;
  ParsedUtterance bound = p;
  bound.utterance_id = "u1";
  parses["u1"] = bound;

  const std::string text = "ID: u1\nR: [1: bed, t: pillow]\n";
  const auto result = parse_external_orders(text, parses);
  CHECK(result.errors.empty());
  REQUIRE(result.orders.count("u1") == 1);
  const auto& order = result.orders.at("u1");
  REQUIRE(order.ordered_mentions.size() == 2);
  CHECK(bound.mentions[order.ordered_mentions[0]].canonical_class == "bed");
  CHECK(bound.mentions[order.ordered_mentions[1]].canonical_class == "pillow");
}

TEST_CASE("external order records survive fuzzy names and extra lines") {
  const auto p = must_parse("the pillow on the bed");
  std::map<std::string, ParsedUtterance> parses;
  ParsedUtterance bound = p;
  bound.utterance_id = "u1";
  parses["u1"] = bound;

  // Q and parenthesized lines are ignored; "beds" matches "bed".
  const std::string text =
      "ID: u1\nQ: \"the pillow on the bed\"\n(the target rests on the bed)\n"
      "R: [1: beds, t: pillows]\n";
  const auto result = parse_external_orders(text, parses);
  CHECK(result.errors.empty());
  CHECK(result.orders.count("u1") == 1);
}

TEST_CASE("external order error cases") {
  const auto p = must_parse("the pillow on the bed");
  std::map<std::string, ParsedUtterance> parses;
  ParsedUtterance bound = p;
  bound.utterance_id = "u1";
  parses["u1"] = bound;

  struct Case {
    const char* name;
    const char* text;
  };
  const Case cases[] = {
      {"R before any ID", "R: [1: bed, t: pillow]\n"},
      {"unknown id", "ID: nope\nR: [1: bed, t: pillow]\n"},
      {"missing R", "ID: u1\n"},
      {"t not last", "ID: u1\nR: [t: pillow, 1: bed]\n"},
      {"incomplete coverage", "ID: u1\nR: [t: pillow]\n"},
      {"double coverage", "ID: u1\nR: [1: bed, 2: bed, t: pillow]\n"},
      {"t names an anchor", "ID: u1\nR: [1: pillow, t: bed]\n"},
      {"unmatched name", "ID: u1\nR: [1: spaceship, t: pillow]\n"},
      {"malformed list", "ID: u1\nR: bed pillow\n"},
  };
  for (const auto& c : cases) {
    const auto result = parse_external_orders(c.text, parses);
    CHECK_MESSAGE(!result.errors.empty(), c.name);
    CHECK_MESSAGE(result.orders.empty(), c.name);
  }
}

TEST_CASE("duplicate record ids are rejected") {
  const auto p = must_parse("the pillow on the bed");
  std::map<std::string, ParsedUtterance> parses;
  ParsedUtterance bound = p;
  bound.utterance_id = "u1";
  parses["u1"] = bound;
  const std::string text =
      "ID: u1\nR: [1: bed, t: pillow]\nID: u1\nR: [1: bed, t: pillow]\n";
  const auto result = parse_external_orders(text, parses);
  CHECK_FALSE(result.errors.empty());
}

TEST_CASE("serialized order records round-trip through the ingester") {
  const auto base = must_parse(
      "The pillow on the couch that is on the right hand side of the room, when you are facing "
      "the TV, and is closest to the TV");
  ParsedUtterance bound = base;
  bound.utterance_id = "rt-1";
  const PathwayOrder order = heuristic_order(bound);

  std::map<std::string, ParsedUtterance> parses;
  parses["rt-1"] = bound;
  const std::string text = serialize_order_record(bound, order);
  const auto result = parse_external_orders(text, parses);
  CHECK(result.errors.empty());
  REQUIRE(result.orders.count("rt-1") == 1);
  CHECK(result.orders.at("rt-1") == order);
}
