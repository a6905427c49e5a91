#include <doctest.h>

#include <optional>
#include <string>
#include <vector>

#include "refchain/augment.hpp"
#include "refchain/parse.hpp"
#include "refchain/rng.hpp"

using namespace refchain;

namespace {

ParsedUtterance two_mention_parse(const std::string& target_class,
                                  const std::string& anchor_class, std::size_t target,
                                  std::vector<RelationTriplet> triplets) {
  ParsedUtterance p;
  p.utterance_id = "aug";
  p.text = target_class + " vs " + anchor_class;
  for (std::size_t i = 0; i < 2; ++i) {
    Mention m;
    m.surface = i == 0 ? target_class : anchor_class;
    m.canonical_class = m.surface;
    m.match_score = 1.0;
    m.mention_index = i * 3;
    m.role = i == target ? MentionRole::Target : MentionRole::Anchor;
    p.mentions.push_back(m);
  }
  p.triplets = std::move(triplets);
  return p;
}

}  // namespace

TEST_CASE("relation inversion pairs directional relations") {
  CHECK(invert_relation(SpatialRelation::LeftOf) == SpatialRelation::RightOf);
  CHECK(invert_relation(SpatialRelation::RightOf) == SpatialRelation::LeftOf);
  CHECK(invert_relation(SpatialRelation::FrontOf) == SpatialRelation::Behind);
  CHECK(invert_relation(SpatialRelation::Behind) == SpatialRelation::FrontOf);
  CHECK(invert_relation(SpatialRelation::Above) == SpatialRelation::Below);
  CHECK(invert_relation(SpatialRelation::Below) == SpatialRelation::Above);
  CHECK(invert_relation(SpatialRelation::On) == SpatialRelation::Under);
  CHECK(invert_relation(SpatialRelation::Under) == SpatialRelation::On);
  CHECK(invert_relation(SpatialRelation::Near) == SpatialRelation::Near);
  CHECK(invert_relation(SpatialRelation::Far) == SpatialRelation::Far);
  CHECK(invert_relation(SpatialRelation::Between) == SpatialRelation::Between);
}

TEST_CASE("relation inversion is an involution over the whole enum") {
  for (std::size_t i = 0; i < kRelationCount; ++i) {
    const auto rel = static_cast<SpatialRelation>(i);
    CHECK(invert_relation(invert_relation(rel)) == rel);
  }
}

TEST_CASE("swap exchanges roles and rewrites the triplet viewpoint") {
  const auto parse =
      two_mention_parse("chair", "desk", 0, {{0, SpatialRelation::RightOf, 1, {}}});
  const auto swapped = swap_target_anchor(parse);
  REQUIRE(swapped.has_value());
  CHECK(swapped->mentions[0].role == MentionRole::Anchor);
  CHECK(swapped->mentions[1].role == MentionRole::Target);
  CHECK(swapped->target_index() == 1);
  REQUIRE(swapped->triplets.size() == 1);
  const RelationTriplet mirrored{1, SpatialRelation::LeftOf, 0, {}};
  CHECK(swapped->triplets[0] == mirrored);
  // Everything else is untouched.
  CHECK(swapped->mentions[0].canonical_class == "chair");
  CHECK(swapped->mentions[1].surface == "desk");
  CHECK(swapped->text == parse.text);
}

TEST_CASE("swap refuses parses it cannot mirror") {
  // Wrong mention count.
  ParsedUtterance three = two_mention_parse("chair", "desk", 0, {{0, SpatialRelation::Near, 1, {}}});
  Mention extra;
  extra.surface = extra.canonical_class = "lamp";
  extra.mention_index = 9;
  three.mentions.push_back(extra);
  CHECK_FALSE(swap_target_anchor(three).has_value());

  ParsedUtterance one = two_mention_parse("chair", "desk", 0, {});
  one.mentions.pop_back();
  CHECK_FALSE(swap_target_anchor(one).has_value());

  // No relation to mirror.
  CHECK_FALSE(swap_target_anchor(two_mention_parse("chair", "desk", 0, {})).has_value());
}

TEST_CASE("swap twice restores the original parse") {
  const auto parse = two_mention_parse(
      "pillow", "couch", 1,
      {{1, SpatialRelation::On, 0, {}}, {0, SpatialRelation::Near, 1, {}}});
  const auto once = swap_target_anchor(parse);
  REQUIRE(once.has_value());
  const auto twice = swap_target_anchor(*once);
  REQUIRE(twice.has_value());
  CHECK(twice->triplets == parse.triplets);
  for (std::size_t i = 0; i < 2; ++i)
    CHECK(twice->mentions[i].role == parse.mentions[i].role);
}

TEST_CASE("swap is an involution on random two-mention parses") {
  const std::vector<std::string> classes = {"chair", "desk", "lamp", "couch", "bed", "pillow"};
  RngStream rng(2024);
  for (int it = 0; it < 1000; ++it) {
    const std::size_t target = rng.next_index(2);
    const auto a = classes[rng.next_index(classes.size())];
    const auto b = classes[rng.next_index(classes.size())];
    std::vector<RelationTriplet> triplets;
    const std::size_t n_triplets = 1 + rng.next_index(3);
    for (std::size_t t = 0; t < n_triplets; ++t) {
      RelationTriplet tr;
      tr.subject = rng.next_index(2);
      tr.object = 1 - tr.subject;
      // Any directional or symmetric relation; Between cannot occur in a
      // two-mention parse.
      tr.relation = static_cast<SpatialRelation>(rng.next_index(kRelationCount - 1));
      triplets.push_back(tr);
    }
    const auto parse = two_mention_parse(a, b, target, triplets);

    const auto once = swap_target_anchor(parse);
    REQUIRE(once.has_value());
    // Exactly one target before and after.
    int targets = 0;
    for (const auto& m : once->mentions) targets += m.role == MentionRole::Target ? 1 : 0;
    CHECK(targets == 1);
    CHECK(once->target_index() == 1 - target);
    for (std::size_t t = 0; t < n_triplets; ++t) {
      CHECK(once->triplets[t].subject == triplets[t].object);
      CHECK(once->triplets[t].object == triplets[t].subject);
      CHECK(once->triplets[t].relation == invert_relation(triplets[t].relation));
    }

    const auto twice = swap_target_anchor(*once);
    REQUIRE(twice.has_value());
    CHECK(twice->triplets == parse.triplets);
    for (std::size_t i = 0; i < 2; ++i)
      CHECK(twice->mentions[i].role == parse.mentions[i].role);
  }
}
