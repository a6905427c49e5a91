#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "refchain/localize.hpp"
#include "refchain/parse.hpp"
#include "refchain/pathway.hpp"

using namespace refchain;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Aabb3 box(double cx, double cy, double cz, double ex = 1.0, double ey = 1.0, double ez = 1.0) {
  Aabb3 b;
  b.center[0] = cx;
  b.center[1] = cy;
  b.center[2] = cz;
  b.extent[0] = ex;
  b.extent[1] = ey;
  b.extent[2] = ez;
  return b;
}

ObjectProposal prop(std::int64_t id, const std::string& cls, const Aabb3& b) {
  ObjectProposal p;
  p.id = id;
  p.class_label = cls;
  p.box = b;
  return p;
}

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

PathwayOrder order_of(const ParsedUtterance& p) { return heuristic_order(p); }

}  // namespace

TEST_CASE("near and far are signed centroid distance") {
  const Aabb3 a = box(0, 0, 0), b = box(3, 4, 0);
  CHECK(eval_predicate(SpatialRelation::Near, a, b) == doctest::Approx(-5.0));
  CHECK(eval_predicate(SpatialRelation::Far, a, b) == doctest::Approx(5.0));
  CHECK(eval_predicate(SpatialRelation::Near, a, a) == 0.0);
}

TEST_CASE("horizontal relations read the yaw-rotated frame") {
  const Aabb3 ref = box(0, 0, 0);
  const Aabb3 left = box(-2, 0, 0), right = box(2, 0, 0);
  const Aabb3 front = box(0, -2, 0), back = box(0, 2, 0);
  CHECK(eval_predicate(SpatialRelation::LeftOf, left, ref) == doctest::Approx(2.0));
  CHECK(eval_predicate(SpatialRelation::RightOf, right, ref) == doctest::Approx(2.0));
  CHECK(eval_predicate(SpatialRelation::FrontOf, front, ref) == doctest::Approx(2.0));
  CHECK(eval_predicate(SpatialRelation::Behind, back, ref) == doctest::Approx(2.0));
  CHECK(eval_predicate(SpatialRelation::LeftOf, right, ref) == doctest::Approx(-2.0));

  // A quarter turn makes +y read as +x: what was behind is now to the right.
  PredicateConfig turned;
  turned.yaw = 3.14159265358979323846 / 2.0;
  CHECK(eval_predicate(SpatialRelation::RightOf, back, ref, std::nullopt, turned) ==
        doctest::Approx(2.0));
  CHECK(eval_predicate(SpatialRelation::Behind, left, ref, std::nullopt, turned) ==
        doctest::Approx(2.0));
}

TEST_CASE("vertical relations gate on footprint overlap") {
  const Aabb3 ref = box(0, 0, 0);
  const Aabb3 above = box(0.2, -0.1, 2.0);
  const Aabb3 disjoint = box(5, 5, 2.0);
  CHECK(eval_predicate(SpatialRelation::Above, above, ref) == doctest::Approx(2.0));
  CHECK(eval_predicate(SpatialRelation::Above, disjoint, ref) == -kInf);
  CHECK(eval_predicate(SpatialRelation::Below, box(0, 0, -2), ref) == doctest::Approx(2.0));
  CHECK(eval_predicate(SpatialRelation::Below, box(5, 5, -2), ref) == -kInf);
}

TEST_CASE("on requires near-contact within the configured gap") {
  const Aabb3 desk = box(0, 0, 0.5, 2, 1, 1);           // top at 1.0
  const Aabb3 resting = box(0, 0, 1.25, 0.5, 0.5, 0.5); // bottom at 1.0
  const Aabb3 hovering = box(0, 0, 1.45, 0.5, 0.5, 0.5); // bottom at 1.2, gap 0.2
  const Aabb3 sunk = box(0, 0, 1.15, 0.5, 0.5, 0.5);     // bottom at 0.9, sunk in
  CHECK(eval_predicate(SpatialRelation::On, resting, desk) > 0.0);
  CHECK(eval_predicate(SpatialRelation::On, hovering, desk) == -kInf);
  CHECK(eval_predicate(SpatialRelation::On, sunk, desk) > 0.0);

  PredicateConfig loose;
  loose.on_gap = 0.3;
  CHECK(eval_predicate(SpatialRelation::On, hovering, desk, std::nullopt, loose) > 0.0);

  // Under is the mirror: the desk is under the resting object.
  CHECK(eval_predicate(SpatialRelation::Under, desk, resting) > 0.0);
  CHECK(eval_predicate(SpatialRelation::Under, desk, hovering) == -kInf);
}

TEST_CASE("between peaks on the segment and needs ref2 exactly") {
  const Aabb3 a = box(-2, 0, 0), b = box(2, 0, 0);
  const Aabb3 mid = box(0, 0, 0), off = box(0, 3, 0);
  CHECK(eval_predicate(SpatialRelation::Between, mid, a, std::optional<Aabb3>(b)) == 0.0);
  CHECK(eval_predicate(SpatialRelation::Between, off, a, std::optional<Aabb3>(b)) < 0.0);
  CHECK_THROWS_AS(eval_predicate(SpatialRelation::Between, mid, a), std::invalid_argument);
  CHECK_THROWS_AS(eval_predicate(SpatialRelation::Near, mid, a, std::optional<Aabb3>(b)),
                  std::invalid_argument);
}

TEST_CASE("find_best takes the argmax and breaks ties by lowest id") {
  const ObjectProposal ref = prop(0, "tv", box(0, 0, 0));
  const ObjectProposal far_chair = prop(2, "chair", box(5, 0, 0));
  const ObjectProposal tie_hi = prop(9, "chair", box(0, 1, 0));
  const ObjectProposal tie_lo = prop(4, "chair", box(0, -1, 0));
  const std::vector<const ObjectProposal*> cands = {&far_chair, &tie_hi, &tie_lo};
  const ObjectProposal* best = find_best(ref, SpatialRelation::Near, cands);
  CHECK(best->id == 4);  // both ties are at distance 1; lowest id wins
  CHECK_THROWS_AS(find_best(ref, SpatialRelation::Near, {}), std::invalid_argument);
}

TEST_CASE("all-unique chain grounds without touching the rng") {
  Scene scene;
  scene.scene_id = "s";
  scene.proposals = {prop(0, "pillow", box(0, 0, 1)), prop(1, "bed", box(0, 0, 0))};
  const auto parse = manual_parse({"pillow", "bed"}, 0, {{0, SpatialRelation::On, 1, {}}});
  LocalizeStats stats;
  const auto chain = localize_chain(parse, order_of(parse), scene, 7, {}, &stats);
  REQUIRE(chain.assignments.size() == 2);
  for (const auto& a : chain.assignments) CHECK(a.provenance == Provenance::Unique);
  CHECK(stats.rng_draws == 0);
}

TEST_CASE("relation resolves the two-desks scene through the inverse view") {
  // Utterance mentions the monitor on the desk; the desk mention must pick
  // the desk carrying the monitor even though the triplet points the other
  // way (monitor On desk -> desk Under monitor).
  Scene scene;
  scene.scene_id = "desks";
  scene.proposals = {
      prop(0, "desk", box(-3, 0, 0.4, 1.6, 0.8, 0.8)),   // top at 0.8
      prop(1, "desk", box(3, 0, 0.55, 1.6, 0.8, 1.1)),   // taller desk, top at 1.1
      prop(2, "monitor", box(3, 0, 1.35, 0.6, 0.2, 0.5)) // resting on desk 1
  };
  const auto parse = manual_parse({"monitor", "desk"}, 0, {{0, SpatialRelation::On, 1, {}}});
  LocalizeStats stats;
  const auto chain = localize_chain(parse, order_of(parse), scene, 99, {}, &stats);
  // Pathway order is desk then monitor.
  REQUIRE(chain.assignments.size() == 2);
  const Assignment& desk = chain.assignments[0];
  CHECK(desk.mention == 1);
  CHECK(desk.proposal_id == 1);
  CHECK(desk.provenance == Provenance::RelationResolved);
  const Assignment& monitor = chain.assignments[1];
  CHECK(monitor.provenance == Provenance::Unique);
  CHECK(stats.rng_draws == 0);
}

TEST_CASE("recursion grounds the anchor of an anchor") {
  // Two couch+pillow stacks; the tv disambiguates the couch, the couch
  // disambiguates the pillow.
  Scene scene;
  scene.scene_id = "livingroom";
  scene.proposals = {
      prop(0, "tv", box(0, 4, 1)),
      prop(1, "couch", box(-3, 0, 0.25, 2, 1, 0.5)),
      prop(2, "couch", box(3, 0, 0.25, 2, 1, 0.5)),
      prop(3, "pillow", box(-3, 0, 0.6, 0.4, 0.4, 0.2)),
      prop(4, "pillow", box(3, 0, 0.6, 0.4, 0.4, 0.2)),
  };
  const auto parse = manual_parse(
      {"pillow", "couch", "tv"}, 0,
      {{0, SpatialRelation::On, 1, {}}, {1, SpatialRelation::RightOf, 2, {}}});
  LocalizeStats stats;
  const auto chain = localize_chain(parse, order_of(parse), scene, 5, {}, &stats);
  REQUIRE(chain.assignments.size() == 3);
  // Order: tv, couch, pillow.
  CHECK(chain.assignments[0].mention == 2);
  CHECK(chain.assignments[0].provenance == Provenance::Unique);
  CHECK(chain.assignments[1].proposal_id == 2);  // the couch at +x
  CHECK(chain.assignments[1].provenance == Provenance::RelationResolved);
  CHECK(chain.assignments[2].proposal_id == 4);  // the pillow on that couch
  CHECK(chain.assignments[2].provenance == Provenance::RelationResolved);
  CHECK(stats.rng_draws == 0);
}

TEST_CASE("missing class yields unresolved, ambiguous class falls back to the rng") {
  Scene scene;
  scene.scene_id = "s";
  scene.proposals = {prop(0, "chair", box(0, 0, 0)), prop(1, "chair", box(2, 0, 0))};
  const auto parse = manual_parse({"chair", "lamp"}, 0, {});
  LocalizeStats stats;
  const auto chain = localize_chain(parse, order_of(parse), scene, 3, {}, &stats);
  REQUIRE(chain.assignments.size() == 2);
  const Assignment& lamp = chain.assignments[0];  // later-mentioned anchor first
  CHECK(lamp.mention == 1);
  CHECK(lamp.provenance == Provenance::Unresolved);
  CHECK(lamp.proposal_id == -1);
  const Assignment& chair = chain.assignments[1];
  CHECK(chair.provenance == Provenance::RandomFallback);
  CHECK((chair.proposal_id == 0 || chair.proposal_id == 1));
  CHECK(stats.rng_draws == 1);

  // Same seed, same draw; the fallback is deterministic.
  const auto again = localize_chain(parse, order_of(parse), scene, 3);
  CHECK(again.assignments[1].proposal_id == chain.assignments[1].proposal_id);
}

TEST_CASE("mutual relations between ambiguous mentions terminate") {
  Scene scene;
  scene.scene_id = "s";
  scene.proposals = {prop(0, "chair", box(0, 0, 0)), prop(1, "chair", box(4, 0, 0)),
                     prop(2, "desk", box(0.5, 0, 0)), prop(3, "desk", box(4.5, 0, 0))};
  const auto parse = manual_parse(
      {"chair", "desk"}, 0,
      {{0, SpatialRelation::Near, 1, {}}, {1, SpatialRelation::Near, 0, {}}});
  LocalizeStats stats;
  const auto chain = localize_chain(parse, order_of(parse), scene, 11, {}, &stats);
  REQUIRE(chain.assignments.size() == 2);
  // Localizing the desk recurses into the chair, whose own relations
  // dead-end in the cycle guard; the chair falls back to the rng and the
  // desk then resolves against the drawn chair.
  CHECK(chain.assignments[0].mention == 1);
  CHECK(chain.assignments[0].provenance == Provenance::RelationResolved);
  CHECK(chain.assignments[1].provenance == Provenance::RandomFallback);
  CHECK(stats.rng_draws == 1);
  const std::int64_t desk_id = chain.assignments[0].proposal_id;
  const std::int64_t chair_id = chain.assignments[1].proposal_id;
  CHECK(desk_id == (chair_id == 0 ? 2 : 3));
}

TEST_CASE("localize_chain validates the order size") {
  Scene scene;
  scene.scene_id = "s";
  scene.proposals = {prop(0, "chair", box(0, 0, 0))};
  const auto parse = manual_parse({"chair"}, 0, {});
  PathwayOrder bad;
  CHECK_THROWS_AS(localize_chain(parse, bad, scene, 0), std::invalid_argument);
}

TEST_CASE("anchor precision compares by mention, never counting unresolved") {
  GroundedChain a, b;
  a.utterance_id = b.utterance_id = "u";
  a.assignments = {{0, 5, Provenance::Unique},
                   {1, 7, Provenance::RelationResolved},
                   {2, 9, Provenance::RandomFallback},
                   {3, 2, Provenance::RelationResolved}};
  b.assignments = a.assignments;
  CHECK(anchor_precision(a, b) == 1.0);

  // Chains may list mentions in different orders.
  std::reverse(b.assignments.begin(), b.assignments.end());
  CHECK(anchor_precision(a, b) == 1.0);

  b.assignments = a.assignments;
  b.assignments[1].proposal_id = 8;
  CHECK(anchor_precision(a, b) == 0.75);

  GroundedChain unresolved = a;
  for (auto& x : unresolved.assignments) {
    x.proposal_id = -1;
    x.provenance = Provenance::Unresolved;
  }
  CHECK(anchor_precision(unresolved, a) == 0.0);
  CHECK(anchor_precision(unresolved, unresolved) == 0.0);  // even against itself

  GroundedChain smaller = a;
  smaller.assignments.pop_back();
  CHECK_THROWS_AS(anchor_precision(a, smaller), std::invalid_argument);

  GroundedChain different = a;
  different.assignments[0].mention = 42;
  CHECK_THROWS_AS(anchor_precision(a, different), std::invalid_argument);

  GroundedChain empty;
  CHECK_THROWS_AS(anchor_precision(empty, empty), std::invalid_argument);
}

TEST_CASE("provenance names round-trip") {
  for (int i = 0; i < 4; ++i) {
    const auto p = static_cast<Provenance>(i);
    const auto back = provenance_from_name(provenance_name(p));
    REQUIRE(back.has_value());
    CHECK(*back == p);
  }
  CHECK_FALSE(provenance_from_name("psychic").has_value());
}
