#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "refchain/parse.hpp"
#include "refchain/pathway.hpp"
#include "refchain/rng.hpp"
#include "refchain/scene.hpp"

namespace refchain {

enum class Provenance { Unique, RelationResolved, RandomFallback, Unresolved };

const char* provenance_name(Provenance p);
std::optional<Provenance> provenance_from_name(std::string_view name);

struct Assignment {
  std::size_t mention = 0;
  // Proposal id; meaningless when provenance == Unresolved.
  std::int64_t proposal_id = -1;
  Provenance provenance = Provenance::Unresolved;

  friend bool operator==(const Assignment&, const Assignment&) = default;
};

// One assignment per mention, listed in pathway order.
struct GroundedChain {
  std::string utterance_id;
  std::vector<Assignment> assignments;
};

struct PredicateConfig {
  // Maximum vertical gap between a supported bottom and a supporting top for
  // the On/Under contact test, meters.
  double on_gap = 0.15;
  // Rotation of the reference frame around z, radians; left/right and
  // front/behind are evaluated in the rotated frame. The default frame is
  // allocentric: -x is left, -y is front.
  double yaw = 0.0;
};

// Score of `rel(subject, ref1[, ref2])`; higher fits better. Vertical
// relations gate on horizontal footprint overlap and return -infinity when
// the gate fails; On/Under additionally require near-contact within
// cfg.on_gap. ref2 is required exactly for Between (else invalid_argument).
double eval_predicate(SpatialRelation rel, const Aabb3& subject, const Aabb3& ref1,
                      const std::optional<Aabb3>& ref2 = std::nullopt,
                      const PredicateConfig& cfg = {});

// Argmax of eval_predicate over candidates (candidate as subject, localized
// proposal as reference); ties fall to the lowest proposal id. Throws
// std::invalid_argument on an empty candidate set.
const ObjectProposal* find_best(const ObjectProposal& localized, SpatialRelation rel,
                                const std::vector<const ObjectProposal*>& candidates,
                                const std::optional<Aabb3>& ref2 = std::nullopt,
                                const PredicateConfig& cfg = {});

struct LocalizeStats {
  std::uint64_t rng_draws = 0;
};

// Grounds every mention of the parse against the scene, visiting mentions in
// pathway order. Per mention: a unique same-class proposal grounds
// immediately; otherwise each relation triplet touching the mention is tried
// in parse order (object-side triplets seen through the inverted relation),
// localizing the related mention recursively when needed and resolving via
// find_best; when no triplet applies, a uniform draw over the same-class
// candidates decides. A class absent from the scene yields Unresolved.
// Deterministic for fixed (parse, order, scene, seed).
GroundedChain localize_chain(const ParsedUtterance& parse, const PathwayOrder& order,
                             const Scene& scene, std::uint64_t seed,
                             const PredicateConfig& cfg = {}, LocalizeStats* stats = nullptr);

// Fraction of mentions assigned the same proposal id; Unresolved entries
// never match. Throws std::invalid_argument when the chains cover different
// mention sets.
double anchor_precision(const GroundedChain& pred, const GroundedChain& gt);

}  // namespace refchain
