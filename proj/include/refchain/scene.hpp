#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "refchain/labels.hpp"

namespace refchain {

// Axis-aligned box: center plus full side lengths, meters. World frame is
// z-up; every vertical predicate relies on that convention.
struct Aabb3 {
  double center[3] = {0.0, 0.0, 0.0};
  double extent[3] = {1.0, 1.0, 1.0};

  double min(int axis) const { return center[axis] - 0.5 * extent[axis]; }
  double max(int axis) const { return center[axis] + 0.5 * extent[axis]; }
};

struct ObjectProposal {
  std::int64_t id = 0;
  std::string class_label;
  Aabb3 box;
};

struct Scene {
  std::string scene_id;
  std::vector<ObjectProposal> proposals;

  // Pointer into proposals, or nullptr. Ids are unique in a valid scene.
  const ObjectProposal* find_proposal(std::int64_t id) const;
};

struct SceneViolation {
  std::int64_t proposal_id;  // -1 for scene-level problems
  std::string message;
};

// Empty report iff every type invariant holds: unique ids, classes from
// `labels`, positive finite extents, finite centers, 1 <= count <= max_proposals.
std::vector<SceneViolation> validate_scene(const Scene& scene, const LabelSet& labels,
                                           std::size_t max_proposals = 52);

// Seeded synthetic scene: for each class (iterated in sorted order) places
// `count` boxes uniformly inside `bounds`, shrunk so boxes fit. Ids are
// sequential from 0. Deterministic for fixed arguments.
// Throws std::invalid_argument when the total count exceeds max_proposals or
// is zero, or when bounds are degenerate.
Scene gen_synthetic_scene(std::uint64_t seed, const std::map<std::string, std::size_t>& spec,
                          const Aabb3& bounds, std::size_t max_proposals = 52);

}  // namespace refchain
