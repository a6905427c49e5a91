#include "refchain/scene.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "refchain/rng.hpp"

namespace refchain {

const ObjectProposal* Scene::find_proposal(std::int64_t id) const {
  for (const auto& p : proposals)
    if (p.id == id) return &p;
  return nullptr;
}

std::vector<SceneViolation> validate_scene(const Scene& scene, const LabelSet& labels,
                                           std::size_t max_proposals) {
  std::vector<SceneViolation> report;
  if (scene.proposals.empty()) report.push_back({-1, "scene has no proposals"});
  if (scene.proposals.size() > max_proposals)
    report.push_back({-1, "proposal count " + std::to_string(scene.proposals.size()) +
                              " exceeds capacity " + std::to_string(max_proposals)});
  std::unordered_set<std::int64_t> seen;
  for (const auto& p : scene.proposals) {
    if (!seen.insert(p.id).second)
      report.push_back({p.id, "duplicate proposal id " + std::to_string(p.id)});
    if (!labels.contains(p.class_label))
      report.push_back({p.id, "class '" + p.class_label + "' not in label set"});
    for (int a = 0; a < 3; ++a) {
      if (!std::isfinite(p.box.center[a]) || !std::isfinite(p.box.extent[a])) {
        report.push_back({p.id, "non-finite box value"});
        break;
      }
    }
    for (int a = 0; a < 3; ++a) {
      if (p.box.extent[a] <= 0.0) {
        report.push_back({p.id, "non-positive extent component"});
        break;
      }
    }
  }
  return report;
}

Scene gen_synthetic_scene(std::uint64_t seed, const std::map<std::string, std::size_t>& spec,
                          const Aabb3& bounds, std::size_t max_proposals) {
  std::size_t total = 0;
  for (const auto& [cls, count] : spec) total += count;
  if (total == 0) throw std::invalid_argument("gen_synthetic_scene: empty spec");
  if (total > max_proposals)
    throw std::invalid_argument("gen_synthetic_scene: spec total " + std::to_string(total) +
                                " exceeds capacity " + std::to_string(max_proposals));
  for (int a = 0; a < 3; ++a)
    if (!(bounds.extent[a] > 0.0) || !std::isfinite(bounds.extent[a]) ||
        !std::isfinite(bounds.center[a]))
      throw std::invalid_argument("gen_synthetic_scene: degenerate bounds");

  RngStream rng(seed);
  Scene scene;
  scene.scene_id = "synthetic-" + std::to_string(seed);
  std::int64_t next_id = 0;
  // std::map iterates classes in sorted order, which pins the draw sequence.
  for (const auto& [cls, count] : spec) {
    for (std::size_t i = 0; i < count; ++i) {
      ObjectProposal p;
      p.id = next_id++;
      p.class_label = cls;
      for (int a = 0; a < 3; ++a) {
        // Extent between 10% and 50% of the room span, then a center placed
        // so the box stays inside bounds.
        const double span = bounds.extent[a];
        p.box.extent[a] = rng.next_in(0.1 * span, 0.5 * span);
        const double slack = 0.5 * (span - p.box.extent[a]);
        p.box.center[a] = bounds.center[a] + rng.next_in(-slack, slack);
      }
      scene.proposals.push_back(std::move(p));
    }
  }
  return scene;
}

}  // namespace refchain
