#include "refchain/localize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "refchain/augment.hpp"

namespace refchain {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double centroid_distance(const Aabb3& a, const Aabb3& b) {
  double s = 0.0;
  for (int i = 0; i < 3; ++i) {
    const double d = a.center[i] - b.center[i];
    s += d * d;
  }
  return std::sqrt(s);
}

// Overlap length of the two footprint intervals on `axis`; > 0 on all of
// x and y means the boxes overlap in plan view.
double interval_overlap(const Aabb3& a, const Aabb3& b, int axis) {
  return std::min(a.max(axis), b.max(axis)) - std::max(a.min(axis), b.min(axis));
}

bool footprints_overlap(const Aabb3& a, const Aabb3& b) {
  return interval_overlap(a, b, 0) > 0.0 && interval_overlap(a, b, 1) > 0.0;
}

}  // namespace

const char* provenance_name(Provenance p) {
  switch (p) {
    case Provenance::Unique: return "unique";
    case Provenance::RelationResolved: return "relation_resolved";
    case Provenance::RandomFallback: return "random_fallback";
    case Provenance::Unresolved: return "unresolved";
  }
  return "?";
}

std::optional<Provenance> provenance_from_name(std::string_view name) {
  for (int i = 0; i < 4; ++i) {
    const auto p = static_cast<Provenance>(i);
    if (name == provenance_name(p)) return p;
  }
  return std::nullopt;
}

double eval_predicate(SpatialRelation rel, const Aabb3& subject, const Aabb3& ref1,
                      const std::optional<Aabb3>& ref2, const PredicateConfig& cfg) {
  if ((rel == SpatialRelation::Between) != ref2.has_value())
    throw std::invalid_argument("eval_predicate: ref2 must be given exactly for Between");

  // Horizontal offsets in the yaw-rotated frame; vertical axis is unrotated.
  const double dx_raw = subject.center[0] - ref1.center[0];
  const double dy_raw = subject.center[1] - ref1.center[1];
  const double c = std::cos(cfg.yaw), s = std::sin(cfg.yaw);
  const double dx = c * dx_raw + s * dy_raw;
  const double dy = -s * dx_raw + c * dy_raw;
  const double dz = subject.center[2] - ref1.center[2];

  switch (rel) {
    case SpatialRelation::Near: return -centroid_distance(subject, ref1);
    case SpatialRelation::Far: return centroid_distance(subject, ref1);
    case SpatialRelation::LeftOf: return -dx;
    case SpatialRelation::RightOf: return dx;
    case SpatialRelation::FrontOf: return -dy;
    case SpatialRelation::Behind: return dy;
    case SpatialRelation::Above:
      return footprints_overlap(subject, ref1) ? dz : kNegInf;
    case SpatialRelation::Below:
      return footprints_overlap(subject, ref1) ? -dz : kNegInf;
    case SpatialRelation::On: {
      if (!footprints_overlap(subject, ref1)) return kNegInf;
      // Contact: the subject's bottom face sits within on_gap of the
      // reference's top face (resting on it, possibly sunk slightly).
      const double gap = subject.min(2) - ref1.max(2);
      return gap <= cfg.on_gap ? dz : kNegInf;
    }
    case SpatialRelation::Under: {
      if (!footprints_overlap(subject, ref1)) return kNegInf;
      const double gap = ref1.min(2) - subject.max(2);
      return gap <= cfg.on_gap ? -dz : kNegInf;
    }
    case SpatialRelation::Between: {
      const double detour = centroid_distance(subject, ref1) +
                            centroid_distance(subject, *ref2) -
                            centroid_distance(ref1, *ref2);
      return -std::abs(detour);
    }
  }
  return kNegInf;
}

const ObjectProposal* find_best(const ObjectProposal& localized, SpatialRelation rel,
                                const std::vector<const ObjectProposal*>& candidates,
                                const std::optional<Aabb3>& ref2, const PredicateConfig& cfg) {
  if (candidates.empty()) throw std::invalid_argument("find_best: empty candidate set");
  const ObjectProposal* best = nullptr;
  double best_score = kNegInf;
  for (const ObjectProposal* c : candidates) {
    const double sc = eval_predicate(rel, c->box, localized.box, ref2, cfg);
    if (!best || sc > best_score || (sc == best_score && c->id < best->id)) {
      best = c;
      best_score = sc;
    }
  }
  return best;
}

namespace {

// Recursive localization state for one utterance.
struct Localizer {
  const ParsedUtterance& parse;
  const Scene& scene;
  const PredicateConfig& cfg;
  RngStream& rng;
  std::size_t depth_cap;
  std::vector<std::optional<Assignment>> assigned;  // per mention
  std::vector<bool> visiting;                       // cycle guard

  std::vector<const ObjectProposal*> candidates_for(std::size_t mention) const {
    std::vector<const ObjectProposal*> out;
    for (const auto& p : scene.proposals)
      if (p.class_label == parse.mentions[mention].canonical_class) out.push_back(&p);
    // Id order pins both tie-breaks and the fallback draw.
    std::sort(out.begin(), out.end(),
              [](const ObjectProposal* a, const ObjectProposal* b) { return a->id < b->id; });
    return out;
  }

  // The relation pairs touching `mention`: subject-side triplets as-is, then
  // object-side triplets through the inverted relation. Between only binds
  // on the subject side (its endpoints have no binary inverse view).
  struct RelatePair {
    SpatialRelation rel;
    std::size_t other;
    std::optional<std::size_t> second;  // Between only
  };
  std::vector<RelatePair> relate(std::size_t mention) const {
    std::vector<RelatePair> out;
    for (const auto& t : parse.triplets)
      if (t.subject == mention) out.push_back({t.relation, t.object, t.second_object});
    for (const auto& t : parse.triplets)
      if (t.object == mention && t.relation != SpatialRelation::Between)
        out.push_back({invert_relation(t.relation), t.subject, std::nullopt});
    return out;
  }

  const ObjectProposal* proposal_of(std::size_t mention) const {
    const auto& a = assigned[mention];
    if (!a || a->provenance == Provenance::Unresolved) return nullptr;
    return scene.find_proposal(a->proposal_id);
  }

  // Grounds `mention` (and possibly related mentions, recursively). Always
  // leaves assigned[mention] set on return.
  void localize(std::size_t mention, std::size_t depth) {
    if (assigned[mention]) return;
    const auto cands = candidates_for(mention);
    if (cands.empty()) {
      assigned[mention] = Assignment{mention, -1, Provenance::Unresolved};
      return;
    }
    if (cands.size() == 1) {
      assigned[mention] = Assignment{mention, cands[0]->id, Provenance::Unique};
      return;
    }
    visiting[mention] = true;
    if (depth < depth_cap) {
      for (const auto& pair : relate(mention)) {
        // Resolve the related mention first (recursively when allowed);
        // skip the pair when that fails rather than aborting the chain.
        if (!assigned[pair.other]) {
          if (visiting[pair.other]) continue;
          localize(pair.other, depth + 1);
        }
        const ObjectProposal* ref = proposal_of(pair.other);
        if (!ref) continue;
        std::optional<Aabb3> ref2;
        if (pair.second) {
          if (!assigned[*pair.second]) {
            if (visiting[*pair.second]) continue;
            localize(*pair.second, depth + 1);
          }
          const ObjectProposal* ref2p = proposal_of(*pair.second);
          if (!ref2p) continue;
          ref2 = ref2p->box;
        }
        const ObjectProposal* best = find_best(*ref, pair.rel, cands, ref2, cfg);
        assigned[mention] = Assignment{mention, best->id, Provenance::RelationResolved};
        visiting[mention] = false;
        return;
      }
    }
    // No usable relation: uniform draw over the same-class candidates.
    const std::size_t k = rng.next_index(cands.size());
    assigned[mention] = Assignment{mention, cands[k]->id, Provenance::RandomFallback};
    visiting[mention] = false;
  }
};

}  // namespace

GroundedChain localize_chain(const ParsedUtterance& parse, const PathwayOrder& order,
                             const Scene& scene, std::uint64_t seed,
                             const PredicateConfig& cfg, LocalizeStats* stats) {
  if (order.ordered_mentions.size() != parse.mentions.size())
    throw std::invalid_argument("localize_chain: order does not cover the parse mentions");
  RngStream rng(seed);
  Localizer loc{parse,
                scene,
                cfg,
                rng,
                parse.mentions.size(),
                std::vector<std::optional<Assignment>>(parse.mentions.size()),
                std::vector<bool>(parse.mentions.size(), false)};
  for (std::size_t m : order.ordered_mentions) loc.localize(m, 0);

  GroundedChain chain;
  chain.utterance_id = parse.utterance_id;
  for (std::size_t m : order.ordered_mentions) chain.assignments.push_back(*loc.assigned[m]);
  if (stats) stats->rng_draws = rng.draw_count();
  return chain;
}

double anchor_precision(const GroundedChain& pred, const GroundedChain& gt) {
  if (pred.assignments.size() != gt.assignments.size())
    throw std::invalid_argument("anchor_precision: chains cover different mention sets");
  if (pred.assignments.empty())
    throw std::invalid_argument("anchor_precision: empty chains");
  // Align by mention index; the two chains may order mentions differently.
  std::size_t hits = 0;
  for (const auto& p : pred.assignments) {
    const Assignment* g = nullptr;
    for (const auto& cand : gt.assignments)
      if (cand.mention == p.mention) {
        g = &cand;
        break;
      }
    if (!g) throw std::invalid_argument("anchor_precision: chains cover different mention sets");
    if (p.provenance == Provenance::Unresolved || g->provenance == Provenance::Unresolved)
      continue;
    if (p.proposal_id == g->proposal_id) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(pred.assignments.size());
}

}  // namespace refchain
