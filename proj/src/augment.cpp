#include "refchain/augment.hpp"

namespace refchain {

SpatialRelation invert_relation(SpatialRelation rel) {
  switch (rel) {
    case SpatialRelation::LeftOf: return SpatialRelation::RightOf;
    case SpatialRelation::RightOf: return SpatialRelation::LeftOf;
    case SpatialRelation::FrontOf: return SpatialRelation::Behind;
    case SpatialRelation::Behind: return SpatialRelation::FrontOf;
    case SpatialRelation::Above: return SpatialRelation::Below;
    case SpatialRelation::Below: return SpatialRelation::Above;
    case SpatialRelation::On: return SpatialRelation::Under;
    case SpatialRelation::Under: return SpatialRelation::On;
    case SpatialRelation::Near:
    case SpatialRelation::Far:
    case SpatialRelation::Between: return rel;
  }
  return rel;
}

std::optional<ParsedUtterance> swap_target_anchor(const ParsedUtterance& parse) {
  if (parse.mentions.size() != 2 || parse.triplets.empty()) return std::nullopt;
  ParsedUtterance out = parse;
  for (auto& m : out.mentions)
    m.role = m.role == MentionRole::Target ? MentionRole::Anchor : MentionRole::Target;
  for (auto& t : out.triplets) {
    std::swap(t.subject, t.object);
    t.relation = invert_relation(t.relation);
    // With two mentions no triplet can carry a distinct second object, so
    // Between (which never appears here) needs no extra handling.
  }
  return out;
}

}  // namespace refchain
