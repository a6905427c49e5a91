#pragma once

#include <optional>

#include "refchain/parse.hpp"

namespace refchain {

// Relation seen from the other end: LeftOf<->RightOf, FrontOf<->Behind,
// Above<->Below, On<->Under; symmetric relations (Near, Far, Between) map to
// themselves. An involution over the whole enum.
SpatialRelation invert_relation(SpatialRelation rel);

// Referring augmentation for two-object utterances: exchanges target and
// anchor roles and rewrites every triplet from the new subject's viewpoint
// (endpoints swapped, relation inverted). Returns nothing when the parse has
// a mention count other than two or no triplets; applying it twice restores
// the original parse.
std::optional<ParsedUtterance> swap_target_anchor(const ParsedUtterance& parse);

}  // namespace refchain
