#pragma once

#include <map>
#include <string>
#include <vector>

#include "refchain/parse.hpp"

namespace refchain {

// Logical visiting order over the mentions of one parse: a permutation of
// mention indices with the target in the last slot.
struct PathwayOrder {
  std::vector<std::size_t> ordered_mentions;

  friend bool operator==(const PathwayOrder&, const PathwayOrder&) = default;
};

// Deterministic anchor ordering from the triplet dependency graph. Each
// triplet demands that its object (and second object) precede its subject;
// the target is excluded from the graph and appended last. Among
// simultaneously ready anchors the later-mentioned one is emitted first.
// Cycles are broken by dropping the constraint whose subject (then object)
// is mentioned earliest. The result depends only on the set of triplets,
// not their list order.
PathwayOrder heuristic_order(const ParsedUtterance& parse);

// Unit-cost edit distance between two label sequences.
std::size_t edit_distance(const std::vector<std::string>& a, const std::vector<std::string>& b);

// edit_distance divided by max(|a|, |b|); 0.0 when both are empty. 1.0 means
// every element is wrong.
double normalized_levenshtein(const std::vector<std::string>& a,
                              const std::vector<std::string>& b);

// ---------------------------------------------------------------------------
// External order files. Records follow the reply format the orders were
// produced in, `L: [pillow, bed]` / `R: [1: bed, t: pillow]`, with two
// extensions: a required `ID: <utterance_id>` line binds the record to its
// corpus row, and `Q:`/parenthesized explanation lines are ignored.

struct OrderRecordError {
  std::size_t line = 0;  // 1-based line in the order file; 0 when record-less
  std::string utterance_id;
  std::string message;
};

struct OrderIngestResult {
  std::map<std::string, PathwayOrder> orders;
  std::vector<OrderRecordError> errors;
};

// Parses an order file against already-parsed utterances. R-line names are
// resolved to mentions through match_class over each parse's mention classes;
// a record only lands in `orders` when its entries cover every mention
// exactly once, with the single `t:` entry last and naming the parse target.
OrderIngestResult parse_external_orders(const std::string& text,
                                        const std::map<std::string, ParsedUtterance>& parses,
                                        double match_threshold = 0.35);

// One record in the same format parse_external_orders reads; round-trips.
std::string serialize_order_record(const ParsedUtterance& parse, const PathwayOrder& order);

}  // namespace refchain
