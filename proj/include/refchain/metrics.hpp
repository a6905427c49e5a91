#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "refchain/localize.hpp"

namespace refchain {

// Fraction of utterances whose predicted target proposal equals the ground
// truth. Throws std::invalid_argument when the key sets differ or are empty.
double referring_accuracy(const std::map<std::string, std::int64_t>& preds,
                          const std::map<std::string, std::int64_t>& gts);

// Corpus-level aggregate. Means run over the evaluated records only; the
// provenance histogram partitions every mention of the evaluated predicted
// chains, so its counts sum to total_mentions.
struct CorpusReport {
  std::size_t records_evaluated = 0;
  // Records present on only one side, or whose chains cover different
  // mention sets.
  std::size_t records_skipped = 0;
  double mean_anchor_precision = 0.0;
  double mean_normalized_levenshtein = 0.0;
  std::array<std::size_t, 4> provenance_counts{};  // indexed by Provenance
  std::size_t total_mentions = 0;
};

// Aligns the four maps by utterance id. A record is evaluated when both
// chains and both orders exist for its id and the chains cover the same
// mentions; every misalignment skips that record and bumps records_skipped.
CorpusReport corpus_report(const std::map<std::string, GroundedChain>& chains,
                           const std::map<std::string, GroundedChain>& gt_chains,
                           const std::map<std::string, std::vector<std::string>>& orders,
                           const std::map<std::string, std::vector<std::string>>& gt_orders);

}  // namespace refchain
