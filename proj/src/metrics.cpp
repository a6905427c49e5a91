#include "refchain/metrics.hpp"

#include <set>
#include <stdexcept>

#include "refchain/pathway.hpp"

namespace refchain {

double referring_accuracy(const std::map<std::string, std::int64_t>& preds,
                          const std::map<std::string, std::int64_t>& gts) {
  if (preds.empty()) throw std::invalid_argument("referring_accuracy: empty corpus");
  if (preds.size() != gts.size())
    throw std::invalid_argument("referring_accuracy: prediction and gt key sets differ");
  std::size_t hits = 0;
  for (const auto& [id, pred] : preds) {
    auto it = gts.find(id);
    if (it == gts.end())
      throw std::invalid_argument("referring_accuracy: prediction and gt key sets differ");
    if (it->second == pred) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

CorpusReport corpus_report(const std::map<std::string, GroundedChain>& chains,
                           const std::map<std::string, GroundedChain>& gt_chains,
                           const std::map<std::string, std::vector<std::string>>& orders,
                           const std::map<std::string, std::vector<std::string>>& gt_orders) {
  CorpusReport report;

  // The id universe is the union of all four maps, so a record present on
  // only one side is counted as skipped rather than silently ignored.
  std::set<std::string> ids;
  for (const auto& [id, v] : chains) ids.insert(id);
  for (const auto& [id, v] : gt_chains) ids.insert(id);
  for (const auto& [id, v] : orders) ids.insert(id);
  for (const auto& [id, v] : gt_orders) ids.insert(id);

  double precision_sum = 0.0;
  double distance_sum = 0.0;
  for (const auto& id : ids) {
    auto chain_it = chains.find(id);
    auto gt_chain_it = gt_chains.find(id);
    auto order_it = orders.find(id);
    auto gt_order_it = gt_orders.find(id);
    if (chain_it == chains.end() || gt_chain_it == gt_chains.end() || order_it == orders.end() ||
        gt_order_it == gt_orders.end()) {
      ++report.records_skipped;
      continue;
    }
    double precision = 0.0;
    try {
      precision = anchor_precision(chain_it->second, gt_chain_it->second);
    } catch (const std::invalid_argument&) {
      ++report.records_skipped;
      continue;
    }
    precision_sum += precision;
    distance_sum += normalized_levenshtein(order_it->second, gt_order_it->second);
    for (const Assignment& a : chain_it->second.assignments) {
      ++report.provenance_counts[static_cast<std::size_t>(a.provenance)];
      ++report.total_mentions;
    }
    ++report.records_evaluated;
  }
  if (report.records_evaluated > 0) {
    report.mean_anchor_precision = precision_sum / static_cast<double>(report.records_evaluated);
    report.mean_normalized_levenshtein =
        distance_sum / static_cast<double>(report.records_evaluated);
  }
  return report;
}

}  // namespace refchain
