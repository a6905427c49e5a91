#pragma once

#include <string>
#include <vector>

namespace refchain {

// Canonical object class vocabulary. Order is the order of first appearance
// in the source file; lookups are case-sensitive over already-normalized
// labels (lowercase, single spaces).
class LabelSet {
 public:
  LabelSet() = default;
  explicit LabelSet(std::vector<std::string> labels);

  // Loads one label per line; '#' comments and blank lines are ignored.
  // Throws std::runtime_error with the offending line number for duplicate or
  // empty-after-normalization labels.
  static LabelSet load(const std::string& path);

  const std::vector<std::string>& labels() const { return labels_; }
  bool contains(const std::string& label) const;
  std::size_t size() const { return labels_.size(); }

  // Index of `label`, or npos when absent.
  std::size_t index_of(const std::string& label) const;

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

 private:
  std::vector<std::string> labels_;
};

}  // namespace refchain
