#include "refchain/labels.hpp"

#include <fstream>
#include <stdexcept>
#include <unordered_set>

namespace refchain {

namespace {

std::string squeeze(const std::string& raw) {
  std::string out;
  bool in_space = true;
  for (char c : raw) {
    const unsigned char u = static_cast<unsigned char>(c);
    char mapped = c;
    if (u >= 'A' && u <= 'Z') mapped = static_cast<char>(c - 'A' + 'a');
    const bool space = mapped == ' ' || mapped == '\t' || mapped == '\r';
    if (space) {
      if (!in_space) out.push_back(' ');
      in_space = true;
    } else {
      out.push_back(mapped);
      in_space = false;
    }
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

}  // namespace

LabelSet::LabelSet(std::vector<std::string> labels) : labels_(std::move(labels)) {}

LabelSet LabelSet::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("label set: cannot open " + path);
  std::vector<std::string> labels;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string label = squeeze(line);
    if (label.empty()) continue;
    if (!seen.insert(label).second)
      throw std::runtime_error("label set: duplicate label '" + label + "' at " + path + ":" +
                               std::to_string(lineno));
    labels.push_back(label);
  }
  if (labels.empty()) throw std::runtime_error("label set: no labels in " + path);
  return LabelSet(std::move(labels));
}

bool LabelSet::contains(const std::string& label) const {
  return index_of(label) != npos;
}

std::size_t LabelSet::index_of(const std::string& label) const {
  for (std::size_t i = 0; i < labels_.size(); ++i)
    if (labels_[i] == label) return i;
  return npos;
}

}  // namespace refchain
