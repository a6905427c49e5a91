#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "refchain/decoder.hpp"
#include "refchain/labels.hpp"
#include "refchain/localize.hpp"
#include "refchain/parse.hpp"
#include "refchain/pathway.hpp"
#include "refchain/scene.hpp"

namespace refchain {

// Structured load failure: `where` names the offending location, either a
// JSON path ("proposals[2].extent") or a 1-based line ("line 7").
class IoError : public std::runtime_error {
 public:
  IoError(std::string where, const std::string& reason)
      : std::runtime_error(where.empty() ? reason : where + ": " + reason),
        where_(std::move(where)) {}
  const std::string& where() const { return where_; }

 private:
  std::string where_;
};

// One corpus row: an utterance bound to a scene, optionally with a known
// target proposal for evaluation.
struct CorpusRecord {
  std::string utterance_id;
  std::string scene_id;
  std::string text;
  std::optional<std::int64_t> target_id;

  friend bool operator==(const CorpusRecord&, const CorpusRecord&) = default;
};

// One grounded mention inside a pseudo-label record. `order` is the rank in
// the pathway; `proposal_id` is -1 for unresolved mentions.
struct PseudoLabelEntry {
  std::size_t mention = 0;
  std::string class_label;
  std::int64_t proposal_id = -1;
  std::size_t order = 0;
  Provenance provenance = Provenance::Unresolved;

  friend bool operator==(const PseudoLabelEntry&, const PseudoLabelEntry&) = default;
};

struct PseudoLabelRecord {
  std::string utterance_id;
  std::string scene_id;
  std::vector<PseudoLabelEntry> chain;

  friend bool operator==(const PseudoLabelRecord&, const PseudoLabelRecord&) = default;
};

// --- Canonical JSON serializers. Each *_to_json emits one compact JSON
// document with a fixed key order, so serialize(parse(x)) == x for any
// canonically produced x.
std::string scene_to_json(const Scene& scene);
Scene scene_from_json_text(const std::string& text);

std::string corpus_record_to_json(const CorpusRecord& record);
CorpusRecord corpus_record_from_json_text(const std::string& text);

std::string pseudo_label_to_json(const PseudoLabelRecord& record);
PseudoLabelRecord pseudo_label_from_json_text(const std::string& text);

// Parse records as emitted by the parse/augment subcommands.
std::string parsed_utterance_to_json(const ParsedUtterance& parse);
ParsedUtterance parsed_utterance_from_json_text(const std::string& text);

// Label vocabularies round-trip through plain text, one label per line.
std::string labels_to_text(const LabelSet& labels);

// --- JSONL: one record per non-empty line; errors carry the line number.
std::vector<CorpusRecord> corpus_from_jsonl(const std::string& text);
std::string corpus_to_jsonl(const std::vector<CorpusRecord>& records);
std::vector<PseudoLabelRecord> pseudo_labels_from_jsonl(const std::string& text);
std::string pseudo_labels_to_jsonl(const std::vector<PseudoLabelRecord>& records);

// --- Conversions between pipeline structures and pseudo-label records.
PseudoLabelRecord make_pseudo_label(const ParsedUtterance& parse, const PathwayOrder& order,
                                    const GroundedChain& chain, const std::string& scene_id);
// Reconstructs the grounded chain (assignments in rank order) and the
// rank-ordered class sequence of one record.
GroundedChain chain_from_pseudo_label(const PseudoLabelRecord& record);
std::vector<std::string> order_classes_from_pseudo_label(const PseudoLabelRecord& record);

// --- Flat key=value configuration covering every decoder field and
// geometric-predicate constant. Lines are `key = value`; blank lines and
// lines starting with '#' are ignored; unknown keys are errors.
struct PipelineConfig {
  DecoderConfig decoder;
  PredicateConfig predicate;
};
PipelineConfig config_from_text(const std::string& text);
std::string config_to_text(const PipelineConfig& cfg);

// --- Whole-file helpers; both throw IoError naming the file path.
std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

}  // namespace refchain
