#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "refchain/augment.hpp"
#include "refchain/decoder.hpp"
#include "refchain/io.hpp"
#include "refchain/localize.hpp"
#include "refchain/metrics.hpp"
#include "refchain/parse.hpp"
#include "refchain/pathway.hpp"
#include "refchain/rng.hpp"
#include "refchain/scene.hpp"

namespace {

using namespace refchain;
using ordered_json = nlohmann::ordered_json;

struct GlobalOpts {
  std::uint64_t seed = 0;
  std::string labels_path;
  std::string lexicon_path;
  std::string config_path;
  std::string out_path;
  std::string mask_mode;
};

struct RecordFailure {
  std::size_t index = 0;
  std::string utterance_id;
  std::string message;
};

// Writes to --out when given, stdout otherwise.
void emit(const GlobalOpts& g, const std::string& content) {
  if (g.out_path.empty())
    std::cout << content;
  else
    write_file(g.out_path, content);
}

int report_failures(const std::vector<RecordFailure>& failures, std::size_t total) {
  if (failures.empty()) return 0;
  std::cerr << failures.size() << " of " << total << " records failed:\n";
  for (const RecordFailure& f : failures)
    std::cerr << "  record " << f.index + 1 << " (" << f.utterance_id << "): " << f.message
              << "\n";
  return 1;
}

PipelineConfig load_config(const GlobalOpts& g) {
  if (g.config_path.empty()) return PipelineConfig{};
  return config_from_text(read_file(g.config_path));
}

void apply_mask_mode(const GlobalOpts& g, DecoderConfig& cfg) {
  if (g.mask_mode.empty()) return;
  if (g.mask_mode == "causal")
    cfg.mask_mode = MaskMode::Causal;
  else if (g.mask_mode == "none")
    cfg.mask_mode = MaskMode::None;
  else
    throw IoError("--mask-mode", "expected causal or none, got '" + g.mask_mode + "'");
}

LabelSet load_labels(const GlobalOpts& g) {
  if (g.labels_path.empty()) throw IoError("--labels", "a label file is required");
  return LabelSet::load(g.labels_path);
}

RelationLexicon load_lexicon(const GlobalOpts& g) {
  if (g.lexicon_path.empty()) throw IoError("--lexicon", "a relation lexicon file is required");
  return RelationLexicon::load(g.lexicon_path);
}

// Scene files hold either one scene object or an array of scenes.
std::map<std::string, Scene> load_scenes(const std::string& path) {
  const std::string text = read_file(path);
  std::map<std::string, Scene> scenes;
  auto add = [&scenes](Scene&& s) {
    if (!scenes.emplace(s.scene_id, s).second)
      throw IoError("scene_id", "duplicate scene '" + s.scene_id + "'");
  };
  const auto probe = nlohmann::json::parse(text, nullptr, false);
  if (probe.is_array()) {
    for (std::size_t i = 0; i < probe.size(); ++i) add(scene_from_json_text(probe[i].dump()));
  } else {
    add(scene_from_json_text(text));
  }
  return scenes;
}

// Parses every corpus row. Failed rows land in `failures`; parses keep the
// row's utterance id.
std::vector<std::optional<ParsedUtterance>> parse_corpus(
    const std::vector<CorpusRecord>& corpus, const LabelSet& labels,
    const RelationLexicon& lexicon, std::vector<RecordFailure>& failures) {
  std::vector<std::optional<ParsedUtterance>> parses(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    ParseOutcome outcome = parse_utterance(corpus[i].text, labels, lexicon);
    if (!outcome.ok) {
      failures.push_back({i, corpus[i].utterance_id, outcome.error});
      continue;
    }
    outcome.parse.utterance_id = corpus[i].utterance_id;
    parses[i] = std::move(outcome.parse);
  }
  return parses;
}

int cmd_parse(const GlobalOpts& g, const std::string& corpus_path) {
  const LabelSet labels = load_labels(g);
  const RelationLexicon lexicon = load_lexicon(g);
  const auto corpus = corpus_from_jsonl(read_file(corpus_path));
  std::vector<RecordFailure> failures;
  const auto parses = parse_corpus(corpus, labels, lexicon, failures);
  std::string out;
  for (const auto& parse : parses)
    if (parse) {
      out += parsed_utterance_to_json(*parse);
      out += '\n';
    }
  emit(g, out);
  return report_failures(failures, corpus.size());
}

int cmd_order(const GlobalOpts& g, const std::string& corpus_path) {
  const LabelSet labels = load_labels(g);
  const RelationLexicon lexicon = load_lexicon(g);
  const auto corpus = corpus_from_jsonl(read_file(corpus_path));
  std::vector<RecordFailure> failures;
  const auto parses = parse_corpus(corpus, labels, lexicon, failures);
  std::string out;
  for (const auto& parse : parses)
    if (parse) {
      out += serialize_order_record(*parse, heuristic_order(*parse));
      out += '\n';
    }
  emit(g, out);
  return report_failures(failures, corpus.size());
}

int cmd_ground(const GlobalOpts& g, const std::string& scenes_path, const std::string& corpus_path,
               const std::string& orders_path) {
  const LabelSet labels = load_labels(g);
  const RelationLexicon lexicon = load_lexicon(g);
  const PipelineConfig cfg = load_config(g);
  const auto scenes = load_scenes(scenes_path);
  const auto corpus = corpus_from_jsonl(read_file(corpus_path));

  std::vector<RecordFailure> failures;
  const auto parses = parse_corpus(corpus, labels, lexicon, failures);

  // External orders override the heuristic for the records they cover.
  std::map<std::string, PathwayOrder> external_orders;
  if (!orders_path.empty()) {
    std::map<std::string, ParsedUtterance> by_id;
    for (const auto& parse : parses)
      if (parse) by_id.emplace(parse->utterance_id, *parse);
    OrderIngestResult ingest = parse_external_orders(read_file(orders_path), by_id);
    external_orders = std::move(ingest.orders);
    for (const OrderRecordError& e : ingest.errors)
      std::cerr << "orders line " << e.line << " (" << e.utterance_id << "): " << e.message
                << "\n";
  }

  std::vector<std::string> lines(corpus.size());
  std::vector<std::optional<RecordFailure>> ground_failures(corpus.size());
  // Records are independent: seeds derive from utterance ids, and every
  // output lands in its input slot, so the schedule cannot reorder anything.
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t ii = 0; ii < static_cast<std::int64_t>(corpus.size()); ++ii) {
    const std::size_t i = static_cast<std::size_t>(ii);
    if (!parses[i]) continue;
    const CorpusRecord& record = corpus[i];
    auto scene_it = scenes.find(record.scene_id);
    if (scene_it == scenes.end()) {
      ground_failures[i] = {i, record.utterance_id, "unknown scene '" + record.scene_id + "'"};
      continue;
    }
    try {
      const ParsedUtterance& parse = *parses[i];
      auto order_it = external_orders.find(record.utterance_id);
      const PathwayOrder order =
          order_it != external_orders.end() ? order_it->second : heuristic_order(parse);
      const std::uint64_t seed = derive_record_seed(g.seed, record.utterance_id);
      const GroundedChain chain =
          localize_chain(parse, order, scene_it->second, seed, cfg.predicate);
      lines[i] = pseudo_label_to_json(make_pseudo_label(parse, order, chain, record.scene_id));
    } catch (const std::exception& e) {
      ground_failures[i] = {i, record.utterance_id, e.what()};
    }
  }
  for (auto& f : ground_failures)
    if (f) failures.push_back(*f);
  std::sort(failures.begin(), failures.end(),
            [](const RecordFailure& a, const RecordFailure& b) { return a.index < b.index; });

  std::string out;
  for (const std::string& line : lines)
    if (!line.empty()) {
      out += line;
      out += '\n';
    }
  emit(g, out);
  return report_failures(failures, corpus.size());
}

int cmd_augment(const GlobalOpts& g, const std::string& corpus_path) {
  const LabelSet labels = load_labels(g);
  const RelationLexicon lexicon = load_lexicon(g);
  const auto corpus = corpus_from_jsonl(read_file(corpus_path));
  std::vector<RecordFailure> failures;
  const auto parses = parse_corpus(corpus, labels, lexicon, failures);
  std::string out;
  std::size_t skipped = 0;
  for (const auto& parse : parses) {
    if (!parse) continue;
    std::optional<ParsedUtterance> swapped = swap_target_anchor(*parse);
    if (!swapped) {
      ++skipped;
      continue;
    }
    swapped->utterance_id = parse->utterance_id + "-swap";
    out += parsed_utterance_to_json(*swapped);
    out += '\n';
  }
  emit(g, out);
  if (skipped > 0)
    std::cerr << skipped << " records not augmentable (need exactly 2 mentions and a relation)\n";
  return report_failures(failures, corpus.size());
}

ordered_json report_to_json(const CorpusReport& report) {
  ordered_json doc;
  doc["records_evaluated"] = report.records_evaluated;
  doc["records_skipped"] = report.records_skipped;
  doc["mean_anchor_precision"] = report.mean_anchor_precision;
  doc["mean_normalized_levenshtein"] = report.mean_normalized_levenshtein;
  ordered_json prov;
  for (std::size_t p = 0; p < report.provenance_counts.size(); ++p)
    prov[provenance_name(static_cast<Provenance>(p))] = report.provenance_counts[p];
  doc["provenance_counts"] = std::move(prov);
  doc["total_mentions"] = report.total_mentions;
  return doc;
}

int cmd_eval(const GlobalOpts& g, const std::string& pred_path, const std::string& gt_path) {
  const auto pred_records = pseudo_labels_from_jsonl(read_file(pred_path));
  const auto gt_records = pseudo_labels_from_jsonl(read_file(gt_path));

  std::map<std::string, GroundedChain> chains, gt_chains;
  std::map<std::string, std::vector<std::string>> orders, gt_orders;
  std::map<std::string, std::int64_t> pred_targets, gt_targets;
  for (const auto& r : pred_records) {
    chains[r.utterance_id] = chain_from_pseudo_label(r);
    orders[r.utterance_id] = order_classes_from_pseudo_label(r);
    if (!r.chain.empty()) pred_targets[r.utterance_id] = chains[r.utterance_id].assignments.back().proposal_id;
  }
  for (const auto& r : gt_records) {
    gt_chains[r.utterance_id] = chain_from_pseudo_label(r);
    gt_orders[r.utterance_id] = order_classes_from_pseudo_label(r);
    if (!r.chain.empty()) gt_targets[r.utterance_id] = gt_chains[r.utterance_id].assignments.back().proposal_id;
  }

  ordered_json doc = report_to_json(corpus_report(chains, gt_chains, orders, gt_orders));
  // Target accuracy runs over the ids both files cover.
  std::map<std::string, std::int64_t> common_pred, common_gt;
  for (const auto& [id, pid] : pred_targets) {
    auto it = gt_targets.find(id);
    if (it != gt_targets.end()) {
      common_pred[id] = pid;
      common_gt[id] = it->second;
    }
  }
  if (common_pred.empty())
    doc["referring_accuracy"] = nullptr;
  else
    doc["referring_accuracy"] = referring_accuracy(common_pred, common_gt);
  emit(g, doc.dump(2) + "\n");
  return 0;
}

int cmd_decode_demo(const GlobalOpts& g) {
  PipelineConfig cfg = load_config(g);
  DecoderConfig dec = g.config_path.empty() ? DecoderConfig::toy() : cfg.decoder;
  apply_mask_mode(g, dec);
  dec.validate();

  const ToyInstance inst = make_toy_instance(dec, g.seed);
  const ForwardCache cache = decode_chain(dec, inst.f, inst.mention_classes, inst.order, inst.params);
  const LossBundle loss = total_loss(cache, inst.targets, inst.params, dec);
  const double max_rel = grad_check(dec, g.seed);

  ordered_json doc;
  doc["config"] = {{"d", dec.d},
                   {"proposal_slots", dec.proposal_slots},
                   {"chain_slots", dec.chain_slots},
                   {"heads", dec.heads},
                   {"mask_mode", dec.mask_mode == MaskMode::Causal ? "causal" : "none"},
                   {"num_classes", dec.num_classes}};
  doc["seed"] = g.seed;
  doc["loss"] = {{"l_cls_v", loss.l_cls_v}, {"l_cls_t", loss.l_cls_t},
                 {"l_ref_p", loss.l_ref_p}, {"l_ref_cot", loss.l_ref_cot},
                 {"l_dist", loss.l_dist},   {"total", loss.total}};
  doc["per_position_ce_parallel"] = loss.per_position_ce_parallel;
  doc["per_position_ce_cot"] = loss.per_position_ce_cot;
  doc["grad_check"] = {{"max_rel_error", max_rel}, {"pass", max_rel < 1e-4}};
  emit(g, doc.dump(2) + "\n");
  return max_rel < 1e-4 ? 0 : 1;
}

int cmd_gen_scenes(const GlobalOpts& g, std::size_t count, const std::string& objects) {
  // `objects` is "class=count,class=count"; class names may contain spaces.
  std::map<std::string, std::size_t> spec;
  std::stringstream ss(objects);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0)
      throw IoError("--objects", "expected class=count items, got '" + item + "'");
    const std::string cls = item.substr(0, eq);
    const long long n = std::stoll(item.substr(eq + 1));
    if (n < 1) throw IoError("--objects", "counts must be positive");
    spec[cls] += static_cast<std::size_t>(n);
  }
  Aabb3 bounds;
  bounds.center[0] = bounds.center[1] = 0.0;
  bounds.center[2] = 1.25;
  bounds.extent[0] = bounds.extent[1] = 8.0;
  bounds.extent[2] = 2.5;

  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t scene_seed = splitmix64(g.seed ^ (0x9e3779b97f4a7c15ULL * (i + 1)));
    const Scene scene = gen_synthetic_scene(scene_seed, spec, bounds);
    arr.push_back(nlohmann::ordered_json::parse(scene_to_json(scene)));
  }
  emit(g, arr.dump(2) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Referring-chain pseudo-label pipeline"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--seed", g.seed, "Global RNG seed");
  app.add_option("--labels", g.labels_path, "Class label vocabulary, one per line");
  app.add_option("--lexicon", g.lexicon_path, "Relation phrase lexicon");
  app.add_option("--config", g.config_path, "key=value pipeline configuration");
  app.add_option("--out", g.out_path, "Output file (stdout when omitted)");
  app.add_option("--mask-mode", g.mask_mode, "Self-attention masking: causal|none")
      ->check(CLI::IsMember({"causal", "none"}));

  std::string corpus_path, scenes_path, orders_path, pred_path, gt_path;
  std::string objects = "chair=3,desk=2,monitor=2,pillow=2,couch=1";
  std::size_t count = 1;

  CLI::App* parse_cmd = app.add_subcommand("parse", "Parse a corpus into mention/relation records");
  parse_cmd->add_option("--corpus", corpus_path, "Corpus JSONL")->required();

  CLI::App* order_cmd = app.add_subcommand("order", "Emit heuristic pathway orders");
  order_cmd->add_option("--corpus", corpus_path, "Corpus JSONL")->required();

  CLI::App* ground_cmd = app.add_subcommand("ground", "Full pipeline: parse, order, localize");
  ground_cmd->add_option("--scenes", scenes_path, "Scene JSON (object or array)")->required();
  ground_cmd->add_option("--corpus", corpus_path, "Corpus JSONL")->required();
  ground_cmd->add_option("--orders", orders_path, "External order records overriding the heuristic");

  CLI::App* augment_cmd = app.add_subcommand("augment", "Target/anchor swap augmentation");
  augment_cmd->add_option("--corpus", corpus_path, "Corpus JSONL")->required();

  CLI::App* eval_cmd = app.add_subcommand("eval", "Compare two pseudo-label files");
  eval_cmd->add_option("--pred", pred_path, "Predicted pseudo-labels JSONL")->required();
  eval_cmd->add_option("--gt", gt_path, "Ground-truth pseudo-labels JSONL")->required();

  app.add_subcommand("decode-demo", "Run the decoder and gradient check on a toy instance");

  CLI::App* gen_cmd = app.add_subcommand("gen-scenes", "Generate synthetic scenes");
  gen_cmd->add_option("--count", count, "Number of scenes");
  gen_cmd->add_option("--objects", objects, "class=count,... composition");

  CLI11_PARSE(app, argc, argv);

  try {
    if (parse_cmd->parsed()) return cmd_parse(g, corpus_path);
    if (order_cmd->parsed()) return cmd_order(g, corpus_path);
    if (ground_cmd->parsed()) return cmd_ground(g, scenes_path, corpus_path, orders_path);
    if (augment_cmd->parsed()) return cmd_augment(g, corpus_path);
    if (eval_cmd->parsed()) return cmd_eval(g, pred_path, gt_path);
    if (app.get_subcommand("decode-demo")->parsed()) return cmd_decode_demo(g);
    if (gen_cmd->parsed()) return cmd_gen_scenes(g, count, objects);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
