#include "refchain/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace refchain {

namespace {

using ordered_json = nlohmann::ordered_json;

[[noreturn]] void fail(const std::string& where, const std::string& reason) {
  throw IoError(where, reason);
}

ordered_json parse_json(const std::string& text, const std::string& where) {
  ordered_json doc = ordered_json::parse(text, nullptr, false);
  if (doc.is_discarded()) fail(where, "not valid JSON");
  return doc;
}

const ordered_json& need_field(const ordered_json& obj, const char* key, const std::string& path) {
  if (!obj.is_object()) fail(path, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) fail(path.empty() ? key : path + "." + key, "missing field");
  return *it;
}

std::string need_string(const ordered_json& obj, const char* key, const std::string& path) {
  const ordered_json& v = need_field(obj, key, path);
  if (!v.is_string()) fail(path.empty() ? key : path + "." + key, "expected a string");
  return v.get<std::string>();
}

std::int64_t need_int(const ordered_json& obj, const char* key, const std::string& path) {
  const ordered_json& v = need_field(obj, key, path);
  if (!v.is_number_integer()) fail(path.empty() ? key : path + "." + key, "expected an integer");
  return v.get<std::int64_t>();
}

std::size_t need_size(const ordered_json& obj, const char* key, const std::string& path) {
  const std::int64_t v = need_int(obj, key, path);
  if (v < 0) fail(path.empty() ? key : path + "." + key, "expected a non-negative integer");
  return static_cast<std::size_t>(v);
}

void read_vec3(const ordered_json& obj, const char* key, const std::string& path, double out[3],
               bool require_positive) {
  const std::string field_path = path.empty() ? key : path + "." + key;
  const ordered_json& v = need_field(obj, key, path);
  if (!v.is_array() || v.size() != 3) fail(field_path, "expected an array of 3 numbers");
  for (std::size_t i = 0; i < 3; ++i) {
    if (!v[i].is_number()) fail(field_path + "[" + std::to_string(i) + "]", "expected a number");
    const double x = v[i].get<double>();
    if (!std::isfinite(x))
      fail(field_path + "[" + std::to_string(i) + "]", "expected a finite number");
    if (require_positive && x <= 0.0)
      fail(field_path + "[" + std::to_string(i) + "]", "expected a positive number");
    out[i] = x;
  }
}

ordered_json vec3_json(const double v[3]) { return ordered_json::array({v[0], v[1], v[2]}); }

void reject_unknown_keys(const ordered_json& obj, std::initializer_list<const char*> known,
                         const std::string& path) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    const bool ok = std::any_of(known.begin(), known.end(),
                                [&it](const char* k) { return it.key() == k; });
    if (!ok) fail(path.empty() ? it.key() : path + "." + it.key(), "unknown field");
  }
}

std::string relation_lc(SpatialRelation rel) { return relation_name(rel); }

template <typename Record, typename FromText>
std::vector<Record> records_from_jsonl(const std::string& text, FromText from_text) {
  std::vector<Record> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(from_text(line));
    } catch (const IoError& e) {
      fail("line " + std::to_string(line_no), e.what());
    }
  }
  return out;
}

}  // namespace

std::string scene_to_json(const Scene& scene) {
  ordered_json doc;
  doc["scene_id"] = scene.scene_id;
  doc["proposals"] = ordered_json::array();
  for (const ObjectProposal& p : scene.proposals) {
    ordered_json obj;
    obj["id"] = p.id;
    obj["class"] = p.class_label;
    obj["center"] = vec3_json(p.box.center);
    obj["extent"] = vec3_json(p.box.extent);
    doc["proposals"].push_back(std::move(obj));
  }
  return doc.dump();
}

Scene scene_from_json_text(const std::string& text) {
  const ordered_json doc = parse_json(text, "scene");
  reject_unknown_keys(doc, {"scene_id", "proposals"}, "");
  Scene scene;
  scene.scene_id = need_string(doc, "scene_id", "");
  const ordered_json& proposals = need_field(doc, "proposals", "");
  if (!proposals.is_array()) fail("proposals", "expected an array");
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    const std::string path = "proposals[" + std::to_string(i) + "]";
    const ordered_json& obj = proposals[i];
    if (!obj.is_object()) fail(path, "expected an object");
    reject_unknown_keys(obj, {"id", "class", "center", "extent"}, path);
    ObjectProposal p;
    p.id = need_int(obj, "id", path);
    p.class_label = need_string(obj, "class", path);
    read_vec3(obj, "center", path, p.box.center, false);
    read_vec3(obj, "extent", path, p.box.extent, true);
    for (const ObjectProposal& prev : scene.proposals)
      if (prev.id == p.id) fail(path + ".id", "duplicate proposal id");
    scene.proposals.push_back(std::move(p));
  }
  return scene;
}

std::string corpus_record_to_json(const CorpusRecord& record) {
  ordered_json doc;
  doc["utterance_id"] = record.utterance_id;
  doc["scene_id"] = record.scene_id;
  doc["text"] = record.text;
  if (record.target_id) doc["target_id"] = *record.target_id;
  return doc.dump();
}

CorpusRecord corpus_record_from_json_text(const std::string& text) {
  const ordered_json doc = parse_json(text, "corpus record");
  reject_unknown_keys(doc, {"utterance_id", "scene_id", "text", "target_id"}, "");
  CorpusRecord record;
  record.utterance_id = need_string(doc, "utterance_id", "");
  record.scene_id = need_string(doc, "scene_id", "");
  record.text = need_string(doc, "text", "");
  if (doc.contains("target_id")) record.target_id = need_int(doc, "target_id", "");
  if (record.utterance_id.empty()) fail("utterance_id", "must be non-empty");
  return record;
}

std::string pseudo_label_to_json(const PseudoLabelRecord& record) {
  ordered_json doc;
  doc["utterance_id"] = record.utterance_id;
  doc["scene_id"] = record.scene_id;
  doc["chain"] = ordered_json::array();
  for (const PseudoLabelEntry& e : record.chain) {
    ordered_json obj;
    obj["mention"] = e.mention;
    obj["class"] = e.class_label;
    obj["proposal_id"] = e.proposal_id;
    obj["order"] = e.order;
    obj["provenance"] = provenance_name(e.provenance);
    doc["chain"].push_back(std::move(obj));
  }
  return doc.dump();
}

PseudoLabelRecord pseudo_label_from_json_text(const std::string& text) {
  const ordered_json doc = parse_json(text, "pseudo-label record");
  reject_unknown_keys(doc, {"utterance_id", "scene_id", "chain"}, "");
  PseudoLabelRecord record;
  record.utterance_id = need_string(doc, "utterance_id", "");
  record.scene_id = need_string(doc, "scene_id", "");
  const ordered_json& chain = need_field(doc, "chain", "");
  if (!chain.is_array()) fail("chain", "expected an array");
  for (std::size_t i = 0; i < chain.size(); ++i) {
    const std::string path = "chain[" + std::to_string(i) + "]";
    const ordered_json& obj = chain[i];
    if (!obj.is_object()) fail(path, "expected an object");
    reject_unknown_keys(obj, {"mention", "class", "proposal_id", "order", "provenance"}, path);
    PseudoLabelEntry e;
    e.mention = need_size(obj, "mention", path);
    e.class_label = need_string(obj, "class", path);
    e.proposal_id = need_int(obj, "proposal_id", path);
    e.order = need_size(obj, "order", path);
    const std::string prov = need_string(obj, "provenance", path);
    const auto parsed = provenance_from_name(prov);
    if (!parsed) fail(path + ".provenance", "unknown provenance '" + prov + "'");
    e.provenance = *parsed;
    record.chain.push_back(std::move(e));
  }
  return record;
}

std::string parsed_utterance_to_json(const ParsedUtterance& parse) {
  ordered_json doc;
  doc["utterance_id"] = parse.utterance_id;
  doc["text"] = parse.text;
  doc["mentions"] = ordered_json::array();
  for (const Mention& m : parse.mentions) {
    ordered_json obj;
    obj["surface"] = m.surface;
    obj["class"] = m.canonical_class;
    obj["score"] = m.match_score;
    obj["token_index"] = m.mention_index;
    obj["role"] = m.role == MentionRole::Target ? "target" : "anchor";
    doc["mentions"].push_back(std::move(obj));
  }
  doc["triplets"] = ordered_json::array();
  for (const RelationTriplet& t : parse.triplets) {
    ordered_json obj;
    obj["subject"] = t.subject;
    obj["relation"] = relation_lc(t.relation);
    obj["object"] = t.object;
    if (t.second_object) obj["second_object"] = *t.second_object;
    doc["triplets"].push_back(std::move(obj));
  }
  doc["over_token_cap"] = parse.over_token_cap;
  doc["truncated_mentions"] = parse.truncated_mentions;
  return doc.dump();
}

ParsedUtterance parsed_utterance_from_json_text(const std::string& text) {
  const ordered_json doc = parse_json(text, "parse record");
  reject_unknown_keys(
      doc, {"utterance_id", "text", "mentions", "triplets", "over_token_cap", "truncated_mentions"},
      "");
  ParsedUtterance parse;
  parse.utterance_id = need_string(doc, "utterance_id", "");
  parse.text = need_string(doc, "text", "");
  const ordered_json& mentions = need_field(doc, "mentions", "");
  if (!mentions.is_array()) fail("mentions", "expected an array");
  std::size_t targets = 0;
  for (std::size_t i = 0; i < mentions.size(); ++i) {
    const std::string path = "mentions[" + std::to_string(i) + "]";
    const ordered_json& obj = mentions[i];
    if (!obj.is_object()) fail(path, "expected an object");
    reject_unknown_keys(obj, {"surface", "class", "score", "token_index", "role"}, path);
    Mention m;
    m.surface = need_string(obj, "surface", path);
    m.canonical_class = need_string(obj, "class", path);
    const ordered_json& score = need_field(obj, "score", path);
    if (!score.is_number()) fail(path + ".score", "expected a number");
    m.match_score = score.get<double>();
    m.mention_index = need_size(obj, "token_index", path);
    const std::string role = need_string(obj, "role", path);
    if (role == "target") {
      m.role = MentionRole::Target;
      ++targets;
    } else if (role == "anchor") {
      m.role = MentionRole::Anchor;
    } else {
      fail(path + ".role", "expected 'target' or 'anchor'");
    }
    parse.mentions.push_back(std::move(m));
  }
  if (!parse.mentions.empty() && targets != 1) fail("mentions", "expected exactly one target");
  const ordered_json& triplets = need_field(doc, "triplets", "");
  if (!triplets.is_array()) fail("triplets", "expected an array");
  for (std::size_t i = 0; i < triplets.size(); ++i) {
    const std::string path = "triplets[" + std::to_string(i) + "]";
    const ordered_json& obj = triplets[i];
    if (!obj.is_object()) fail(path, "expected an object");
    reject_unknown_keys(obj, {"subject", "relation", "object", "second_object"}, path);
    RelationTriplet t;
    t.subject = need_size(obj, "subject", path);
    t.object = need_size(obj, "object", path);
    const std::string rel = need_string(obj, "relation", path);
    const auto parsed_rel = relation_from_name(rel);
    if (!parsed_rel) fail(path + ".relation", "unknown relation '" + rel + "'");
    t.relation = *parsed_rel;
    if (obj.contains("second_object")) t.second_object = need_size(obj, "second_object", path);
    if ((t.relation == SpatialRelation::Between) != t.second_object.has_value())
      fail(path, "second_object is required exactly for between");
    const std::size_t n = parse.mentions.size();
    if (t.subject >= n || t.object >= n || (t.second_object && *t.second_object >= n))
      fail(path, "triplet references a mention out of range");
    parse.triplets.push_back(t);
  }
  const ordered_json& over = need_field(doc, "over_token_cap", "");
  if (!over.is_boolean()) fail("over_token_cap", "expected a boolean");
  parse.over_token_cap = over.get<bool>();
  const ordered_json& trunc = need_field(doc, "truncated_mentions", "");
  if (!trunc.is_boolean()) fail("truncated_mentions", "expected a boolean");
  parse.truncated_mentions = trunc.get<bool>();
  return parse;
}

std::string labels_to_text(const LabelSet& labels) {
  std::string out;
  for (const std::string& label : labels.labels()) {
    out += label;
    out += '\n';
  }
  return out;
}

std::vector<CorpusRecord> corpus_from_jsonl(const std::string& text) {
  return records_from_jsonl<CorpusRecord>(text, corpus_record_from_json_text);
}

std::string corpus_to_jsonl(const std::vector<CorpusRecord>& records) {
  std::string out;
  for (const CorpusRecord& r : records) {
    out += corpus_record_to_json(r);
    out += '\n';
  }
  return out;
}

std::vector<PseudoLabelRecord> pseudo_labels_from_jsonl(const std::string& text) {
  return records_from_jsonl<PseudoLabelRecord>(text, pseudo_label_from_json_text);
}

std::string pseudo_labels_to_jsonl(const std::vector<PseudoLabelRecord>& records) {
  std::string out;
  for (const PseudoLabelRecord& r : records) {
    out += pseudo_label_to_json(r);
    out += '\n';
  }
  return out;
}

PseudoLabelRecord make_pseudo_label(const ParsedUtterance& parse, const PathwayOrder& order,
                                    const GroundedChain& chain, const std::string& scene_id) {
  if (order.ordered_mentions.size() != parse.mentions.size() ||
      chain.assignments.size() != parse.mentions.size())
    throw IoError("", "make_pseudo_label: order, chain, and parse sizes differ");
  PseudoLabelRecord record;
  record.utterance_id = parse.utterance_id;
  record.scene_id = scene_id;
  for (std::size_t rank = 0; rank < order.ordered_mentions.size(); ++rank) {
    const std::size_t mention = order.ordered_mentions[rank];
    const Assignment& a = chain.assignments[rank];
    if (a.mention != mention)
      throw IoError("", "make_pseudo_label: chain is not in pathway order");
    PseudoLabelEntry e;
    e.mention = mention;
    e.class_label = parse.mentions[mention].canonical_class;
    e.proposal_id = a.provenance == Provenance::Unresolved ? -1 : a.proposal_id;
    e.order = rank;
    e.provenance = a.provenance;
    record.chain.push_back(std::move(e));
  }
  return record;
}

GroundedChain chain_from_pseudo_label(const PseudoLabelRecord& record) {
  GroundedChain chain;
  chain.utterance_id = record.utterance_id;
  std::vector<const PseudoLabelEntry*> by_rank(record.chain.size(), nullptr);
  for (const PseudoLabelEntry& e : record.chain) {
    if (e.order >= by_rank.size() || by_rank[e.order] != nullptr)
      throw IoError("chain", "order values must form 0..n-1");
    by_rank[e.order] = &e;
  }
  for (const PseudoLabelEntry* e : by_rank) {
    Assignment a;
    a.mention = e->mention;
    a.proposal_id = e->proposal_id;
    a.provenance = e->provenance;
    chain.assignments.push_back(a);
  }
  return chain;
}

std::vector<std::string> order_classes_from_pseudo_label(const PseudoLabelRecord& record) {
  std::vector<std::string> classes(record.chain.size());
  std::vector<bool> seen(record.chain.size(), false);
  for (const PseudoLabelEntry& e : record.chain) {
    if (e.order >= classes.size() || seen[e.order])
      throw IoError("chain", "order values must form 0..n-1");
    classes[e.order] = e.class_label;
    seen[e.order] = true;
  }
  return classes;
}

PipelineConfig config_from_text(const std::string& text) {
  PipelineConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = "line " + std::to_string(line_no);
    std::string body = line;
    if (auto hash = body.find('#'); hash != std::string::npos) body.resize(hash);
    const auto first = body.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) fail(where, "expected key = value");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    if (key.empty() || value.empty()) fail(where, "expected key = value");

    auto as_size = [&where, &value]() {
      try {
        const long long v = std::stoll(value);
        if (v < 1) throw std::invalid_argument("range");
        return static_cast<std::size_t>(v);
      } catch (const std::exception&) {
        fail(where, "expected a positive integer, got '" + value + "'");
      }
    };
    auto as_double = [&where, &value]() {
      try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size() || !std::isfinite(v)) throw std::invalid_argument("trail");
        return v;
      } catch (const std::exception&) {
        fail(where, "expected a finite number, got '" + value + "'");
      }
    };
    auto as_bool = [&where, &value]() {
      if (value == "true" || value == "1") return true;
      if (value == "false" || value == "0") return false;
      fail(where, "expected true or false, got '" + value + "'");
    };

    if (key == "d") cfg.decoder.d = as_size();
    else if (key == "proposal_slots") cfg.decoder.proposal_slots = as_size();
    else if (key == "chain_slots") cfg.decoder.chain_slots = as_size();
    else if (key == "heads") cfg.decoder.heads = as_size();
    else if (key == "num_classes") cfg.decoder.num_classes = as_size();
    else if (key == "mask_mode") {
      if (value == "causal") cfg.decoder.mask_mode = MaskMode::Causal;
      else if (value == "none") cfg.decoder.mask_mode = MaskMode::None;
      else fail(where, "expected causal or none, got '" + value + "'");
    } else if (key == "lambda_v") cfg.decoder.lambda_v = as_double();
    else if (key == "lambda_t") cfg.decoder.lambda_t = as_double();
    else if (key == "lambda_ref") cfg.decoder.lambda_ref = as_double();
    else if (key == "lambda_dist") cfg.decoder.lambda_dist = as_double();
    else if (key == "anchor_loss_enabled") cfg.decoder.anchor_loss_enabled = as_bool();
    else if (key == "on_gap") cfg.predicate.on_gap = as_double();
    else if (key == "yaw") cfg.predicate.yaw = as_double();
    else fail(where, "unknown key '" + key + "'");
  }
  cfg.decoder.validate();
  return cfg;
}

std::string config_to_text(const PipelineConfig& cfg) {
  std::ostringstream out;
  out << "d = " << cfg.decoder.d << '\n';
  out << "proposal_slots = " << cfg.decoder.proposal_slots << '\n';
  out << "chain_slots = " << cfg.decoder.chain_slots << '\n';
  out << "heads = " << cfg.decoder.heads << '\n';
  out << "num_classes = " << cfg.decoder.num_classes << '\n';
  out << "mask_mode = " << (cfg.decoder.mask_mode == MaskMode::Causal ? "causal" : "none") << '\n';
  out << "lambda_v = " << cfg.decoder.lambda_v << '\n';
  out << "lambda_t = " << cfg.decoder.lambda_t << '\n';
  out << "lambda_ref = " << cfg.decoder.lambda_ref << '\n';
  out << "lambda_dist = " << cfg.decoder.lambda_dist << '\n';
  out << "anchor_loss_enabled = " << (cfg.decoder.anchor_loss_enabled ? "true" : "false") << '\n';
  out << "on_gap = " << cfg.predicate.on_gap << '\n';
  out << "yaw = " << cfg.predicate.yaw << '\n';
  return out.str();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) fail(path, "read failed");
  return buf.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(path, "cannot open for writing");
  out << content;
  out.flush();
  if (!out) fail(path, "write failed");
}

}  // namespace refchain
