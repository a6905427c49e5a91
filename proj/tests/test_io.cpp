#include <doctest.h>

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "refchain/io.hpp"
#include "refchain/labels.hpp"

using namespace refchain;

namespace {

Scene sample_scene() {
  Scene scene;
  scene.scene_id = "scene-17";
  ObjectProposal a;
  a.id = 0;
  a.class_label = "desk";
  a.box.center[0] = 1.25;
  a.box.center[1] = -0.5;
  a.box.center[2] = 0.4;
  a.box.extent[0] = 1.6;
  a.box.extent[1] = 0.8;
  a.box.extent[2] = 0.8;
  ObjectProposal b;
  b.id = 3;
  b.class_label = "monitor";
  b.box.center[2] = 1.1;
  scene.proposals = {a, b};
  return scene;
}

ParsedUtterance sample_parse() {
  ParsedUtterance p;
  p.utterance_id = "u-9";
  p.text = "the pillow between the bed and the dresser";
  const char* classes[3] = {"pillow", "bed", "dresser"};
  for (std::size_t i = 0; i < 3; ++i) {
    Mention m;
    m.surface = classes[i];
    m.canonical_class = classes[i];
    m.match_score = i == 0 ? 1.0 : 0.75;
    m.mention_index = 1 + 2 * i;
    m.role = i == 0 ? MentionRole::Target : MentionRole::Anchor;
    p.mentions.push_back(m);
  }
  RelationTriplet t;
  t.subject = 0;
  t.relation = SpatialRelation::Between;
  t.object = 1;
  t.second_object = 2;
  p.triplets.push_back(t);
  p.over_token_cap = true;
  return p;
}

}  // namespace

TEST_CASE("scene json round-trips byte for byte") {
  const Scene scene = sample_scene();
  const std::string text = scene_to_json(scene);
  const Scene back = scene_from_json_text(text);
  CHECK(back.scene_id == scene.scene_id);
  REQUIRE(back.proposals.size() == 2);
  CHECK(back.proposals[0].id == 0);
  CHECK(back.proposals[0].class_label == "desk");
  CHECK(back.proposals[0].box.center[0] == 1.25);
  CHECK(back.proposals[1].box.center[2] == 1.1);
  CHECK(scene_to_json(back) == text);
}

TEST_CASE("scene json errors name the offending path") {
  const auto expect_where = [](const std::string& text, const std::string& where) {
    try {
      scene_from_json_text(text);
      FAIL_CHECK("expected IoError at ", where);
    } catch (const IoError& e) {
      CHECK(e.where() == where);
    }
  };
  expect_where("not json at all", "scene");
  expect_where(R"({"proposals": []})", "scene_id");
  expect_where(R"({"scene_id": "s", "proposals": [], "extra": 1})", "extra");
  expect_where(
      R"({"scene_id": "s", "proposals": [{"id": 0, "class": "desk", "center": [0,0,0], "extent": [1,1,1]},
          {"id": 1, "class": "desk", "center": [0,0,0], "extent": [1,1,1]},
          {"id": 2, "class": "desk", "center": [0,0,0]}]})",
      "proposals[2].extent");
  expect_where(
      R"({"scene_id": "s", "proposals": [{"id": 0, "class": "desk", "center": [0,0,0], "extent": [1,0,1]}]})",
      "proposals[0].extent[1]");
  expect_where(
      R"({"scene_id": "s", "proposals": [{"id": 0, "class": "desk", "center": [0,null,0], "extent": [1,1,1]}]})",
      "proposals[0].center[1]");
  expect_where(
      R"({"scene_id": "s", "proposals": [{"id": 4, "class": "desk", "center": [0,0,0], "extent": [1,1,1]},
          {"id": 4, "class": "lamp", "center": [1,0,0], "extent": [1,1,1]}]})",
      "proposals[1].id");
}

TEST_CASE("corpus records round-trip with optional target") {
  CorpusRecord with_target;
  with_target.utterance_id = "u1";
  with_target.scene_id = "s1";
  with_target.text = "the chair near the desk";
  with_target.target_id = 7;
  CHECK(corpus_record_from_json_text(corpus_record_to_json(with_target)) == with_target);

  CorpusRecord without = with_target;
  without.target_id.reset();
  const std::string text = corpus_record_to_json(without);
  CHECK(text.find("target_id") == std::string::npos);
  CHECK(corpus_record_from_json_text(text) == without);

  CHECK_THROWS_AS(
      corpus_record_from_json_text(R"({"utterance_id": "", "scene_id": "s", "text": "x"})"),
      IoError);
  CHECK_THROWS_AS(
      corpus_record_from_json_text(R"({"utterance_id": "u", "scene_id": "s", "text": "x", "zz": 0})"),
      IoError);
}

TEST_CASE("pseudo-label records round-trip every provenance") {
  PseudoLabelRecord record;
  record.utterance_id = "u2";
  record.scene_id = "s2";
  const Provenance provs[4] = {Provenance::Unique, Provenance::RelationResolved,
                               Provenance::RandomFallback, Provenance::Unresolved};
  for (std::size_t i = 0; i < 4; ++i) {
    PseudoLabelEntry e;
    e.mention = 3 - i;
    e.class_label = "class" + std::to_string(i);
    e.proposal_id = provs[i] == Provenance::Unresolved ? -1 : static_cast<std::int64_t>(10 + i);
    e.order = i;
    e.provenance = provs[i];
    record.chain.push_back(e);
  }
  const std::string text = pseudo_label_to_json(record);
  CHECK(pseudo_label_from_json_text(text) == record);
  for (const char* name : {"unique", "relation_resolved", "random_fallback", "unresolved"})
    CHECK(text.find(name) != std::string::npos);

  const std::string bad = R"({"utterance_id": "u", "scene_id": "s", "chain": [
      {"mention": 0, "class": "c", "proposal_id": 1, "order": 0, "provenance": "psychic"}]})";
  CHECK_THROWS_AS(pseudo_label_from_json_text(bad), IoError);
}

TEST_CASE("parse records round-trip including between triplets") {
  const ParsedUtterance parse = sample_parse();
  const std::string text = parsed_utterance_to_json(parse);
  const ParsedUtterance back = parsed_utterance_from_json_text(text);
  CHECK(back.utterance_id == parse.utterance_id);
  CHECK(back.text == parse.text);
  REQUIRE(back.mentions.size() == 3);
  CHECK(back.mentions[0].role == MentionRole::Target);
  CHECK(back.mentions[2].canonical_class == "dresser");
  CHECK(back.mentions[1].match_score == 0.75);
  CHECK(back.triplets == parse.triplets);
  CHECK(back.over_token_cap);
  CHECK_FALSE(back.truncated_mentions);
  CHECK(parsed_utterance_to_json(back) == text);
}

TEST_CASE("parse record validation") {
  // Two targets.
  CHECK_THROWS_AS(parsed_utterance_from_json_text(R"({"utterance_id": "u", "text": "t",
      "mentions": [
        {"surface": "a", "class": "a", "score": 1.0, "token_index": 0, "role": "target"},
        {"surface": "b", "class": "b", "score": 1.0, "token_index": 1, "role": "target"}],
      "triplets": [], "over_token_cap": false, "truncated_mentions": false})"),
                  IoError);
  // second_object without Between.
  CHECK_THROWS_AS(parsed_utterance_from_json_text(R"({"utterance_id": "u", "text": "t",
      "mentions": [
        {"surface": "a", "class": "a", "score": 1.0, "token_index": 0, "role": "target"},
        {"surface": "b", "class": "b", "score": 1.0, "token_index": 1, "role": "anchor"}],
      "triplets": [{"subject": 0, "relation": "Near", "object": 1, "second_object": 1}],
      "over_token_cap": false, "truncated_mentions": false})"),
                  IoError);
  // Between without second_object.
  CHECK_THROWS_AS(parsed_utterance_from_json_text(R"({"utterance_id": "u", "text": "t",
      "mentions": [
        {"surface": "a", "class": "a", "score": 1.0, "token_index": 0, "role": "target"},
        {"surface": "b", "class": "b", "score": 1.0, "token_index": 1, "role": "anchor"}],
      "triplets": [{"subject": 0, "relation": "Between", "object": 1}],
      "over_token_cap": false, "truncated_mentions": false})"),
                  IoError);
  // Triplet index out of range.
  CHECK_THROWS_AS(parsed_utterance_from_json_text(R"({"utterance_id": "u", "text": "t",
      "mentions": [
        {"surface": "a", "class": "a", "score": 1.0, "token_index": 0, "role": "target"},
        {"surface": "b", "class": "b", "score": 1.0, "token_index": 1, "role": "anchor"}],
      "triplets": [{"subject": 0, "relation": "Near", "object": 2}],
      "over_token_cap": false, "truncated_mentions": false})"),
                  IoError);
  // Unknown role.
  CHECK_THROWS_AS(parsed_utterance_from_json_text(R"({"utterance_id": "u", "text": "t",
      "mentions": [{"surface": "a", "class": "a", "score": 1.0, "token_index": 0, "role": "boss"}],
      "triplets": [], "over_token_cap": false, "truncated_mentions": false})"),
                  IoError);
}

TEST_CASE("jsonl round-trips and reports failing line numbers") {
  std::vector<CorpusRecord> records(3);
  for (std::size_t i = 0; i < 3; ++i) {
    records[i].utterance_id = "u" + std::to_string(i);
    records[i].scene_id = "s";
    records[i].text = "text " + std::to_string(i);
  }
  records[1].target_id = 5;
  const std::string text = corpus_to_jsonl(records);
  CHECK(corpus_from_jsonl(text) == records);
  // Blank lines are tolerated.
  CHECK(corpus_from_jsonl("\n" + text + "   \n") == records);

  const std::string broken = corpus_record_to_json(records[0]) + "\n{\"oops\": true}\n";
  try {
    corpus_from_jsonl(broken);
    FAIL_CHECK("expected IoError on line 2");
  } catch (const IoError& e) {
    CHECK(e.where() == "line 2");
  }

  PseudoLabelRecord pl;
  pl.utterance_id = "u";
  pl.scene_id = "s";
  PseudoLabelEntry e;
  e.class_label = "desk";
  e.provenance = Provenance::Unique;
  e.proposal_id = 2;
  pl.chain.push_back(e);
  const std::vector<PseudoLabelRecord> pls = {pl, pl};
  CHECK(pseudo_labels_from_jsonl(pseudo_labels_to_jsonl(pls)) == pls);
}

TEST_CASE("pseudo-label assembly checks chain consistency") {
  ParsedUtterance parse = sample_parse();
  PathwayOrder order;
  order.ordered_mentions = {1, 2, 0};
  GroundedChain chain;
  chain.utterance_id = parse.utterance_id;
  chain.assignments = {{1, 4, Provenance::Unique},
                       {2, -1, Provenance::Unresolved},
                       {0, 9, Provenance::RelationResolved}};
  const PseudoLabelRecord record = make_pseudo_label(parse, order, chain, "scene-1");
  CHECK(record.utterance_id == "u-9");
  CHECK(record.scene_id == "scene-1");
  REQUIRE(record.chain.size() == 3);
  CHECK(record.chain[0].mention == 1);
  CHECK(record.chain[0].class_label == "bed");
  CHECK(record.chain[0].order == 0);
  CHECK(record.chain[1].proposal_id == -1);  // unresolved forces -1
  CHECK(record.chain[2].class_label == "pillow");
  CHECK(record.chain[2].order == 2);

  // Round back to pipeline structures.
  const GroundedChain back = chain_from_pseudo_label(record);
  CHECK(back.assignments == chain.assignments);
  const std::vector<std::string> classes = order_classes_from_pseudo_label(record);
  const std::vector<std::string> expected = {"bed", "dresser", "pillow"};
  CHECK(classes == expected);

  PathwayOrder short_order;
  short_order.ordered_mentions = {0};
  CHECK_THROWS_AS(make_pseudo_label(parse, short_order, chain, "s"), IoError);
  GroundedChain shuffled = chain;
  std::swap(shuffled.assignments[0], shuffled.assignments[1]);
  CHECK_THROWS_AS(make_pseudo_label(parse, order, shuffled, "s"), IoError);

  PseudoLabelRecord bad_orders = record;
  bad_orders.chain[1].order = 0;  // duplicate rank
  CHECK_THROWS_AS(chain_from_pseudo_label(bad_orders), IoError);
  CHECK_THROWS_AS(order_classes_from_pseudo_label(bad_orders), IoError);
}

TEST_CASE("config text round-trips and validates") {
  const PipelineConfig defaults = config_from_text("");
  CHECK(defaults.decoder.d == 768);
  CHECK(defaults.decoder.proposal_slots == 52);
  CHECK(defaults.decoder.mask_mode == MaskMode::Causal);
  CHECK(defaults.predicate.on_gap == 0.15);

  const std::string text =
      "# pipeline settings\n"
      "d = 32\n"
      "heads = 4\n"
      "chain_slots = 5\n"
      "mask_mode = none\n"
      "lambda_ref = 2.5\n"
      "anchor_loss_enabled = false\n"
      "on_gap = 0.2  # meters\n";
  const PipelineConfig cfg = config_from_text(text);
  CHECK(cfg.decoder.d == 32);
  CHECK(cfg.decoder.heads == 4);
  CHECK(cfg.decoder.chain_slots == 5);
  CHECK(cfg.decoder.mask_mode == MaskMode::None);
  CHECK(cfg.decoder.lambda_ref == 2.5);
  CHECK_FALSE(cfg.decoder.anchor_loss_enabled);
  CHECK(cfg.predicate.on_gap == 0.2);
  // Untouched keys keep their defaults.
  CHECK(cfg.decoder.proposal_slots == 52);

  const PipelineConfig again = config_from_text(config_to_text(cfg));
  CHECK(again.decoder.d == cfg.decoder.d);
  CHECK(again.decoder.mask_mode == cfg.decoder.mask_mode);
  CHECK(again.decoder.lambda_ref == cfg.decoder.lambda_ref);
  CHECK(again.predicate.on_gap == cfg.predicate.on_gap);
  CHECK(again.predicate.yaw == cfg.predicate.yaw);
}

TEST_CASE("config text rejects malformed input") {
  const auto expect_line = [](const std::string& text, const std::string& where) {
    try {
      config_from_text(text);
      FAIL_CHECK("expected IoError at ", where);
    } catch (const IoError& e) {
      CHECK(e.where() == where);
    }
  };
  expect_line("d = 32\nwat\n", "line 2");
  expect_line("unknown_key = 1\n", "line 1");
  expect_line("d = zero\n", "line 1");
  expect_line("lambda_v = nope\n", "line 1");
  expect_line("mask_mode = diagonal\n", "line 1");
  expect_line("anchor_loss_enabled = maybe\n", "line 1");
  // Structurally fine but semantically invalid: validate() rejects it.
  CHECK_THROWS_AS(config_from_text("d = 8\nheads = 3\n"), std::invalid_argument);
}

TEST_CASE("whole-file helpers round-trip binary content") {
  const std::string path = "refchain_io_test_scratch.bin";
  std::string content = "line one\nline two\n";
  content += '\0';
  content += "after nul";
  write_file(path, content);
  CHECK(read_file(path) == content);
  std::remove(path.c_str());
  CHECK_THROWS_AS(read_file("definitely/not/a/real/file.txt"), IoError);
}

TEST_CASE("label sets serialize one label per line") {
  const LabelSet labels(std::vector<std::string>{"desk", "chair", "floor lamp"});
  CHECK(labels_to_text(labels) == "desk\nchair\nfloor lamp\n");
}
