#include "refchain/pathway.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace refchain {

namespace {

struct Edge {
  std::size_t before;  // referenced object: must come first
  std::size_t after;   // referencing subject
  bool operator<(const Edge& o) const {
    return before != o.before ? before < o.before : after < o.after;
  }
};

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return s.substr(b, e - b);
}

}  // namespace

PathwayOrder heuristic_order(const ParsedUtterance& parse) {
  const std::size_t n = parse.mentions.size();
  const std::size_t target = parse.target_index();

  // Constraint set over anchors only: object before subject. Set semantics
  // make the result independent of triplet list order; edges touching the
  // target carry no information beyond "target last", which is forced anyway.
  std::set<Edge> edges;
  auto add_edge = [&](std::size_t before, std::size_t after) {
    if (before == target || after == target || before == after) return;
    edges.insert({before, after});
  };
  for (const auto& t : parse.triplets) {
    add_edge(t.object, t.subject);
    if (t.second_object) add_edge(*t.second_object, t.subject);
  }

  std::vector<std::size_t> indegree(n, 0);
  for (const auto& e : edges) ++indegree[e.after];

  std::vector<bool> emitted(n, false);
  emitted[target] = true;  // reserved for the last slot
  PathwayOrder order;
  std::size_t remaining = n - 1;
  while (remaining > 0) {
    // Ready anchor mentioned latest in the utterance.
    std::size_t pick = n;
    for (std::size_t m = 0; m < n; ++m) {
      if (emitted[m] || indegree[m] != 0) continue;
      if (pick == n || parse.mentions[m].mention_index > parse.mentions[pick].mention_index)
        pick = m;
    }
    if (pick == n) {
      // Cycle among the remaining anchors: drop the constraint whose subject
      // (then object) is mentioned earliest and retry.
      const Edge* victim = nullptr;
      for (const auto& e : edges) {
        if (emitted[e.before] || emitted[e.after]) continue;
        if (!victim ||
            parse.mentions[e.after].mention_index <
                parse.mentions[victim->after].mention_index ||
            (parse.mentions[e.after].mention_index ==
                 parse.mentions[victim->after].mention_index &&
             parse.mentions[e.before].mention_index <
                 parse.mentions[victim->before].mention_index))
          victim = &e;
      }
      --indegree[victim->after];
      edges.erase(*victim);
      continue;
    }
    emitted[pick] = true;
    order.ordered_mentions.push_back(pick);
    --remaining;
    for (auto it = edges.begin(); it != edges.end();) {
      if (it->before == pick) {
        --indegree[it->after];
        it = edges.erase(it);
      } else {
        ++it;
      }
    }
  }
  order.ordered_mentions.push_back(target);
  return order;
}

std::size_t edit_distance(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  const std::size_t la = a.size(), lb = b.size();
  std::vector<std::size_t> prev(lb + 1), cur(lb + 1);
  for (std::size_t j = 0; j <= lb; ++j) prev[j] = j;
  for (std::size_t i = 1; i <= la; ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= lb; ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[lb];
}

double normalized_levenshtein(const std::vector<std::string>& a,
                              const std::vector<std::string>& b) {
  if (a.empty() && b.empty()) return 0.0;
  return static_cast<double>(edit_distance(a, b)) /
         static_cast<double>(std::max(a.size(), b.size()));
}

namespace {

// Splits "1: TV, 2: couch, t: pillow" into (key, name) pairs.
struct OrderEntry {
  std::string key;
  std::string name;
};

bool parse_r_line(const std::string& body, std::vector<OrderEntry>& entries,
                  std::string& error) {
  const auto open = body.find('[');
  const auto close = body.rfind(']');
  if (open == std::string::npos || close == std::string::npos || close < open) {
    error = "R line is not a bracketed list";
    return false;
  }
  const std::string inner = body.substr(open + 1, close - open - 1);
  if (trim(inner).empty()) {
    error = "order list is empty";
    return false;
  }
  std::stringstream ss(inner);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) {
      error = "order entry '" + trim(item) + "' lacks a 'key: name' form";
      return false;
    }
    OrderEntry e;
    e.key = trim(item.substr(0, colon));
    e.name = trim(item.substr(colon + 1));
    if (e.key.empty() || e.name.empty()) {
      error = "order entry '" + trim(item) + "' lacks a 'key: name' form";
      return false;
    }
    entries.push_back(std::move(e));
  }
  return true;
}

}  // namespace

OrderIngestResult parse_external_orders(const std::string& text,
                                        const std::map<std::string, ParsedUtterance>& parses,
                                        double match_threshold) {
  OrderIngestResult result;

  struct RawRecord {
    std::string id;
    std::size_t id_line = 0;
    std::string r_body;
    std::size_t r_line = 0;
  };
  std::vector<RawRecord> records;
  RawRecord cur;
  bool in_record = false;

  std::stringstream ss(text);
  std::string line;
  std::size_t lineno = 0;
  auto flush = [&] {
    if (in_record) records.push_back(cur);
    cur = RawRecord{};
    in_record = false;
  };
  while (std::getline(ss, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.rfind("ID:", 0) == 0) {
      flush();
      in_record = true;
      cur.id = trim(t.substr(3));
      cur.id_line = lineno;
    } else if (t.rfind("R:", 0) == 0) {
      if (!in_record) {
        result.errors.push_back({lineno, "", "R line before any ID line"});
        continue;
      }
      if (cur.r_line != 0) {
        result.errors.push_back({lineno, cur.id, "second R line in one record"});
        continue;
      }
      cur.r_body = t.substr(2);
      cur.r_line = lineno;
    }
    // Q:, L:, explanations, and blank lines carry no order information.
  }
  flush();

  for (const auto& rec : records) {
    auto fail = [&](std::size_t ln, const std::string& msg) {
      result.errors.push_back({ln, rec.id, msg});
    };
    if (rec.id.empty()) {
      fail(rec.id_line, "empty utterance id");
      continue;
    }
    if (result.orders.count(rec.id)) {
      fail(rec.id_line, "duplicate utterance id");
      continue;
    }
    if (rec.r_line == 0) {
      fail(rec.id_line, "record has no R line");
      continue;
    }
    const auto pit = parses.find(rec.id);
    if (pit == parses.end()) {
      fail(rec.id_line, "no parsed utterance with this id");
      continue;
    }
    const ParsedUtterance& parse = pit->second;

    std::vector<OrderEntry> entries;
    std::string err;
    if (!parse_r_line(rec.r_body, entries, err)) {
      fail(rec.r_line, err);
      continue;
    }
    if (entries.back().key != "t") {
      fail(rec.r_line, "last order entry must be the 't' target entry");
      continue;
    }
    bool bad = false;
    for (std::size_t i = 0; i + 1 < entries.size(); ++i) {
      if (entries[i].key == "t") {
        fail(rec.r_line, "'t' entry must appear exactly once, last");
        bad = true;
        break;
      }
    }
    if (bad) continue;

    // Resolve names against this parse's mention classes.
    std::vector<std::string> classes;
    for (const auto& m : parse.mentions) classes.push_back(m.canonical_class);
    const LabelSet mention_labels(classes);
    PathwayOrder order;
    std::vector<bool> used(parse.mentions.size(), false);
    for (const auto& e : entries) {
      const auto m = match_class(e.name, mention_labels, match_threshold);
      if (!m) {
        fail(rec.r_line, "name '" + e.name + "' matches no mention");
        bad = true;
        break;
      }
      const std::size_t mi = mention_labels.index_of(m->label);
      if (used[mi]) {
        fail(rec.r_line, "mention '" + m->label + "' listed twice");
        bad = true;
        break;
      }
      used[mi] = true;
      order.ordered_mentions.push_back(mi);
    }
    if (bad) continue;
    if (order.ordered_mentions.size() != parse.mentions.size()) {
      fail(rec.r_line, "order does not cover every mention");
      continue;
    }
    if (order.ordered_mentions.back() != parse.target_index()) {
      fail(rec.r_line, "'t' entry does not name the parse target");
      continue;
    }
    result.orders.emplace(rec.id, std::move(order));
  }
  return result;
}

std::string serialize_order_record(const ParsedUtterance& parse, const PathwayOrder& order) {
  std::ostringstream out;
  out << "ID: " << parse.utterance_id << "\n";
  out << "Q: \"" << parse.text << "\"\n";
  out << "L: [";
  for (std::size_t i = 0; i < parse.mentions.size(); ++i) {
    if (i) out << ", ";
    out << parse.mentions[i].canonical_class;
  }
  out << "]\n";
  out << "R: [";
  for (std::size_t i = 0; i < order.ordered_mentions.size(); ++i) {
    if (i) out << ", ";
    const std::size_t m = order.ordered_mentions[i];
    if (i + 1 == order.ordered_mentions.size())
      out << "t: ";
    else
      out << (i + 1) << ": ";
    out << parse.mentions[m].canonical_class;
  }
  out << "]\n";
  return out.str();
}

}  // namespace refchain
