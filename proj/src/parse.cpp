#include "refchain/parse.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>

namespace refchain {

namespace {

// ---------------------------------------------------------------------------
// Similarity machinery. The scoring formula is pinned by unit tests against a
// reference script run ahead of implementation; every step below (plural
// stripping, '^'/'$' padding, greedy pairing order) is part of that contract.

bool is_alnum_byte(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9');
}

char lower_byte(char c) {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

// Lowercase, map every non-alphanumeric byte to a space, collapse runs,
// strip a trailing plural 's' from tokens longer than three chars (keeping
// -ss/-us/-is words intact).
std::string normalize_for_match(std::string_view raw) {
  std::string out;
  std::string token;
  auto flush = [&] {
    if (token.empty()) return;
    if (token.size() > 3 && token.back() == 's') {
      const std::string_view tail2 = std::string_view(token).substr(token.size() - 2);
      if (tail2 != "ss" && tail2 != "us" && tail2 != "is") token.pop_back();
    }
    if (!out.empty()) out.push_back(' ');
    out += token;
    token.clear();
  };
  for (char c : raw) {
    const char lc = lower_byte(c);
    if (is_alnum_byte(static_cast<unsigned char>(lc)))
      token.push_back(lc);
    else
      flush();
  }
  flush();
  return out;
}

std::vector<std::string> split_spaces(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ' ') {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

// Character trigrams of '^' + s + '$', packed three bytes per entry, sorted
// and deduplicated so intersections are linear scans.
std::vector<std::uint32_t> trigram_set(const std::string& s) {
  if (s.empty()) return {};
  std::string padded;
  padded.reserve(s.size() + 2);
  padded.push_back('^');
  padded += s;
  padded.push_back('$');
  std::vector<std::uint32_t> grams;
  grams.reserve(padded.size());
  for (std::size_t i = 0; i + 2 < padded.size(); ++i) {
    const auto a = static_cast<std::uint32_t>(static_cast<unsigned char>(padded[i]));
    const auto b = static_cast<std::uint32_t>(static_cast<unsigned char>(padded[i + 1]));
    const auto c = static_cast<std::uint32_t>(static_cast<unsigned char>(padded[i + 2]));
    grams.push_back((a << 16) | (b << 8) | c);
  }
  std::sort(grams.begin(), grams.end());
  grams.erase(std::unique(grams.begin(), grams.end()), grams.end());
  return grams;
}

double dice(const std::vector<std::uint32_t>& a, const std::vector<std::uint32_t>& b) {
  if (a.empty() && b.empty()) return 0.0;
  std::size_t common = 0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] == b[j]) {
      ++common;
      ++i;
      ++j;
    } else if (a[i] < b[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  return 2.0 * static_cast<double>(common) / static_cast<double>(a.size() + b.size());
}

// Precomputed per-string features.
struct MatchFeatures {
  std::string normalized;
  std::vector<std::string> tokens;
  std::vector<std::vector<std::uint32_t>> token_grams;
  std::vector<std::uint32_t> whole_grams;
};

MatchFeatures build_features(std::string_view raw) {
  MatchFeatures f;
  f.normalized = normalize_for_match(raw);
  f.tokens = split_spaces(f.normalized);
  f.token_grams.reserve(f.tokens.size());
  for (const auto& t : f.tokens) f.token_grams.push_back(trigram_set(t));
  f.whole_grams = trigram_set(f.normalized);
  return f;
}

// Soft token overlap: score every token pair (exact match 1.0, else trigram
// Dice), pair greedily from the best score down (ties by position), divide
// the paired total by the larger token count.
double soft_token_overlap(const MatchFeatures& s, const MatchFeatures& t) {
  if (s.tokens.empty() || t.tokens.empty()) return 0.0;
  struct Pair {
    double sim;
    std::size_t i, j;
  };
  std::vector<Pair> pairs;
  pairs.reserve(s.tokens.size() * t.tokens.size());
  for (std::size_t i = 0; i < s.tokens.size(); ++i)
    for (std::size_t j = 0; j < t.tokens.size(); ++j) {
      const double sim =
          s.tokens[i] == t.tokens[j] ? 1.0 : dice(s.token_grams[i], t.token_grams[j]);
      pairs.push_back({sim, i, j});
    }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& x, const Pair& y) {
    if (x.sim != y.sim) return x.sim > y.sim;
    if (x.i != y.i) return x.i < y.i;
    return x.j < y.j;
  });
  std::vector<bool> used_i(s.tokens.size(), false), used_j(t.tokens.size(), false);
  double total = 0.0;
  for (const auto& p : pairs) {
    if (used_i[p.i] || used_j[p.j]) continue;
    used_i[p.i] = true;
    used_j[p.j] = true;
    total += p.sim;
  }
  return total / static_cast<double>(std::max(s.tokens.size(), t.tokens.size()));
}

double similarity_from_features(const MatchFeatures& a, const MatchFeatures& b) {
  if (a.normalized.empty() || b.normalized.empty()) return 0.0;
  if (a.normalized == b.normalized) return 1.0;
  const double score = 0.5 * (soft_token_overlap(a, b) + dice(a.whole_grams, b.whole_grams));
  // Only normalized equality may reach 1.0.
  return std::min(score, std::nextafter(1.0, 0.0));
}

// Amortizes label feature extraction across many match calls.
class ClassMatcher {
 public:
  explicit ClassMatcher(const LabelSet& labels) : labels_(&labels) {
    features_.reserve(labels.labels().size());
    for (const auto& l : labels.labels()) features_.push_back(build_features(l));
  }

  std::optional<MatchResult> match(std::string_view surface, double threshold) const {
    const MatchFeatures f = build_features(surface);
    if (f.normalized.empty()) return std::nullopt;
    const auto& names = labels_->labels();
    bool have = false;
    double best_score = 0.0;
    std::size_t best = 0;
    for (std::size_t i = 0; i < names.size(); ++i) {
      const double sc = similarity_from_features(f, features_[i]);
      if (!have || sc > best_score || (sc == best_score && names[i] < names[best])) {
        have = true;
        best_score = sc;
        best = i;
      }
    }
    if (!have || best_score < threshold) return std::nullopt;
    return MatchResult{names[best], best_score};
  }

 private:
  const LabelSet* labels_;
  std::vector<MatchFeatures> features_;
};

// ---------------------------------------------------------------------------
// Parser word lists. Stop words are function words, region/direction nouns,
// color/size adjectives, and common scene-navigation verbs; none of them may
// seed an object mention. Cue words mark imperatives whose object is the
// referent. Relation phrases are consumed before these lists are consulted,
// so words like "on" or "near" never reach them.

constexpr std::string_view kStopWords[] = {
    "a",        "about",   "after",    "again",    "against",  "ahead",     "all",
    "almost",   "along",   "also",     "am",       "an",       "and",       "another",
    "any",      "anything","approximately",        "are",      "area",      "around",
    "as",       "at",      "back",     "be",       "been",     "before",    "begin",
    "beige",    "being",   "best",     "big",      "bigger",   "biggest",   "black",
    "blue",     "both",    "bottom",   "brown",    "but",      "by",        "can",
    "cannot",   "center",  "centre",   "close",    "closer",   "closest",   "corner",
    "could",    "dark",    "darker",   "did",      "different","direction", "directly",
    "do",       "does",    "done",     "down",     "each",     "edge",      "eight",
    "either",   "end",     "enter",    "entering", "entire",   "every",     "exactly",
    "face",     "faces",   "facing",   "far",      "farther",  "farthest",  "few",
    "fifth",    "final",   "finally",  "first",    "five",     "following", "for",
    "four",     "fourth",  "from",     "front",    "furthest", "get",       "go",
    "going",    "gray",    "green",    "grey",     "group",    "groups",    "had",
    "half",     "hand",    "has",      "have",     "he",       "her",       "here",
    "high",     "higher",  "highest",  "him",      "his",      "how",       "i",
    "if",       "immediately",         "in",       "into",     "is",        "it",
    "its",      "itself",  "just",     "large",    "larger",   "largest",   "last",
    "least",    "left",    "less",     "like",     "line",     "little",    "long",
    "longer",   "longest", "look",     "looking",  "looks",    "low",       "lower",
    "lowest",   "made",    "many",     "may",      "me",       "middle",    "might",
    "more",     "most",    "much",     "must",     "my",       "narrow",    "nearly",
    "next",     "nine",    "no",       "not",      "nothing",  "now",       "number",
    "observe",  "of",      "off",      "once",     "one",      "ones",      "only",
    "opposite", "or",      "orange",   "other",    "others",   "our",       "out",
    "outside",  "pair",    "part",     "pink",     "place",    "placed",    "please",
    "position", "positioned",          "purple",   "quite",    "rather",    "really",
    "rear",     "red",     "right",    "room",     "row",      "said",      "same",
    "second",   "see",     "set",      "seven",    "several",  "shall",     "she",
    "short",    "shorter", "shortest", "should",   "side",     "since",     "sitting",
    "situated", "six",     "slightly", "small",    "smaller",  "smallest",  "so",
    "some",     "something",           "spot",     "standing", "start",     "starting",
    "such",     "tall",    "taller",   "tallest",  "tan",      "ten",       "than",
    "that",     "the",     "their",    "them",     "then",     "there",     "these",
    "they",     "thing",   "things",   "third",    "this",     "those",     "three",
    "through",  "tiny",    "to",       "too",      "top",      "toward",    "towards",
    "turn",     "turning", "two",      "up",       "us",       "use",       "using",
    "very",     "view",    "walk",     "walking",  "was",      "way",       "we",
    "were",     "what",    "when",     "where",    "which",    "while",     "white",
    "who",      "whole",   "whose",    "wide",     "wider",    "will",      "with",
    "within",   "would",   "yellow",   "you",      "your",     "yourself",
};

constexpr std::string_view kCueWords[] = {
    "choose", "find", "grab", "identify", "locate", "pick", "select",
};

bool is_stop_word(const std::string& t) {
  return std::binary_search(std::begin(kStopWords), std::end(kStopWords), std::string_view(t));
}

bool is_cue_word(const std::string& t) {
  return std::binary_search(std::begin(kCueWords), std::end(kCueWords), std::string_view(t));
}

std::string join_tokens(const std::vector<std::string>& tokens, std::size_t start,
                        std::size_t len) {
  std::string out;
  for (std::size_t i = 0; i < len; ++i) {
    if (i) out.push_back(' ');
    out += tokens[start + i];
  }
  return out;
}

std::string trim_copy(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return std::string(s.substr(b, e - b));
}

}  // namespace

// ---------------------------------------------------------------------------

const char* relation_name(SpatialRelation rel) {
  switch (rel) {
    case SpatialRelation::Near: return "Near";
    case SpatialRelation::Far: return "Far";
    case SpatialRelation::LeftOf: return "LeftOf";
    case SpatialRelation::RightOf: return "RightOf";
    case SpatialRelation::FrontOf: return "FrontOf";
    case SpatialRelation::Behind: return "Behind";
    case SpatialRelation::Above: return "Above";
    case SpatialRelation::Below: return "Below";
    case SpatialRelation::On: return "On";
    case SpatialRelation::Under: return "Under";
    case SpatialRelation::Between: return "Between";
  }
  return "?";
}

std::optional<SpatialRelation> relation_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kRelationCount; ++i) {
    const auto rel = static_cast<SpatialRelation>(i);
    if (name == relation_name(rel)) return rel;
  }
  return std::nullopt;
}

std::size_t ParsedUtterance::target_index() const {
  for (std::size_t i = 0; i < mentions.size(); ++i)
    if (mentions[i].role == MentionRole::Target) return i;
  return 0;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char c : text) {
    const char lc = lower_byte(c);
    if (is_alnum_byte(static_cast<unsigned char>(lc))) {
      cur.push_back(lc);
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

double class_similarity(std::string_view surface, std::string_view label) {
  return similarity_from_features(build_features(surface), build_features(label));
}

std::optional<MatchResult> match_class(std::string_view surface, const LabelSet& labels,
                                       double threshold) {
  return ClassMatcher(labels).match(surface, threshold);
}

RelationLexicon::RelationLexicon(std::vector<Entry> entries) : entries_(std::move(entries)) {
  // Longest phrases first so longest_match can take the first hit.
  std::stable_sort(entries_.begin(), entries_.end(),
                   [](const Entry& a, const Entry& b) { return a.tokens.size() > b.tokens.size(); });
}

RelationLexicon RelationLexicon::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("relation lexicon: cannot open " + path);
  std::vector<Entry> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (trim_copy(line).empty()) continue;
    const auto arrow = line.find("=>");
    if (arrow == std::string::npos)
      throw std::runtime_error("relation lexicon: missing '=>' at " + path + ":" +
                               std::to_string(lineno));
    Entry e;
    e.tokens = tokenize(std::string_view(line).substr(0, arrow));
    if (e.tokens.empty())
      throw std::runtime_error("relation lexicon: empty phrase at " + path + ":" +
                               std::to_string(lineno));
    const std::string name = trim_copy(std::string_view(line).substr(arrow + 2));
    const auto rel = relation_from_name(name);
    if (!rel)
      throw std::runtime_error("relation lexicon: unknown relation '" + name + "' at " + path +
                               ":" + std::to_string(lineno));
    e.relation = *rel;
    entries.push_back(std::move(e));
  }
  if (entries.empty()) throw std::runtime_error("relation lexicon: no entries in " + path);
  return RelationLexicon(std::move(entries));
}

std::optional<std::pair<std::size_t, SpatialRelation>> RelationLexicon::longest_match(
    const std::vector<std::string>& tokens, std::size_t pos) const {
  for (const auto& e : entries_) {
    if (pos + e.tokens.size() > tokens.size()) continue;
    bool all = true;
    for (std::size_t i = 0; i < e.tokens.size(); ++i) {
      if (tokens[pos + i] != e.tokens[i]) {
        all = false;
        break;
      }
    }
    if (all) return std::make_pair(e.tokens.size(), e.relation);
  }
  return std::nullopt;
}

ParseOutcome parse_utterance(std::string_view text, const LabelSet& labels,
                             const RelationLexicon& lexicon, const ParserConfig& cfg) {
  ParseOutcome out;
  ParsedUtterance pu;
  pu.text = std::string(text);

  const std::vector<std::string> tokens = tokenize(text);
  if (tokens.empty()) {
    out.error = "utterance has no tokens";
    return out;
  }
  const std::size_t n = tokens.size();
  pu.over_token_cap = n > cfg.token_cap;

  // Pass 1: consume relation phrases, longest match first.
  struct PhraseHit {
    std::size_t start, len;
    SpatialRelation rel;
  };
  std::vector<PhraseHit> hits;
  std::vector<bool> consumed(n, false);
  for (std::size_t pos = 0; pos < n;) {
    if (auto m = lexicon.longest_match(tokens, pos)) {
      hits.push_back({pos, m->first, m->second});
      for (std::size_t i = 0; i < m->first; ++i) consumed[pos + i] = true;
      pos += m->first;
    } else {
      ++pos;
    }
  }

  // Pass 2: drop cue and stop words. The first cue position drives target
  // selection below.
  std::optional<std::size_t> cue_pos;
  for (std::size_t i = 0; i < n; ++i) {
    if (consumed[i]) continue;
    if (is_cue_word(tokens[i])) {
      if (!cue_pos) cue_pos = i;
      consumed[i] = true;
    } else if (is_stop_word(tokens[i])) {
      consumed[i] = true;
    }
  }

  // Pass 3: remaining runs become mention candidates. Within a run, the span
  // (length <= 3) with the best match score wins; longer spans win ties so
  // "kitchen cabinet" beats "cabinet". Repeated classes merge into one
  // mention but every occurrence is kept for triplet anchoring.
  const ClassMatcher matcher(labels);
  struct Occurrence {
    std::size_t start, len;
    std::size_t mention;
  };
  std::vector<Occurrence> occs;
  std::vector<Mention> mentions;
  std::map<std::string, std::size_t> mention_of_class;
  for (std::size_t i = 0; i < n;) {
    if (consumed[i]) {
      ++i;
      continue;
    }
    std::size_t run_end = i;
    while (run_end < n && !consumed[run_end]) ++run_end;
    for (std::size_t j = i; j < run_end;) {
      const std::size_t max_len = std::min<std::size_t>(3, run_end - j);
      std::optional<MatchResult> best;
      std::size_t best_len = 0;
      std::string best_surface;
      for (std::size_t l = 1; l <= max_len; ++l) {
        std::string surface = join_tokens(tokens, j, l);
        auto m = matcher.match(surface, cfg.match_threshold);
        if (m && (!best || m->score > best->score || (m->score == best->score && l > best_len))) {
          best = std::move(m);
          best_len = l;
          best_surface = std::move(surface);
        }
      }
      if (best) {
        std::size_t mi;
        if (auto it = mention_of_class.find(best->label); it != mention_of_class.end()) {
          mi = it->second;
        } else {
          mi = mentions.size();
          mentions.push_back(
              {best_surface, best->label, best->score, j, MentionRole::Anchor});
          mention_of_class.emplace(best->label, mi);
        }
        occs.push_back({j, best_len, mi});
        j += best_len;
      } else {
        ++j;
      }
    }
    i = run_end;
  }

  if (mentions.empty()) {
    out.error = "no object mentions matched the label set";
    return out;
  }

  // Target: first mention occurrence after an imperative cue when present,
  // otherwise the leftmost mention.
  std::size_t target = 0;
  if (cue_pos) {
    for (const auto& o : occs) {
      if (o.start > *cue_pos) {
        target = o.mention;
        break;
      }
    }
  }

  // Pass 4: one triplet per relation phrase, nearest occurrence on the left
  // as subject and on the right as object. Same-mention pairs (repeated
  // references to one object) are dropped; Between requires an "and"-bound
  // second object distinct from both.
  for (const auto& h : hits) {
    const Occurrence* subj = nullptr;
    const Occurrence* obj = nullptr;
    for (const auto& o : occs) {
      if (o.start < h.start && (!subj || o.start > subj->start)) subj = &o;
      if (o.start > h.start && (!obj || o.start < obj->start)) obj = &o;
    }
    if (!subj || !obj || subj->mention == obj->mention) continue;
    RelationTriplet t{subj->mention, h.rel, obj->mention, std::nullopt};
    if (h.rel == SpatialRelation::Between) {
      std::size_t and_pos = n;
      for (std::size_t k = obj->start + obj->len; k < n; ++k) {
        if (tokens[k] == "and") {
          and_pos = k;
          break;
        }
      }
      if (and_pos == n) continue;
      const Occurrence* second = nullptr;
      for (const auto& o : occs) {
        if (o.start > and_pos && (!second || o.start < second->start)) second = &o;
      }
      if (!second || second->mention == t.subject || second->mention == t.object) continue;
      t.second_object = second->mention;
    }
    if (std::find(pu.triplets.begin(), pu.triplets.end(), t) == pu.triplets.end())
      pu.triplets.push_back(t);
  }

  // Pass 5: enforce the mention cap without ever losing the target.
  if (mentions.size() > cfg.mention_cap) {
    pu.truncated_mentions = true;
    std::vector<std::size_t> keep;
    if (target < cfg.mention_cap) {
      for (std::size_t m = 0; m < cfg.mention_cap; ++m) keep.push_back(m);
    } else {
      for (std::size_t m = 0; m + 1 < cfg.mention_cap; ++m) keep.push_back(m);
      keep.push_back(target);
    }
    std::vector<std::size_t> remap(mentions.size(), static_cast<std::size_t>(-1));
    std::vector<Mention> kept;
    for (std::size_t k = 0; k < keep.size(); ++k) {
      remap[keep[k]] = k;
      kept.push_back(std::move(mentions[keep[k]]));
    }
    std::vector<RelationTriplet> kept_triplets;
    for (auto t : pu.triplets) {
      if (remap[t.subject] == static_cast<std::size_t>(-1) ||
          remap[t.object] == static_cast<std::size_t>(-1))
        continue;
      if (t.second_object && remap[*t.second_object] == static_cast<std::size_t>(-1)) continue;
      t.subject = remap[t.subject];
      t.object = remap[t.object];
      if (t.second_object) t.second_object = remap[*t.second_object];
      kept_triplets.push_back(t);
    }
    mentions = std::move(kept);
    pu.triplets = std::move(kept_triplets);
    target = remap[target];
  }

  mentions[target].role = MentionRole::Target;
  pu.mentions = std::move(mentions);
  out.ok = true;
  out.parse = std::move(pu);
  return out;
}

}  // namespace refchain
