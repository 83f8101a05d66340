#include "rsu/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <optional>
#include <set>

#include "rsu/error.hpp"
#include "rsu/text.hpp"

namespace rsu {

namespace {

struct Mention {
  std::size_t entry;
  std::optional<long> preceding;
  bool used = false;
};

void add_occurrence(std::vector<KeywordOccurrence>& list, const KeywordEntry& e) {
  auto it = std::find_if(list.begin(), list.end(),
                         [&](const KeywordOccurrence& k) { return k.label == e.label && k.category == e.category; });
  if (it == list.end()) {
    list.push_back({e.category, e.label, 1});
  } else {
    ++it->occurrences;
  }
}

}  // namespace

NarrationScore score_narration(std::string_view output, std::span<const AnnotationItem> annotation,
                               const Taxonomy& taxonomy) {
  if (annotation.empty()) throw Error(ErrorCode::precondition, "nothing to score");

  const auto tokens = tokenize(output);
  std::vector<Mention> mentions;
  NarrationScore score;
  for (const auto& m : taxonomy.scan(tokens)) {
    std::optional<long> preceding;
    if (m.begin > 0) preceding = parse_integer_token(tokens[m.begin - 1]);
    mentions.push_back({m.entry, preceding});
    add_occurrence(score.frequencies, taxonomy.entry(m.entry));
  }

  std::vector<std::optional<std::size_t>> item_entry(annotation.size());
  for (std::size_t i = 0; i < annotation.size(); ++i) {
    auto idx = taxonomy.find(annotation[i].label);
    if (idx && taxonomy.entry(*idx).category == annotation[i].category) item_entry[i] = idx;
  }

  std::vector<bool> item_matched(annotation.size(), false);
  // Counted items can only use mentions carrying their count, so they claim
  // first; uncounted items accept any remaining mention.
  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t i = 0; i < annotation.size(); ++i) {
      const auto& item = annotation[i];
      if (!item_entry[i] || item.count.has_value() != (pass == 0)) continue;
      for (auto& mention : mentions) {
        if (mention.used || mention.entry != *item_entry[i]) continue;
        if (item.count && mention.preceding != std::optional<long>(*item.count)) continue;
        mention.used = true;
        item_matched[i] = true;
        break;
      }
    }
  }

  std::set<std::size_t> annotated;
  for (const auto& e : item_entry) {
    if (e) annotated.insert(*e);
  }
  for (const auto& mention : mentions) {
    if (!annotated.count(mention.entry)) add_occurrence(score.spurious, taxonomy.entry(mention.entry));
  }

  score.total = static_cast<int>(annotation.size());
  for (std::size_t i = 0; i < annotation.size(); ++i) {
    if (item_matched[i]) {
      ++score.matched;
    } else {
      score.missed.push_back(annotation[i]);
    }
  }
  score.value = static_cast<double>(score.matched) / score.total;
  return score;
}

namespace {

struct Connective {
  std::vector<std::string> tokens;
  bool effect_first;
};

const std::vector<Connective>& connectives() {
  static const std::vector<Connective> list = {
      {{"because"}, true},
      {{"due", "to"}, true},
      {{"caused", "by"}, true},
      {{"as", "a", "result", "of"}, true},
      {{"leading", "to"}, false},
      {{"resulting", "in"}, false},
  };
  return list;
}

std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  for (char c : text) {
    if (c == '.' || c == '!' || c == '?' || c == ';' || c == '\n') {
      if (!current.empty()) out.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

std::vector<AnnotationItem> side_items(std::span<const std::string> tokens, const Taxonomy& taxonomy) {
  std::vector<AnnotationItem> items;
  for (const auto& m : taxonomy.scan(tokens)) {
    const auto& e = taxonomy.entry(m.entry);
    const bool seen = std::any_of(items.begin(), items.end(), [&](const AnnotationItem& it) {
      return it.label == e.label && it.category == e.category;
    });
    if (seen) continue;
    AnnotationItem item{e.category, e.label, std::nullopt};
    if (e.category == Category::agent && m.begin > 0) {
      if (auto n = parse_integer_token(tokens[m.begin - 1]); n && *n > 0) item.count = static_cast<int>(*n);
    }
    items.push_back(std::move(item));
  }
  return items;
}

bool has_category(const std::vector<AnnotationItem>& items, Category c) {
  return std::any_of(items.begin(), items.end(), [c](const AnnotationItem& i) { return i.category == c; });
}

// Agents sharing a side with a motion are that motion's actors.
void move_actors(std::vector<AnnotationItem>& side, std::vector<AnnotationItem>& actors) {
  if (!has_category(side, Category::motion)) return;
  auto split = std::stable_partition(side.begin(), side.end(),
                                     [](const AnnotationItem& i) { return i.category != Category::agent; });
  actors.insert(actors.end(), split, side.end());
  side.erase(split, side.end());
}

}  // namespace

std::vector<CausalStatement> extract_causal_statements(std::string_view reasoning_text,
                                                       const Taxonomy& taxonomy) {
  std::vector<CausalStatement> out;
  for (const auto& sentence : split_sentences(reasoning_text)) {
    const auto tokens = tokenize(sentence);
    std::optional<std::size_t> at;
    const Connective* found = nullptr;
    for (std::size_t i = 0; i < tokens.size() && !found; ++i) {
      for (const auto& c : connectives()) {
        if (i + c.tokens.size() > tokens.size()) continue;
        if (std::equal(c.tokens.begin(), c.tokens.end(), tokens.begin() + i)) {
          at = i;
          found = &c;
          break;
        }
      }
    }
    if (!found) continue;
    const std::span<const std::string> all(tokens);
    auto left = side_items(all.subspan(0, *at), taxonomy);
    auto right = side_items(all.subspan(*at + found->tokens.size()), taxonomy);
    CausalStatement st;
    st.effects = found->effect_first ? std::move(left) : std::move(right);
    st.causes = found->effect_first ? std::move(right) : std::move(left);
    move_actors(st.effects, st.actors);
    move_actors(st.causes, st.actors);
    if (st.causes.empty() || st.effects.empty()) continue;
    out.push_back(std::move(st));
  }
  return out;
}

bool is_flawed(const CausalStatement& statement) {
  if (has_category(statement.effects, Category::environment)) return true;
  return has_category(statement.causes, Category::motion) && !has_category(statement.effects, Category::motion);
}

ReasoningScore validate_reasoning(std::span<const CausalStatement> statements,
                                  std::span<const CausalStatement> annotation_reasoning) {
  if (annotation_reasoning.empty()) throw Error(ErrorCode::precondition, "no annotated reasoning to score");
  ReasoningScore score;
  for (const auto& st : statements) {
    if (is_flawed(st)) score.violations.push_back(st);
  }
  score.structurally_valid = score.violations.empty();

  using Key = std::pair<Category, std::string>;
  auto collect = [](std::span<const CausalStatement> list, auto&& sink) {
    for (const auto& st : list) {
      for (const auto* side : {&st.causes, &st.effects, &st.actors}) {
        for (const auto& item : *side) sink(Key{item.category, item.label});
      }
    }
  };
  std::vector<Key> expected;
  collect(annotation_reasoning, [&](Key k) {
    if (std::find(expected.begin(), expected.end(), k) == expected.end()) expected.push_back(std::move(k));
  });
  std::set<Key> produced;
  collect(statements, [&](Key k) { produced.insert(std::move(k)); });

  score.total = static_cast<int>(expected.size());
  for (const auto& k : expected) score.matched += produced.count(k) ? 1 : 0;
  score.keyword_value = score.total > 0 ? static_cast<double>(score.matched) / score.total : 0.0;
  score.value = score.structurally_valid ? score.keyword_value : 0.0;
  return score;
}

std::string format_percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", fraction * 100.0);
  return buf;
}

AccuracyReport aggregate(const std::map<GroupKey, std::vector<SegmentScore>>& groups) {
  if (groups.empty()) throw Error(ErrorCode::precondition, "no groups to aggregate");
  AccuracyReport report;
  for (const auto& [key, scores] : groups) {
    if (scores.empty()) {
      throw Error(ErrorCode::precondition, "empty group",
                  key.backend + (key.prompt_strategy ? " (strategy on)" : " (strategy off)"));
    }
    GroupSummary g{key, scores.size(), 0.0, 0.0};
    for (const auto& s : scores) {
      g.narration += s.narration;
      g.reasoning += s.reasoning;
    }
    g.narration /= static_cast<double>(scores.size());
    g.reasoning /= static_cast<double>(scores.size());
    report.groups.push_back(std::move(g));
  }
  return report;
}

namespace {

std::size_t display_width(const std::string& s) {
  std::size_t n = 0;
  for (unsigned char c : s) n += (c & 0xC0) != 0x80;
  return n;
}

std::string pad(const std::string& s, std::size_t width) {
  return s + std::string(width > display_width(s) ? width - display_width(s) : 0, ' ');
}

}  // namespace

std::string AccuracyReport::render_table() const {
  std::vector<std::string> backends;
  std::vector<bool> flags;
  for (const auto& g : groups) {
    if (std::find(backends.begin(), backends.end(), g.key.backend) == backends.end()) backends.push_back(g.key.backend);
    if (std::find(flags.begin(), flags.end(), g.key.prompt_strategy) == flags.end()) flags.push_back(g.key.prompt_strategy);
  }
  std::sort(flags.begin(), flags.end(), std::greater<>());

  auto cell = [&](const std::string& backend, bool flag, bool narration) -> std::string {
    for (const auto& g : groups) {
      if (g.key.backend == backend && g.key.prompt_strategy == flag) {
        return format_percent(narration ? g.narration : g.reasoning);
      }
    }
    return "-";
  };

  std::vector<std::vector<std::string>> rows;
  rows.push_back({"Task", "PS"});
  for (const auto& b : backends) rows.back().push_back(b);
  for (bool narration : {true, false}) {
    for (std::size_t f = 0; f < flags.size(); ++f) {
      std::vector<std::string> row{f == 0 ? (narration ? "Nar." : "Rea.") : "", flags[f] ? "✓" : "✗"};
      for (const auto& b : backends) row.push_back(cell(b, flags[f], narration));
      rows.push_back(std::move(row));
    }
  }
  std::vector<std::size_t> widths(rows.front().size(), 0);
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) widths[c] = std::max(widths[c], display_width(r[c]));
  }
  auto line = [&](const std::vector<std::string>& r) {
    std::string out;
    for (std::size_t c = 0; c < r.size(); ++c) {
      out += c == 0 ? "" : (c == 2 ? " | " : "  ");
      out += c + 1 == r.size() ? r[c] : pad(r[c], widths[c]);
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out + "\n";
  };
  std::string out = line(rows[0]);
  std::string rule;
  for (std::size_t c = 0; c < widths.size(); ++c) {
    rule += c == 0 ? "" : (c == 2 ? "-+-" : "--");
    rule += std::string(widths[c], '-');
  }
  out += rule + "\n";
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (i > 1 && rows[i][0] == "Rea.") out += rule + "\n";
    out += line(rows[i]);
  }
  return out;
}

nlohmann::json AccuracyReport::to_json() const {
  nlohmann::json out{{"groups", nlohmann::json::array()}};
  for (const auto& g : groups) {
    out["groups"].push_back({{"backend", g.key.backend},
                             {"prompt_strategy", g.key.prompt_strategy},
                             {"segments", g.segments},
                             {"narration", g.narration},
                             {"reasoning", g.reasoning},
                             {"narration_pct", format_percent(g.narration)},
                             {"reasoning_pct", format_percent(g.reasoning)}});
  }
  return out;
}

}  // namespace rsu
