#pragma once

// Reference computations kept deliberately naive so they share no logic with
// the code under test beyond the taxonomy scan.

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "rsu/segments.hpp"
#include "rsu/taxonomy.hpp"

namespace rsu::oracle {

struct Mention {
  std::size_t entry;
  bool has_number;
  long number;
};

inline std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char ch : text) {
    if (std::isalnum(ch) || ch >= 0x80) {
      cur.push_back(static_cast<char>(std::tolower(ch)));
    } else if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

inline bool all_digits(const std::string& s) {
  return !s.empty() && s.size() < 10 && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

inline std::vector<Mention> mentions(const std::string& text, const Taxonomy& taxonomy) {
  const auto words = split_words(text);
  std::vector<Mention> out;
  for (const auto& m : taxonomy.scan(words)) {
    Mention x{m.entry, false, 0};
    if (m.begin > 0 && all_digits(words[m.begin - 1])) {
      x.has_number = true;
      x.number = std::atol(words[m.begin - 1].c_str());
    }
    out.push_back(x);
  }
  return out;
}

inline bool compatible(const AnnotationItem& item, const Mention& m, const Taxonomy& taxonomy) {
  const auto& e = taxonomy.entry(m.entry);
  if (e.category != item.category || e.label != item.label) return false;
  return !item.count || (m.has_number && m.number == *item.count);
}

// Exhaustive search over every injective assignment of items to mentions.
inline int best_pairing(const std::vector<AnnotationItem>& items, const std::vector<Mention>& ms,
                        const Taxonomy& taxonomy, std::size_t i, std::vector<bool>& used) {
  if (i == items.size()) return 0;
  int best = best_pairing(items, ms, taxonomy, i + 1, used);
  for (std::size_t k = 0; k < ms.size(); ++k) {
    if (used[k] || !compatible(items[i], ms[k], taxonomy)) continue;
    used[k] = true;
    best = std::max(best, 1 + best_pairing(items, ms, taxonomy, i + 1, used));
    used[k] = false;
  }
  return best;
}

inline int max_matched(const std::string& output, const std::vector<AnnotationItem>& items, const Taxonomy& taxonomy) {
  const auto ms = mentions(output, taxonomy);
  std::vector<bool> used(ms.size(), false);
  return best_pairing(items, ms, taxonomy, 0, used);
}

// Every unordered pair of entries with differing categories, as label pairs
// in the order (lower category, higher category).
inline std::set<std::tuple<int, std::string, int, std::string>> cross_pairs(const Taxonomy& taxonomy) {
  std::set<std::tuple<int, std::string, int, std::string>> out;
  const auto es = taxonomy.entries();
  for (std::size_t i = 0; i < es.size(); ++i) {
    for (std::size_t j = i + 1; j < es.size(); ++j) {
      if (es[i].category == es[j].category) continue;
      auto a = &es[i], b = &es[j];
      if (static_cast<int>(a->category) > static_cast<int>(b->category)) std::swap(a, b);
      out.emplace(static_cast<int>(a->category), a->label, static_cast<int>(b->category), b->label);
    }
  }
  return out;
}

// Distinct (category, label) keys of a statement list.
inline std::set<std::pair<int, std::string>> reasoning_keys(const std::vector<CausalStatement>& statements) {
  std::set<std::pair<int, std::string>> out;
  for (const auto& s : statements) {
    for (const auto* side : {&s.causes, &s.effects, &s.actors}) {
      for (const auto& it : *side) out.emplace(static_cast<int>(it.category), it.label);
    }
  }
  return out;
}

}  // namespace rsu::oracle
