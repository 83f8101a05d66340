#include "rsu/taxonomy.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <sstream>

#include "rsu/error.hpp"
#include "rsu/text.hpp"

namespace rsu {

std::string_view to_string(Category c) noexcept {
  switch (c) {
    case Category::environment: return "environment";
    case Category::agent: return "agent";
    case Category::motion: return "motion";
  }
  return "unknown";
}

std::optional<Category> parse_category(std::string_view name) noexcept {
  for (auto c : kCategories) {
    if (to_string(c) == name) return c;
  }
  return std::nullopt;
}

namespace {

std::string regular_plural(const std::string& phrase) {
  auto ends_with = [&](std::string_view suffix) {
    return phrase.size() >= suffix.size() &&
           phrase.compare(phrase.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  if (ends_with("s") || ends_with("x") || ends_with("ch") || ends_with("sh")) return phrase + "es";
  if (phrase.size() >= 2 && phrase.back() == 'y' &&
      std::string_view("aeiou").find(phrase[phrase.size() - 2]) == std::string_view::npos) {
    return phrase.substr(0, phrase.size() - 1) + "ies";
  }
  return phrase + "s";
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(item);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

}  // namespace

std::string KeywordEntry::surface(int count) const {
  if (count <= 1) return label;
  auto plural = regular_plural(label);
  if (std::find(aliases.begin(), aliases.end(), plural) != aliases.end()) return plural;
  return label;
}

std::size_t CategoryCounts::of(Category c) const noexcept {
  switch (c) {
    case Category::environment: return environment;
    case Category::agent: return agent;
    case Category::motion: return motion;
  }
  return 0;
}

Taxonomy Taxonomy::from_entries(std::vector<KeywordEntry> entries) {
  if (entries.empty()) throw Error(ErrorCode::validation, "no entries");
  Taxonomy t;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& e = entries[i];
    const auto context = "entry " + std::to_string(i);
    e.label = normalize_phrase(e.label);
    if (e.label.empty()) throw Error(ErrorCode::validation, "empty label", context);
    const auto label_words = tokenize(e.label).size();
    if (label_words > 4) {
      throw Error(ErrorCode::validation, "label '" + e.label + "' has more than 4 words", context);
    }
    std::vector<std::string> aliases;
    for (const auto& raw : e.aliases) {
      auto alias = normalize_phrase(raw);
      if (alias.empty()) continue;
      aliases.push_back(std::move(alias));
    }
    e.aliases = std::move(aliases);

    auto add_phrase = [&](const std::string& phrase) {
      auto [it, inserted] = t.phrase_index_.emplace(phrase, i);
      if (!inserted) {
        throw Error(ErrorCode::duplicate, "duplicate phrase '" + phrase + "' (also in entry " +
                                              std::to_string(it->second) + ")",
                    context);
      }
      t.max_phrase_tokens_ = std::max(t.max_phrase_tokens_, tokenize(phrase).size());
    };
    add_phrase(e.label);
    for (const auto& a : e.aliases) add_phrase(a);

    switch (e.category) {
      case Category::environment: ++t.counts_.environment; break;
      case Category::agent: ++t.counts_.agent; break;
      case Category::motion: ++t.counts_.motion; break;
    }
  }
  t.entries_ = std::move(entries);
  return t;
}

Taxonomy Taxonomy::load(std::istream& in, const std::string& source_name) {
  std::vector<KeywordEntry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto context = source_name + ":" + std::to_string(line_no) + " (entry " +
                         std::to_string(entries.size()) + ")";
    auto fields = split(line, '\t');
    if (fields.size() < 2 || fields.size() > 3) {
      throw Error(ErrorCode::parse, "expected category<TAB>label[<TAB>aliases]", context);
    }
    auto category = parse_category(fields[0]);
    if (!category) throw Error(ErrorCode::validation, "unknown category '" + fields[0] + "'", context);
    KeywordEntry entry{*category, fields[1], {}};
    if (fields.size() == 3) entry.aliases = split(fields[2], ',');
    entries.push_back(std::move(entry));
  }
  if (entries.empty()) throw Error(ErrorCode::validation, "no entries", source_name);
  try {
    return from_entries(std::move(entries));
  } catch (const Error& e) {
    throw Error(e.code(), e.what(), source_name);
  }
}

Taxonomy Taxonomy::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::not_found, "cannot open taxonomy file", path.string());
  return load(in, path.string());
}

std::optional<std::size_t> Taxonomy::find(std::string_view phrase) const {
  auto it = phrase_index_.find(normalize_phrase(phrase));
  if (it == phrase_index_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::size_t> Taxonomy::indices_in(Category c) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].category == c) out.push_back(i);
  }
  return out;
}

std::vector<KeywordMatch> Taxonomy::scan(std::span<const std::string> tokens) const {
  std::vector<KeywordMatch> matches;
  std::size_t i = 0;
  std::string candidate;
  while (i < tokens.size()) {
    const auto longest = std::min(max_phrase_tokens_, tokens.size() - i);
    bool matched = false;
    for (auto len = longest; len >= 1; --len) {
      candidate.clear();
      for (std::size_t k = 0; k < len; ++k) {
        if (k) candidate.push_back(' ');
        candidate += tokens[i + k];
      }
      if (auto it = phrase_index_.find(candidate); it != phrase_index_.end()) {
        matches.push_back({it->second, i, i + len});
        i += len;
        matched = true;
        break;
      }
    }
    if (!matched) ++i;
  }
  return matches;
}

std::vector<KeywordCount> Taxonomy::match_keywords(std::string_view text) const {
  const auto tokens = tokenize(text);
  std::vector<KeywordCount> out;
  for (const auto& m : scan(tokens)) {
    const auto* entry = &entries_[m.entry];
    auto it = std::find_if(out.begin(), out.end(), [&](const KeywordCount& k) { return k.entry == entry; });
    if (it == out.end()) {
      out.push_back({entry, 1});
    } else {
      ++it->occurrences;
    }
  }
  return out;
}

}  // namespace rsu
