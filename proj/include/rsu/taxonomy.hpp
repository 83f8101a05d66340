#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace rsu {

enum class Category { environment, agent, motion };

inline constexpr std::array<Category, 3> kCategories{Category::environment, Category::agent,
                                                     Category::motion};

std::string_view to_string(Category c) noexcept;
std::optional<Category> parse_category(std::string_view name) noexcept;

struct KeywordEntry {
  Category category{};
  std::string label;
  std::vector<std::string> aliases;

  /// Text used to express `count` instances: the regular plural when the
  /// taxonomy lists it as an alias, the label otherwise.
  std::string surface(int count) const;

  bool operator==(const KeywordEntry&) const = default;
};

struct CategoryCounts {
  std::size_t environment = 0;
  std::size_t agent = 0;
  std::size_t motion = 0;

  std::size_t of(Category c) const noexcept;
  bool operator==(const CategoryCounts&) const = default;
};

/// One matched phrase; [begin, end) is a token range of the scanned text.
struct KeywordMatch {
  std::size_t entry = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
};

struct KeywordCount {
  const KeywordEntry* entry = nullptr;
  int occurrences = 0;
};

// The keyword vocabulary shared by prompts, scoring and hazard detection.
// Immutable once constructed; concurrent readers need no synchronization.
class Taxonomy {
 public:
  /// Parses the line format `category<TAB>label[<TAB>alias,alias,...]`.
  /// Lines starting with '#' and blank lines are ignored.
  static Taxonomy load(std::istream& in, const std::string& source_name = "<taxonomy>");
  static Taxonomy load_file(const std::filesystem::path& path);
  static Taxonomy from_entries(std::vector<KeywordEntry> entries);

  std::span<const KeywordEntry> entries() const noexcept { return entries_; }
  const KeywordEntry& entry(std::size_t i) const { return entries_.at(i); }
  std::size_t size() const noexcept { return entries_.size(); }
  CategoryCounts counts() const noexcept { return counts_; }

  /// Entry index whose label or alias equals `phrase` after normalization.
  std::optional<std::size_t> find(std::string_view phrase) const;
  std::vector<std::size_t> indices_in(Category c) const;

  /// Longest-match-first, left-to-right scan; no token belongs to two matches.
  std::vector<KeywordMatch> scan(std::span<const std::string> tokens) const;

  /// Entries found in `text` with their disjoint occurrence counts, ordered by
  /// first occurrence.
  std::vector<KeywordCount> match_keywords(std::string_view text) const;

 private:
  Taxonomy() = default;

  std::vector<KeywordEntry> entries_;
  std::unordered_map<std::string, std::size_t> phrase_index_;
  std::size_t max_phrase_tokens_ = 0;
  CategoryCounts counts_;
};

}  // namespace rsu
