#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "rsu/segments.hpp"
#include "rsu/taxonomy.hpp"

namespace rsu {

struct KeywordOccurrence {
  Category category{};
  std::string label;
  int occurrences = 0;
  bool operator==(const KeywordOccurrence&) const = default;
};

struct NarrationScore {
  int matched = 0;
  int total = 0;
  double value = 0.0;
  std::vector<AnnotationItem> missed;
  /// Keywords found in the output that no annotation item names. Reported,
  /// never penalized.
  std::vector<KeywordOccurrence> spurious;
  /// Occurrence count of every keyword found in the output.
  std::vector<KeywordOccurrence> frequencies;
};

struct ReasoningScore {
  bool structurally_valid = true;
  int matched = 0;
  int total = 0;
  double keyword_value = 0.0;
  double value = 0.0;
  std::vector<CausalStatement> violations;
};

/// An annotation item counts as matched when the output mentions the same
/// keyword and, for counted items, the integer token right before that
/// mention equals the count. Each mention satisfies at most one item.
NarrationScore score_narration(std::string_view output, std::span<const AnnotationItem> annotation,
                               const Taxonomy& taxonomy);

/// Sentences with a causal connective become statements. "because",
/// "due to", "caused by" and "as a result of" put the effect on the left;
/// "leading to" and "resulting in" put the cause on the left.
std::vector<CausalStatement> extract_causal_statements(std::string_view reasoning_text,
                                                       const Taxonomy& taxonomy);

/// Cause and effect must run from environment/agent towards motion.
bool is_flawed(const CausalStatement& statement);

ReasoningScore validate_reasoning(std::span<const CausalStatement> statements,
                                  std::span<const CausalStatement> annotation_reasoning);

struct GroupKey {
  std::string backend;
  bool prompt_strategy = true;
  auto operator<=>(const GroupKey&) const = default;
};

struct SegmentScore {
  std::string segment_id;
  double narration = 0.0;
  double reasoning = 0.0;
};

struct GroupSummary {
  GroupKey key;
  std::size_t segments = 0;
  double narration = 0.0;
  double reasoning = 0.0;
};

struct AccuracyReport {
  std::vector<GroupSummary> groups;

  /// Task (Nar./Rea.) x prompt-strategy rows, one column per backend.
  std::string render_table() const;
  nlohmann::json to_json() const;
};

std::string format_percent(double fraction);

AccuracyReport aggregate(const std::map<GroupKey, std::vector<SegmentScore>>& groups);

}  // namespace rsu
