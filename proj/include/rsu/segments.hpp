#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rsu/taxonomy.hpp"

namespace rsu {

struct FrameObservation {
  Category category{};
  std::string text;
  bool operator==(const FrameObservation&) const = default;
};

struct FrameRecord {
  int index = 0;
  std::int64_t timestamp_ms = 0;
  std::string image_ref;
  std::vector<FrameObservation> observations;
  bool operator==(const FrameRecord&) const = default;
};

struct AnnotationItem {
  Category category{};
  std::string label;
  std::optional<int> count;  // agents only
  bool operator==(const AnnotationItem&) const = default;
};

/// `actors` holds agents that perform a motion on the same side of a causal
/// connective. Only extracted statements populate it.
struct CausalStatement {
  std::vector<AnnotationItem> causes;
  std::vector<AnnotationItem> effects;
  std::vector<AnnotationItem> actors;
  bool operator==(const CausalStatement&) const = default;
};

struct Annotation {
  std::vector<AnnotationItem> items;
  std::vector<CausalStatement> reasoning;
  bool empty() const noexcept { return items.empty() && reasoning.empty(); }
  bool operator==(const Annotation&) const = default;
};

struct Segment {
  std::string id;
  std::string source_clip;
  std::vector<FrameRecord> frames;
  Annotation annotation;
  /// Index in the source clip of frames[0]; non-zero only for split parts.
  int frame_offset = 0;
  bool operator==(const Segment&) const = default;
};

struct KeyframePolicy {
  enum class Kind { stride, first };
  Kind kind = Kind::stride;
  int stride = 15;

  static KeyframePolicy first_frame() { return {Kind::first, 0}; }
  static KeyframePolicy every(int k) { return {Kind::stride, k}; }
  /// Accepts "first", "stride:K" and "stride(K)".
  static KeyframePolicy parse(const std::string& text);
  std::string to_string() const;
  bool operator==(const KeyframePolicy&) const = default;
};

/// Reads one JSON segment record per line. When `taxonomy` is given, every
/// annotation label must resolve to an entry of the same category and is
/// rewritten to that entry's label.
std::vector<Segment> load_manifest(std::istream& in, const std::string& source_name = "<manifest>",
                                   const Taxonomy* taxonomy = nullptr);
std::vector<Segment> load_manifest_file(const std::filesystem::path& path,
                                        const Taxonomy* taxonomy = nullptr);

/// Parses and validates a single manifest record.
Segment parse_segment(const nlohmann::json& record, const Taxonomy* taxonomy = nullptr);
nlohmann::json to_json(const Segment& segment);
nlohmann::json to_json(const AnnotationItem& item);
nlohmann::json to_json(const CausalStatement& statement);
AnnotationItem parse_annotation_item(const nlohmann::json& j);

/// Splits into `parts` contiguous parts whose sizes differ by at most one,
/// earlier parts taking the remainder. Indices are re-based per part and the
/// whole-clip annotation is copied onto every part.
std::vector<Segment> split_segment(const Segment& segment, int parts);

std::vector<int> select_keyframes(const Segment& segment, const KeyframePolicy& policy);

}  // namespace rsu
