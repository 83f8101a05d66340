#pragma once

#include <memory>
#include <string>
#include <vector>

#include "rsu/segments.hpp"
#include "rsu/taxonomy.hpp"

namespace rsu::test {

inline std::string data_path(const std::string& rel) { return std::string(RSU_DATA_DIR) + "/" + rel; }

inline std::shared_ptr<const Taxonomy> default_taxonomy() {
  static const auto tax = std::make_shared<const Taxonomy>(Taxonomy::load_file(data_path("taxonomy.tsv")));
  return tax;
}

inline const std::vector<Segment>& fixture_segments() {
  static const auto segs = load_manifest_file(data_path("fixtures/segments.jsonl"), default_taxonomy().get());
  return segs;
}

inline AnnotationItem env(const std::string& label) { return {Category::environment, label, std::nullopt}; }
inline AnnotationItem agent(const std::string& label, std::optional<int> n = std::nullopt) {
  return {Category::agent, label, n};
}
inline AnnotationItem motion(const std::string& label) { return {Category::motion, label, std::nullopt}; }

// Frames 0..n-1 at 33 ms, no observations.
inline Segment blank_segment(const std::string& id, int n) {
  Segment s;
  s.id = id;
  s.source_clip = "clip-" + id;
  for (int i = 0; i < n; ++i) s.frames.push_back({i, i * 33, "f/" + std::to_string(i) + ".jpg", {}});
  return s;
}

}  // namespace rsu::test
