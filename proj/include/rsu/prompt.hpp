#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "rsu/segments.hpp"
#include "rsu/taxonomy.hpp"

namespace rsu {

inline constexpr std::string_view kEnvironmentHeader = "[ENVIRONMENT]";
inline constexpr std::string_view kAgentHeader = "[AGENT]";
inline constexpr std::string_view kMotionHeader = "[MOTION]";
inline constexpr std::string_view kNoneObserved = "none observed";

std::string_view stream_header(Category c) noexcept;

struct PromptConfig {
  KeyframePolicy keyframes = KeyframePolicy::every(15);
  int window_half_width = 8;
  /// Pairwise enrichment descriptions added as context, chosen among pairs
  /// whose two keywords both occur in the streams.
  std::size_t context_examples = 3;
};

/// Inclusive frame-index range.
struct FrameWindow {
  int lo = 0;
  int hi = 0;
  bool contains(int i) const noexcept { return i >= lo && i <= hi; }
  bool operator==(const FrameWindow&) const = default;
};

FrameWindow trajectory_window(int keyframe, int last_index, int half_width);

struct PromptBundle {
  /// False for the unstructured baseline: everything lives in raw_stream.
  bool structured = true;
  std::string environment_stream;
  std::string agent_stream;
  std::string motion_stream;
  std::string raw_stream;
  std::string context;
  std::vector<std::string> frame_refs;
  std::vector<int> keyframes;
  std::vector<FrameWindow> windows;
  // Frames whose observations were written into each stream.
  std::vector<int> environment_frames;
  std::vector<int> agent_frames;
  std::vector<int> motion_frames;

  const std::string& stream(Category c) const;
  /// Adds an edge-user report to the stream of its category.
  void append_observation(Category c, const std::string& text);
};

PromptBundle build_prompt(const Segment& segment, const Taxonomy& taxonomy, const PromptConfig& config);

/// Baseline without prompt strategy: every observation of every frame in
/// order, no headers and no keyframe or window filtering.
PromptBundle build_raw_prompt(const Segment& segment);

struct EnrichmentPair {
  KeywordEntry first;
  KeywordEntry second;
  std::string description_template;  // "{first}" and "{second}" slots

  std::string describe() const;
};

/// One pair per cross-category unordered pair of entries, ordered
/// environment x agent, environment x motion, agent x motion.
std::vector<EnrichmentPair> generate_enrichment_corpus(const Taxonomy& taxonomy);
EnrichmentPair make_enrichment_pair(const KeywordEntry& a, const KeywordEntry& b);

// Templates use the slots {environment} {agent} {motion} {observations} {context}.
class TemplateRegistry {
 public:
  /// Contains "default" (three streams) and "raw" (baseline observations).
  static const TemplateRegistry& builtin();

  TemplateRegistry();
  void add(const std::string& id, std::string text);
  void load_file(const std::string& id, const std::filesystem::path& path);
  /// Registers every `*.txt` in `dir` under its file stem.
  void load_directory(const std::filesystem::path& dir);

  bool contains(const std::string& id) const { return templates_.count(id) > 0; }
  const std::string& get(const std::string& id) const;

 private:
  std::map<std::string, std::string> templates_;
};

std::string render_prompt(const PromptBundle& bundle, const std::string& template_id,
                          const TemplateRegistry& registry = TemplateRegistry::builtin());

}  // namespace rsu
