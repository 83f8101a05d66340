#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "rsu/prompt.hpp"
#include "rsu/segments.hpp"
#include "rsu/taxonomy.hpp"

namespace rsu {

class SimulatedLink;

struct BackendRequest {
  std::string request_id;
  std::string prompt_text;
  std::vector<std::string> frame_refs;
  /// Ground truth for oracle-backed test doubles; real backends ignore it.
  std::optional<Annotation> ground_truth;
};

struct BackendResponse {
  std::string request_id;
  std::string narration_text;
  std::string reasoning_text;
  double latency_ms = 0.0;
};

// Narration/reasoning inference boundary. Implementations serve one request
// at a time; callers serialize access per instance.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string name() const = 0;
  /// Throws Error with a backend failure code on failure.
  virtual BackendResponse infer(const BackendRequest& request) = 0;
};

struct MockConfig {
  double corruption_rate = 0.0;
  /// Added to corruption_rate when the prompt lacks the three stream headers.
  double unstructured_bias = 0.0;
  int synthetic_latency_ms = 0;
  std::uint64_t seed = 0;
};

struct MockOutput {
  std::string narration;
  std::string reasoning;
  std::size_t items = 0;
  std::size_t corrupted_items = 0;
  std::size_t statements = 0;
  std::size_t corrupted_statements = 0;
};

/// Renders the annotation as the mock would answer. Each item is, with
/// probability `corruption_rate`, dropped or relabelled within its category;
/// each causal statement is, with the same probability, rendered reversed.
MockOutput mock_render(const Annotation& annotation, const Taxonomy& taxonomy, double corruption_rate,
                       std::uint64_t seed);

/// Narration text of an annotation with no corruption:
/// "3 pedestrians, 1 cyclist, rainy weather".
std::string render_items(std::span<const AnnotationItem> items, const Taxonomy& taxonomy);

bool is_structured_prompt(const std::string& prompt_text);

class MockBackend final : public Backend {
 public:
  MockBackend(std::shared_ptr<const Taxonomy> taxonomy, MockConfig config);
  std::string name() const override { return "mock"; }
  BackendResponse infer(const BackendRequest& request) override;
  const MockConfig& config() const noexcept { return config_; }

 private:
  std::shared_ptr<const Taxonomy> taxonomy_;
  MockConfig config_;
};

/// Answers immediately with empty text.
class NullBackend final : public Backend {
 public:
  std::string name() const override { return "null"; }
  BackendResponse infer(const BackendRequest& request) override;
};

struct RemoteConfig {
  std::string url = "http://127.0.0.1:8080";
  int deadline_ms = 10000;
  /// Send frames as {"ref": path} or as {"b64": file contents}.
  bool inline_frames = false;
};

/// POSTs requests to `<url>/infer`. Any non-200 status is backend-unavailable.
class RemoteBackend final : public Backend {
 public:
  explicit RemoteBackend(RemoteConfig config);
  std::string name() const override { return "remote"; }
  BackendResponse infer(const BackendRequest& request) override;

  static nlohmann::json encode_request(const BackendRequest& request, bool inline_frames);
  static BackendResponse decode_response(const std::string& body, const std::string& request_id);

 private:
  RemoteConfig config_;
};

struct TimingConfig {
  int frames_per_call = 1;
  bool prompt_strategy = true;
  PromptConfig prompt;
  std::string template_id = "default";
};

struct TimingRow {
  int batch = 0;
  int calls = 0;
  bool failed = false;
  std::string error;
  double total_ms = 0.0;
  double per_frame_ms = 0.0;
  double compute_ms = 0.0;    // latency reported by the backend
  double overhead_ms = 0.0;   // prompt building and dispatch
  double transport_ms = 0.0;  // simulated link delay, not slept
};

struct TimingTable {
  std::vector<TimingRow> rows;
  std::string render() const;
  nlohmann::json to_json() const;
};

/// For each batch size b, sends the first b frames as ceil(b / frames_per_call)
/// sequential calls and records wall-clock time. A failed call marks the row
/// failed and stops it.
TimingTable measure_response(Backend& backend, const Segment& segment, const Taxonomy& taxonomy,
                             std::span<const int> batch_sizes, const TimingConfig& config,
                             SimulatedLink* link = nullptr);

/// The same table computed in virtual time from a fixed per-call latency.
TimingTable model_response(const Segment& segment, std::span<const int> batch_sizes, int frames_per_call,
                           double per_call_ms, SimulatedLink* link = nullptr);

}  // namespace rsu
