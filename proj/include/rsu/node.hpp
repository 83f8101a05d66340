#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "rsu/backend.hpp"
#include "rsu/prompt.hpp"
#include "rsu/segments.hpp"
#include "rsu/taxonomy.hpp"

namespace rsu {

struct Alert {
  std::string alert_id;
  std::string origin;
  std::string hazard_label;
  std::string evidence;
  std::int64_t timestamp = 0;
  bool operator==(const Alert&) const = default;
};

nlohmann::json to_json(const Alert& a);
Alert parse_alert(const nlohmann::json& j);

struct Observation {
  std::string observation_id;
  std::string reporter;
  Category category{};
  std::string text;
  std::int64_t received_at = 0;
};

nlohmann::json to_json(const Observation& o);
/// observation_id and received_at are optional in the document.
Observation parse_observation(const nlohmann::json& j);

struct OutputRecord {
  std::string segment_id;
  std::string request_id;
  std::int64_t at = 0;
  bool failed = false;
  std::string error;
  std::string prompt;
  std::string narration;
  std::string reasoning;
  double latency_ms = 0.0;
  std::optional<double> narration_score;
  std::optional<double> reasoning_score;
  std::vector<std::string> alert_ids;
};

nlohmann::json to_json(const OutputRecord& r);

inline const std::vector<std::string>& default_hazard_set() {
  static const std::vector<std::string> set{"speeding", "accident", "sudden braking", "wrong way"};
  return set;
}

struct NodeConfig {
  std::vector<std::string> hazard_set = default_hazard_set();
  bool prompt_strategy = true;
  PromptConfig prompt;
  std::string template_id = "default";
  std::string raw_template_id = "raw";
  std::shared_ptr<const TemplateRegistry> templates;  // builtin when null
};

struct NodeState {
  std::string rsu_id;
  std::optional<Segment> assigned_part;
  std::vector<OutputRecord> outputs;
  std::set<std::string> alerts_seen;
  std::vector<Alert> alerts;  // arrival order, one per alert_id
  std::deque<Observation> pending_observations;
  std::map<std::string, nlohmann::json> peers;  // latest status per peer
  std::size_t dropped_messages = 0;
  std::size_t duplicate_alerts = 0;
};

/// Read-only snapshot for kind "latest", "alerts" or "outputs". Alerts are
/// sorted by timestamp, newest first.
nlohmann::json query_snapshot(const NodeState& state, std::string_view kind);

/// Hazard labels whose phrase occurs in any of `texts`, in hazard-set order.
std::vector<std::string> detect_hazard(std::span<const std::string> texts, std::span<const std::string> hazard_set,
                                       const Taxonomy& taxonomy);

// One roadside unit. Not thread-safe: callers run every operation on the
// node's single event loop.
class RsuNode {
 public:
  /// Throws Error(validation) if a hazard phrase is not a motion or agent
  /// keyword of the taxonomy.
  RsuNode(std::string rsu_id, std::shared_ptr<const Taxonomy> taxonomy, NodeConfig config);

  /// Builds the prompt (merging and clearing pending observations), calls the
  /// backend and returns one alert per newly detected hazard label. A
  /// backend failure is recorded as a failed output.
  std::vector<Alert> process_segment(const Segment& segment, Backend& backend, std::int64_t now_ms);

  /// Applies a wire document. Malformed or unknown messages are counted and
  /// dropped. Returns true when the state changed.
  bool handle_message(const std::string& document);
  bool handle_message(const nlohmann::json& document);

  /// Queues an edge-user report for the next prompt; returns its id.
  std::string accept_observation(Observation observation, std::int64_t now_ms);

  nlohmann::json query_state(std::string_view kind) const { return query_snapshot(state_, kind); }

  const NodeState& state() const noexcept { return state_; }
  const std::string& id() const noexcept { return state_.rsu_id; }
  const NodeConfig& config() const noexcept { return config_; }
  const Taxonomy& taxonomy() const noexcept { return *taxonomy_; }

 private:
  bool record_alert(const Alert& alert);

  std::shared_ptr<const Taxonomy> taxonomy_;
  NodeConfig config_;
  NodeState state_;
  std::uint64_t next_alert_ = 0;
  std::uint64_t next_observation_ = 0;
  std::uint64_t next_request_ = 0;
};

}  // namespace rsu
