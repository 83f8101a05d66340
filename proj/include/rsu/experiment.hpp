#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rsu/backend.hpp"
#include "rsu/evaluation.hpp"
#include "rsu/network.hpp"
#include "rsu/node.hpp"
#include "rsu/node_runtime.hpp"
#include "rsu/socket_transport.hpp"

namespace rsu {

enum class StrategyMode { on, off, both };

StrategyMode parse_strategy_mode(const std::string& text);
std::string to_string(StrategyMode mode);

struct BackendSelection {
  std::string kind = "mock";  // mock | remote | null
  std::string label;          // report column; defaults to kind
  MockConfig mock;
  RemoteConfig remote;

  std::string column() const { return label.empty() ? kind : label; }
};

struct ServeConfig {
  std::string host = "127.0.0.1";
  int http_base_port = 8600;       // 0: any free port per node
  int transport_base_port = 9600;  // 0: any free port per node
  int segment_period_ms = 0;       // pacing when replaying the manifest
  bool replay_manifest = true;
};

struct ExperimentConfig {
  std::filesystem::path manifest;
  std::filesystem::path taxonomy;
  int nodes = 3;
  StrategyMode prompt_strategy = StrategyMode::both;
  KeyframePolicy keyframe_policy = KeyframePolicy::every(15);
  int window_half_width = 8;
  std::size_t context_examples = 3;
  std::optional<std::filesystem::path> templates_dir;
  std::string template_id = "default";
  std::string raw_template_id = "raw";
  BackendSelection backend;
  LinkConfig link;
  std::vector<std::string> hazard_set = default_hazard_set();
  std::filesystem::path output_dir = "out";
  std::vector<int> batch_sizes{1, 15, 30};
  int frames_per_call = 1;
  /// Virtual time between consecutive segment dispatches.
  int segment_period_ms = 1000;
  ServeConfig serve;

  void validate() const;
  /// Relative paths resolve against `base_dir`.
  static ExperimentConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static ExperimentConfig load_file(const std::filesystem::path& path);
  void apply_seed(std::uint64_t seed);
};

std::unique_ptr<Backend> make_backend(const BackendSelection& selection, std::shared_ptr<const Taxonomy> taxonomy);
std::shared_ptr<const TemplateRegistry> make_templates(const ExperimentConfig& config);
NodeConfig make_node_config(const ExperimentConfig& config, bool prompt_strategy,
                            std::shared_ptr<const TemplateRegistry> templates);

struct AlertLogEntry {
  bool prompt_strategy = true;
  Alert alert;
  DeliveryReport report;
  /// Virtual time at which each peer surfaced the alert.
  std::vector<std::pair<std::string, double>> surfaced_at;
};

struct ExperimentResult {
  AccuracyReport accuracy;
  TimingTable timing;
  std::vector<AlertLogEntry> alerts;
  std::vector<std::filesystem::path> files;
  std::vector<std::string> unscored_segments;
};

/// Splits every segment across the simulated RSUs, processes, scores and
/// aggregates, then writes accuracy.{txt,json}, timing.{txt,json},
/// alerts.jsonl and outputs.jsonl into the output directory.
ExperimentResult run_experiment(const ExperimentConfig& config);

struct LiveNodeInfo {
  std::string rsu_id;
  std::string address;  // transport address
  int http_port = 0;
};

// Live RSUs over real sockets with their HTTP query endpoints.
class LiveDeployment {
 public:
  explicit LiveDeployment(const ExperimentConfig& config);
  ~LiveDeployment();
  LiveDeployment(const LiveDeployment&) = delete;
  LiveDeployment& operator=(const LiveDeployment&) = delete;

  const std::vector<LiveNodeInfo>& nodes() const noexcept { return info_; }
  NodeRuntime& node(std::size_t i) { return *runtimes_.at(i); }
  std::shared_ptr<const Taxonomy> taxonomy() const { return taxonomy_; }

  /// Dispatches the parts of every manifest segment to the nodes in order.
  void replay_manifest();
  void stop();

 private:
  ExperimentConfig config_;
  std::shared_ptr<const Taxonomy> taxonomy_;
  std::unique_ptr<SocketTransport> transport_;
  std::unique_ptr<EdgeNetwork> network_;
  std::mutex network_mutex_;
  std::vector<std::unique_ptr<NodeRuntime>> runtimes_;
  std::vector<LiveNodeInfo> info_;
  bool stopped_ = false;
};

}  // namespace rsu
