#pragma once

#include <atomic>
#include <condition_variable>
#include <deque>
#include <functional>
#include <future>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include <json.hpp>

#include "rsu/node.hpp"

namespace httplib {
class Server;
}

namespace rsu {

// Runs an RsuNode on its own event loop thread. Segment processing, peer
// messages and observations are queued tasks; queries read the snapshot
// published after the last task and never wait for the loop.
class NodeRuntime {
 public:
  using AlertSink = std::function<void(const std::string& origin, const std::vector<Alert>&)>;
  /// Forwards an observation to another RSU; returns false if the target is unknown.
  using RelaySink = std::function<bool(const std::string& target, const Observation&)>;
  using Clock = std::function<std::int64_t()>;

  NodeRuntime(std::unique_ptr<RsuNode> node, std::unique_ptr<Backend> backend, Clock clock);
  ~NodeRuntime();
  NodeRuntime(const NodeRuntime&) = delete;
  NodeRuntime& operator=(const NodeRuntime&) = delete;

  void set_alert_sink(AlertSink sink) { alert_sink_ = std::move(sink); }
  void set_relay_sink(RelaySink sink) { relay_sink_ = std::move(sink); }

  void start();
  void stop();

  /// The future completes after the snapshot reflects this segment.
  std::future<std::vector<Alert>> submit_segment(Segment segment);
  void post_message(std::string document);
  /// Validates and queues the observation; returns its id without waiting.
  std::string submit_observation(Observation observation);
  /// Completes once every task queued before it has run and been published.
  std::future<void> barrier();

  nlohmann::json query(std::string_view kind) const;
  std::shared_ptr<const NodeState> snapshot() const;

  /// Serves GET /state, POST /observe and POST /ingest. Port 0 picks a free
  /// port. Returns the bound port; throws Error(network) if it is in use.
  int serve_http(const std::string& host, int port, std::shared_ptr<const Taxonomy> taxonomy);

  const std::string& id() const noexcept { return id_; }

 private:
  void post(std::function<void()> task);
  void run();
  void publish();

  std::string id_;
  std::unique_ptr<RsuNode> node_;
  std::unique_ptr<Backend> backend_;
  Clock clock_;
  AlertSink alert_sink_;
  RelaySink relay_sink_;
  std::atomic<std::uint64_t> next_observation_{0};

  std::mutex queue_mutex_;
  std::condition_variable queue_cv_;
  std::deque<std::function<void()>> tasks_;
  bool stopping_ = false;
  std::thread loop_;

  mutable std::mutex snapshot_mutex_;
  std::shared_ptr<const NodeState> snapshot_;

  std::unique_ptr<httplib::Server> http_;
  std::thread http_thread_;
};

}  // namespace rsu
