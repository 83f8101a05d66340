#include "rsu/node_runtime.hpp"

#include <httplib.h>

#include "rsu/error.hpp"

namespace rsu {

using nlohmann::json;

NodeRuntime::NodeRuntime(std::unique_ptr<RsuNode> node, std::unique_ptr<Backend> backend, Clock clock)
    : node_(std::move(node)), backend_(std::move(backend)), clock_(std::move(clock)) {
  if (!node_ || !backend_) throw Error(ErrorCode::validation, "runtime needs a node and a backend");
  id_ = node_->id();
  publish();
}

NodeRuntime::~NodeRuntime() { stop(); }

void NodeRuntime::start() {
  std::lock_guard lock(queue_mutex_);
  if (loop_.joinable()) return;
  stopping_ = false;
  loop_ = std::thread([this] { run(); });
}

void NodeRuntime::stop() {
  if (http_) {
    http_->stop();
    if (http_thread_.joinable()) http_thread_.join();
  }
  {
    std::lock_guard lock(queue_mutex_);
    stopping_ = true;
  }
  queue_cv_.notify_all();
  if (loop_.joinable()) loop_.join();
}

void NodeRuntime::post(std::function<void()> task) {
  {
    std::lock_guard lock(queue_mutex_);
    tasks_.push_back(std::move(task));
  }
  queue_cv_.notify_one();
}

void NodeRuntime::run() {
  for (;;) {
    std::function<void()> task;
    {
      std::unique_lock lock(queue_mutex_);
      queue_cv_.wait(lock, [this] { return stopping_ || !tasks_.empty(); });
      if (tasks_.empty()) return;
      task = std::move(tasks_.front());
      tasks_.pop_front();
    }
    task();
    publish();
  }
}

void NodeRuntime::publish() {
  auto copy = std::make_shared<const NodeState>(node_->state());
  std::lock_guard lock(snapshot_mutex_);
  snapshot_ = std::move(copy);
}

std::shared_ptr<const NodeState> NodeRuntime::snapshot() const {
  std::lock_guard lock(snapshot_mutex_);
  return snapshot_;
}

json NodeRuntime::query(std::string_view kind) const { return query_snapshot(*snapshot(), kind); }

std::future<std::vector<Alert>> NodeRuntime::submit_segment(Segment segment) {
  auto promise = std::make_shared<std::promise<std::vector<Alert>>>();
  auto future = promise->get_future();
  post([this, promise, segment = std::move(segment)] {
    try {
      auto alerts = node_->process_segment(segment, *backend_, clock_());
      if (!alerts.empty() && alert_sink_) alert_sink_(id_, alerts);
      publish();  // waiters see the state this segment produced
      promise->set_value(std::move(alerts));
    } catch (...) {
      promise->set_exception(std::current_exception());
    }
  });
  return future;
}

void NodeRuntime::post_message(std::string document) {
  post([this, document = std::move(document)] { node_->handle_message(document); });
}

std::string NodeRuntime::submit_observation(Observation observation) {
  if (observation.text.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw Error(ErrorCode::validation, "observation text is empty", id_);
  }
  if (observation.observation_id.empty()) {
    observation.observation_id = id_ + "-o" + std::to_string(++next_observation_);
  }
  auto id = observation.observation_id;
  post([this, observation = std::move(observation)]() mutable {
    node_->accept_observation(std::move(observation), clock_());
  });
  return id;
}

std::future<void> NodeRuntime::barrier() {
  auto promise = std::make_shared<std::promise<void>>();
  auto future = promise->get_future();
  post([this, promise] {
    publish();
    promise->set_value();
  });
  return future;
}

int NodeRuntime::serve_http(const std::string& host, int port, std::shared_ptr<const Taxonomy> taxonomy) {
  if (http_) throw Error(ErrorCode::precondition, "HTTP already served", id_);
  http_ = std::make_unique<httplib::Server>();
  http_->set_default_headers({{"Access-Control-Allow-Origin", "*"},
                              {"Access-Control-Allow-Headers", "Content-Type"},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  auto reply = [](httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  };

  http_->Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  http_->Get("/state", [this, reply](const httplib::Request& req, httplib::Response& res) {
    const auto kind = req.has_param("kind") ? req.get_param_value("kind") : std::string("latest");
    try {
      reply(res, 200, query(kind));
    } catch (const Error& e) {
      reply(res, 400, {{"error", e.what()}});
    }
  });

  http_->Post("/observe", [this, reply](const httplib::Request& req, httplib::Response& res) {
    try {
      const auto doc = json::parse(req.body);
      auto observation = parse_observation(doc);
      observation.received_at = clock_();
      const auto target = doc.value("relay_to", std::string{});
      if (!target.empty() && target != id_) {
        if (observation.text.find_first_not_of(" \t\r\n") == std::string::npos) {
          throw Error(ErrorCode::validation, "observation text is empty");
        }
        if (observation.observation_id.empty()) {
          observation.observation_id = id_ + "-o" + std::to_string(++next_observation_);
        }
        if (!relay_sink_ || !relay_sink_(target, observation)) {
          reply(res, 404, {{"error", "unknown relay target '" + target + "'"}});
          return;
        }
        reply(res, 200, {{"observation_id", observation.observation_id}, {"rsu_id", id_}, {"relayed_to", target}});
        return;
      }
      const auto id = submit_observation(std::move(observation));
      reply(res, 200, {{"observation_id", id}, {"rsu_id", id_}});
    } catch (const json::exception& e) {
      reply(res, 400, {{"error", std::string("malformed document: ") + e.what()}});
    } catch (const Error& e) {
      reply(res, 400, {{"error", e.what()}});
    }
  });

  http_->Post("/ingest", [this, reply, taxonomy](const httplib::Request& req, httplib::Response& res) {
    try {
      auto segment = parse_segment(json::parse(req.body), taxonomy.get());
      auto alerts = submit_segment(std::move(segment)).get();
      json out{{"rsu_id", id_}, {"alerts", json::array()}};
      for (const auto& a : alerts) out["alerts"].push_back(to_json(a));
      const auto state = snapshot();
      if (!state->outputs.empty()) out["output"] = to_json(state->outputs.back());
      reply(res, 200, out);
    } catch (const json::exception& e) {
      reply(res, 400, {{"error", std::string("malformed document: ") + e.what()}});
    } catch (const Error& e) {
      reply(res, 400, {{"error", e.what()}});
    }
  });

  int bound = port;
  if (port == 0) {
    bound = http_->bind_to_any_port(host);
  } else if (!http_->bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) {
    http_.reset();
    throw Error(ErrorCode::network, "address in use: " + host + ":" + std::to_string(port), id_);
  }
  http_thread_ = std::thread([this] { http_->listen_after_bind(); });
  http_->wait_until_ready();
  return bound;
}

}  // namespace rsu
