#include "rsu/experiment.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <fstream>
#include <future>
#include <thread>

#include "rsu/error.hpp"

namespace rsu {

using nlohmann::json;
namespace fs = std::filesystem;

StrategyMode parse_strategy_mode(const std::string& text) {
  if (text == "on") return StrategyMode::on;
  if (text == "off") return StrategyMode::off;
  if (text == "both") return StrategyMode::both;
  throw Error(ErrorCode::validation, "prompt strategy must be on, off or both (got '" + text + "')");
}

std::string to_string(StrategyMode mode) {
  switch (mode) {
    case StrategyMode::on: return "on";
    case StrategyMode::off: return "off";
    case StrategyMode::both: return "both";
  }
  return "both";
}

void ExperimentConfig::validate() const {
  if (nodes < 1) throw Error(ErrorCode::validation, "node count must be >= 1");
  if (window_half_width < 0) throw Error(ErrorCode::validation, "window half-width must be >= 0");
  if (frames_per_call < 1) throw Error(ErrorCode::validation, "frames_per_call must be >= 1");
  if (segment_period_ms < 0) throw Error(ErrorCode::validation, "segment_period_ms must be >= 0");
  for (int b : batch_sizes) {
    if (b < 1) throw Error(ErrorCode::validation, "batch sizes must be positive");
  }
  if (backend.kind != "mock" && backend.kind != "remote" && backend.kind != "null") {
    throw Error(ErrorCode::validation, "backend must be mock, remote or null (got '" + backend.kind + "')");
  }
  link.validate();
}

ExperimentConfig ExperimentConfig::from_json(const json& j, const fs::path& base_dir) {
  ExperimentConfig c;
  auto path = [&](const std::string& key) {
    fs::path p = j.at(key).get<std::string>();
    return p.is_relative() && !base_dir.empty() ? base_dir / p : p;
  };
  try {
    c.manifest = path("manifest");
    c.taxonomy = path("taxonomy");
    c.nodes = j.value("nodes", c.nodes);
    if (j.contains("prompt_strategy")) {
      const auto& ps = j.at("prompt_strategy");
      c.prompt_strategy = ps.is_boolean() ? (ps.get<bool>() ? StrategyMode::on : StrategyMode::off)
                                          : parse_strategy_mode(ps.get<std::string>());
    }
    if (j.contains("keyframe_policy")) c.keyframe_policy = KeyframePolicy::parse(j.at("keyframe_policy").get<std::string>());
    c.window_half_width = j.value("window_half_width", c.window_half_width);
    c.context_examples = j.value("context_examples", c.context_examples);
    if (j.contains("templates_dir")) c.templates_dir = path("templates_dir");
    c.template_id = j.value("template", c.template_id);
    c.raw_template_id = j.value("raw_template", c.raw_template_id);
    if (j.contains("backend")) {
      const auto& b = j.at("backend");
      c.backend.kind = b.value("kind", c.backend.kind);
      c.backend.label = b.value("label", std::string{});
      if (b.contains("mock")) {
        const auto& m = b.at("mock");
        c.backend.mock.corruption_rate = m.value("corruption_rate", 0.0);
        c.backend.mock.unstructured_bias = m.value("unstructured_bias", 0.0);
        c.backend.mock.synthetic_latency_ms = m.value("synthetic_latency_ms", 0);
        c.backend.mock.seed = m.value("seed", std::uint64_t{0});
      }
      if (b.contains("remote")) {
        const auto& r = b.at("remote");
        c.backend.remote.url = r.value("url", c.backend.remote.url);
        c.backend.remote.deadline_ms = r.value("deadline_ms", c.backend.remote.deadline_ms);
        const auto mode = r.value("frames", std::string("ref"));
        if (mode != "ref" && mode != "b64") throw Error(ErrorCode::validation, "remote frames must be ref or b64");
        c.backend.remote.inline_frames = mode == "b64";
      }
    }
    if (j.contains("link")) c.link = LinkConfig::from_json(j.at("link"));
    if (j.contains("hazard_set")) c.hazard_set = j.at("hazard_set").get<std::vector<std::string>>();
    if (j.contains("output_dir")) c.output_dir = path("output_dir");
    if (j.contains("batch_sizes")) c.batch_sizes = j.at("batch_sizes").get<std::vector<int>>();
    c.frames_per_call = j.value("frames_per_call", c.frames_per_call);
    c.segment_period_ms = j.value("segment_period_ms", c.segment_period_ms);
    if (j.contains("serve")) {
      const auto& s = j.at("serve");
      c.serve.host = s.value("host", c.serve.host);
      c.serve.http_base_port = s.value("http_base_port", c.serve.http_base_port);
      c.serve.transport_base_port = s.value("transport_base_port", c.serve.transport_base_port);
      c.serve.segment_period_ms = s.value("segment_period_ms", c.serve.segment_period_ms);
      c.serve.replay_manifest = s.value("replay_manifest", c.serve.replay_manifest);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse, std::string("bad experiment config: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::not_found, "cannot open config", path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::parse, e.what(), path.string());
  }
  try {
    return from_json(j, path.parent_path());
  } catch (const Error& e) {
    throw Error(e.code(), e.what(), path.string());
  }
}

void ExperimentConfig::apply_seed(std::uint64_t seed) {
  backend.mock.seed = seed;
  link.seed = seed;
}

std::unique_ptr<Backend> make_backend(const BackendSelection& selection, std::shared_ptr<const Taxonomy> taxonomy) {
  if (selection.kind == "mock") return std::make_unique<MockBackend>(std::move(taxonomy), selection.mock);
  if (selection.kind == "remote") return std::make_unique<RemoteBackend>(selection.remote);
  if (selection.kind == "null") return std::make_unique<NullBackend>();
  throw Error(ErrorCode::validation, "unknown backend '" + selection.kind + "'");
}

std::shared_ptr<const TemplateRegistry> make_templates(const ExperimentConfig& config) {
  auto registry = std::make_shared<TemplateRegistry>(TemplateRegistry::builtin());
  if (config.templates_dir) registry->load_directory(*config.templates_dir);
  registry->get(config.template_id);
  registry->get(config.raw_template_id);
  return registry;
}

NodeConfig make_node_config(const ExperimentConfig& config, bool prompt_strategy,
                            std::shared_ptr<const TemplateRegistry> templates) {
  NodeConfig nc;
  nc.hazard_set = config.hazard_set;
  nc.prompt_strategy = prompt_strategy;
  nc.prompt.keyframes = config.keyframe_policy;
  nc.prompt.window_half_width = config.window_half_width;
  nc.prompt.context_examples = config.context_examples;
  nc.template_id = config.template_id;
  nc.raw_template_id = config.raw_template_id;
  nc.templates = std::move(templates);
  return nc;
}

namespace {

std::string node_id(int i) { return "rsu-" + std::to_string(i + 1); }

struct PassResult {
  std::vector<SegmentScore> scores;
  std::vector<std::string> unscored;
  std::vector<AlertLogEntry> alerts;
  std::vector<json> outputs;
};

PassResult run_pass(const ExperimentConfig& config, bool strategy, const std::vector<Segment>& segments,
                    std::shared_ptr<const Taxonomy> taxonomy, std::shared_ptr<const TemplateRegistry> templates) {
  SimulatedTransport transport(config.link);
  EdgeNetwork network(Topology(AddressPool::ipv4_block("10.45.0.", 2, 253), config.link), transport);

  std::vector<std::unique_ptr<RsuNode>> nodes;
  std::vector<std::unique_ptr<Backend>> backends;
  std::map<std::string, std::vector<std::pair<std::string, double>>> surfaced;
  for (int i = 0; i < config.nodes; ++i) {
    nodes.push_back(std::make_unique<RsuNode>(node_id(i), taxonomy, make_node_config(config, strategy, templates)));
    backends.push_back(make_backend(config.backend, taxonomy));
  }
  for (int i = 0; i < config.nodes; ++i) {
    auto* node = nodes[i].get();
    network.register_node(node->id(), [node, &surfaced](const std::string& doc, double at) {
      if (!node->handle_message(doc)) return;
      const auto envelope = parse_envelope(json::parse(doc));
      if (envelope.type == MessageType::alert) {
        surfaced[envelope.payload.at("alert_id").get<std::string>()].emplace_back(node->id(), at);
      }
    });
  }
  transport.run_until_idle();

  PassResult result;
  std::map<std::string, std::size_t> alert_log_index;
  for (std::size_t s = 0; s < segments.size(); ++s) {
    const auto& segment = segments[s];
    const double base = transport.now_ms() > static_cast<double>(s) * config.segment_period_ms
                            ? transport.now_ms()
                            : static_cast<double>(s) * config.segment_period_ms;
    const int part_count = std::min<int>(config.nodes, static_cast<int>(segment.frames.size()));
    const auto parts = split_segment(segment, part_count);

    std::vector<std::int64_t> at(parts.size());
    std::vector<std::future<std::vector<Alert>>> work;
    for (std::size_t p = 0; p < parts.size(); ++p) {
      at[p] = static_cast<std::int64_t>(base) + parts[p].frames.front().timestamp_ms;
      work.push_back(std::async(std::launch::async, [&, p] {
        return nodes[p]->process_segment(parts[p], *backends[p], at[p]);
      }));
    }
    std::vector<std::vector<Alert>> alerts(parts.size());
    for (std::size_t p = 0; p < parts.size(); ++p) alerts[p] = work[p].get();

    for (std::size_t p = 0; p < parts.size(); ++p) {
      transport.advance_to(static_cast<double>(at[p]));
      for (const auto& alert : alerts[p]) {
        auto report = network.broadcast(nodes[p]->id(), MessageType::alert, to_json(alert));
        alert_log_index[alert.alert_id] = result.alerts.size();
        result.alerts.push_back({strategy, alert, std::move(report), {}});
      }
    }

    double narration = 0.0, reasoning = 0.0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
      const auto& out = nodes[p]->state().outputs.back();
      narration += out.narration_score.value_or(0.0);
      reasoning += out.reasoning_score.value_or(0.0);
      json line = to_json(out);
      line.erase("latency_ms");
      line["rsu_id"] = nodes[p]->id();
      line["prompt_strategy"] = strategy;
      result.outputs.push_back(std::move(line));
    }
    if (segment.annotation.items.empty() || segment.annotation.reasoning.empty()) {
      result.unscored.push_back(segment.id);
    } else {
      const auto n = static_cast<double>(parts.size());
      result.scores.push_back({segment.id, narration / n, reasoning / n});
    }
  }
  transport.run_until_idle();

  for (auto& [alert_id, list] : surfaced) {
    auto it = alert_log_index.find(alert_id);
    if (it != alert_log_index.end()) result.alerts[it->second].surfaced_at = list;
  }
  return result;
}

void write_text(const fs::path& path, const std::string& text, std::vector<fs::path>& files) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::not_found, "cannot write report", path.string());
  out << text;
  files.push_back(path);
}

json to_json(const AlertLogEntry& e) {
  json surfaced = json::array();
  for (const auto& [peer, at] : e.surfaced_at) surfaced.push_back({{"peer", peer}, {"at", at}});
  return {{"prompt_strategy", e.prompt_strategy},
          {"alert", rsu::to_json(e.alert)},
          {"delivery", e.report.to_json()},
          {"surfaced", std::move(surfaced)}};
}

const Segment& timing_segment(const std::vector<Segment>& segments, const std::vector<int>& batch_sizes) {
  int needed = 1;
  for (int b : batch_sizes) needed = std::max(needed, b);
  for (const auto& s : segments) {
    if (static_cast<int>(s.frames.size()) >= needed && !s.annotation.empty()) return s;
  }
  throw Error(ErrorCode::precondition,
              "no annotated segment has the " + std::to_string(needed) + " frames the timing table needs");
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  auto taxonomy = std::make_shared<const Taxonomy>(Taxonomy::load_file(config.taxonomy));
  const auto segments = load_manifest_file(config.manifest, taxonomy.get());
  if (segments.empty()) throw Error(ErrorCode::validation, "manifest has no segments", config.manifest.string());
  const auto templates = make_templates(config);

  std::vector<bool> passes;
  if (config.prompt_strategy != StrategyMode::off) passes.push_back(true);
  if (config.prompt_strategy != StrategyMode::on) passes.push_back(false);

  ExperimentResult result;
  std::map<GroupKey, std::vector<SegmentScore>> groups;
  std::vector<json> outputs;
  for (bool strategy : passes) {
    auto pass = run_pass(config, strategy, segments, taxonomy, templates);
    if (pass.scores.empty()) throw Error(ErrorCode::validation, "no fully annotated segment to score", config.manifest.string());
    groups[{config.backend.column(), strategy}] = std::move(pass.scores);
    for (auto& a : pass.alerts) result.alerts.push_back(std::move(a));
    for (auto& o : pass.outputs) outputs.push_back(std::move(o));
    if (strategy || config.prompt_strategy == StrategyMode::off) result.unscored_segments = pass.unscored;
  }
  result.accuracy = aggregate(groups);

  const auto& timed = timing_segment(segments, config.batch_sizes);
  SimulatedLink link(config.link);
  if (config.backend.kind == "remote") {
    auto backend = make_backend(config.backend, taxonomy);
    TimingConfig tc;
    tc.frames_per_call = config.frames_per_call;
    tc.prompt.keyframes = config.keyframe_policy;
    tc.prompt.window_half_width = config.window_half_width;
    result.timing = measure_response(*backend, timed, *taxonomy, config.batch_sizes, tc, &link);
  } else {
    const double per_call = config.backend.kind == "mock" ? config.backend.mock.synthetic_latency_ms : 0.0;
    result.timing = model_response(timed, config.batch_sizes, config.frames_per_call, per_call, &link);
  }

  fs::create_directories(config.output_dir);
  const auto& dir = config.output_dir;
  write_text(dir / "accuracy.txt", result.accuracy.render_table(), result.files);
  write_text(dir / "accuracy.json", result.accuracy.to_json().dump(2) + "\n", result.files);
  write_text(dir / "timing.txt", result.timing.render(), result.files);
  write_text(dir / "timing.json", result.timing.to_json().dump(2) + "\n", result.files);
  std::string lines;
  for (const auto& a : result.alerts) lines += to_json(a).dump() + "\n";
  write_text(dir / "alerts.jsonl", lines, result.files);
  lines.clear();
  for (const auto& o : outputs) lines += o.dump() + "\n";
  write_text(dir / "outputs.jsonl", lines, result.files);
  return result;
}

namespace {

// Distinct free ports; the probe sockets stay open until all are chosen.
std::vector<int> free_ports(const std::string& host, int count) {
  std::vector<int> fds, ports;
  for (int i = 0; i < count; ++i) {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = 0;
    ::inet_pton(AF_INET, host.c_str(), &addr.sin_addr);
    socklen_t len = sizeof addr;
    int port = -1;
    if (fd >= 0 && ::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0 &&
        ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len) == 0) {
      port = ntohs(addr.sin_port);
    }
    if (fd >= 0) fds.push_back(fd);
    if (port <= 0) break;
    ports.push_back(port);
  }
  for (int fd : fds) ::close(fd);
  if (static_cast<int>(ports.size()) != count) throw Error(ErrorCode::network, "no free port", host);
  return ports;
}

}  // namespace

LiveDeployment::LiveDeployment(const ExperimentConfig& config) : config_(config) {
  config_.validate();
  taxonomy_ = std::make_shared<const Taxonomy>(Taxonomy::load_file(config_.taxonomy));
  const auto templates = make_templates(config_);
  const bool strategy = config_.prompt_strategy != StrategyMode::off;

  std::vector<int> ports;
  if (config_.serve.transport_base_port > 0) {
    for (int i = 0; i < config_.nodes; ++i) ports.push_back(config_.serve.transport_base_port + i);
  } else {
    ports = free_ports(config_.serve.host, config_.nodes);
  }
  std::vector<std::string> addresses;
  for (int port : ports) addresses.push_back(config_.serve.host + ":" + std::to_string(port));
  transport_ = std::make_unique<SocketTransport>();
  network_ = std::make_unique<EdgeNetwork>(Topology(AddressPool(addresses), config_.link), *transport_);

  const auto epoch = std::chrono::steady_clock::now();
  auto clock = [epoch] {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - epoch).count();
  };
  for (int i = 0; i < config_.nodes; ++i) {
    auto node = std::make_unique<RsuNode>(node_id(i), taxonomy_, make_node_config(config_, strategy, templates));
    runtimes_.push_back(std::make_unique<NodeRuntime>(std::move(node), make_backend(config_.backend, taxonomy_), clock));
  }
  try {
    for (auto& rt : runtimes_) {
      auto* runtime = rt.get();
      rt->set_alert_sink([this](const std::string& origin, const std::vector<Alert>& alerts) {
        std::lock_guard lock(network_mutex_);
        for (const auto& a : alerts) network_->broadcast(origin, MessageType::alert, rsu::to_json(a));
      });
      rt->set_relay_sink([this, runtime](const std::string& target, const Observation& o) {
        std::lock_guard lock(network_mutex_);
        if (!network_->topology().contains(target)) return false;
        return network_->send_to(runtime->id(), target, MessageType::observation_relay, rsu::to_json(o)).delivered;
      });
      rt->start();
      std::lock_guard lock(network_mutex_);
      info_.push_back({rt->id(), network_->register_node(rt->id(), [runtime](const std::string& doc, double) {
                         runtime->post_message(doc);
                       }),
                       0});
    }
    // HTTP binds only after every transport port is held.
    for (std::size_t i = 0; i < runtimes_.size(); ++i) {
      const int http_port = config_.serve.http_base_port > 0 ? config_.serve.http_base_port + static_cast<int>(i) : 0;
      info_[i].http_port = runtimes_[i]->serve_http(config_.serve.host, http_port, taxonomy_);
    }
  } catch (...) {
    stop();
    throw;
  }
}

LiveDeployment::~LiveDeployment() { stop(); }

void LiveDeployment::replay_manifest() {
  const auto segments = load_manifest_file(config_.manifest, taxonomy_.get());
  for (const auto& segment : segments) {
    const int part_count = std::min<int>(config_.nodes, static_cast<int>(segment.frames.size()));
    const auto parts = split_segment(segment, part_count);
    std::vector<std::future<std::vector<Alert>>> pending;
    for (std::size_t p = 0; p < parts.size(); ++p) pending.push_back(runtimes_[p]->submit_segment(parts[p]));
    for (auto& f : pending) f.get();
    if (config_.serve.segment_period_ms > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(config_.serve.segment_period_ms));
    }
  }
}

void LiveDeployment::stop() {
  if (stopped_) return;
  stopped_ = true;
  for (auto& rt : runtimes_) rt->stop();
  if (transport_) transport_->stop();
}

}  // namespace rsu
