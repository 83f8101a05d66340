#include "rsu/network.hpp"

#include <cmath>

#include "rsu/error.hpp"
#include "rsu/text.hpp"

namespace rsu {

using nlohmann::json;

std::string_view to_string(MessageType t) noexcept {
  switch (t) {
    case MessageType::alert: return "alert";
    case MessageType::status: return "status";
    case MessageType::observation_relay: return "observation-relay";
  }
  return "unknown";
}

std::optional<MessageType> parse_message_type(std::string_view name) noexcept {
  for (auto t : {MessageType::alert, MessageType::status, MessageType::observation_relay}) {
    if (to_string(t) == name) return t;
  }
  return std::nullopt;
}

json to_json(const Envelope& e) {
  return {{"msg_type", to_string(e.type)},
          {"origin", e.origin},
          {"seq", e.seq},
          {"payload", e.payload},
          {"sent_at", e.sent_at}};
}

Envelope parse_envelope(const json& doc) {
  if (!doc.is_object()) throw Error(ErrorCode::parse, "envelope must be an object");
  for (const char* key : {"msg_type", "origin", "seq", "payload", "sent_at"}) {
    if (!doc.contains(key)) throw Error(ErrorCode::parse, std::string("envelope missing '") + key + "'");
  }
  Envelope e;
  try {
    const auto type_name = doc.at("msg_type").get<std::string>();
    auto type = parse_message_type(type_name);
    if (!type) throw Error(ErrorCode::parse, "unknown msg_type '" + type_name + "'");
    e.type = *type;
    e.origin = doc.at("origin").get<std::string>();
    e.seq = doc.at("seq").get<std::uint64_t>();
    e.sent_at = doc.at("sent_at").get<std::int64_t>();
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::parse, std::string("bad envelope field: ") + ex.what());
  }
  e.payload = doc.at("payload");
  return e;
}

std::string serialize(const Envelope& e) { return to_json(e).dump(); }

std::string encode_frame(std::string_view document) {
  const auto n = static_cast<std::uint32_t>(document.size());
  std::string out;
  out.reserve(4 + document.size());
  out.push_back(static_cast<char>((n >> 24) & 0xFF));
  out.push_back(static_cast<char>((n >> 16) & 0xFF));
  out.push_back(static_cast<char>((n >> 8) & 0xFF));
  out.push_back(static_cast<char>(n & 0xFF));
  out.append(document);
  return out;
}

std::optional<std::string> FrameDecoder::next() {
  if (buffer_.size() < 4) return std::nullopt;
  const auto* p = reinterpret_cast<const unsigned char*>(buffer_.data());
  const std::size_t n = (std::size_t{p[0]} << 24) | (std::size_t{p[1]} << 16) | (std::size_t{p[2]} << 8) | p[3];
  if (n > max_frame_) throw Error(ErrorCode::network, "frame of " + std::to_string(n) + " bytes exceeds limit");
  if (buffer_.size() < 4 + n) return std::nullopt;
  std::string doc = buffer_.substr(4, n);
  buffer_.erase(0, 4 + n);
  return doc;
}

void LinkConfig::validate() const {
  if (!(drop_rate >= 0.0 && drop_rate <= 1.0)) throw Error(ErrorCode::validation, "drop_rate must be in [0,1]");
  if (latency.lo_ms < 0.0) throw Error(ErrorCode::validation, "latency must be non-negative");
  if (latency.lo_ms > latency.hi_ms) throw Error(ErrorCode::validation, "latency lo must not exceed hi");
}

LinkConfig LinkConfig::from_json(const json& j) {
  LinkConfig c;
  try {
    if (j.contains("latency")) {
      const auto& l = j.at("latency");
      if (l.is_number()) {
        c.latency = LatencyModel::fixed(l.get<double>());
      } else if (l.contains("fixed")) {
        c.latency = LatencyModel::fixed(l.at("fixed").get<double>());
      } else if (l.contains("uniform")) {
        const auto& u = l.at("uniform");
        c.latency = LatencyModel::uniform(u.at(0).get<double>(), u.at(1).get<double>());
      } else {
        throw Error(ErrorCode::parse, "latency must be {\"fixed\": ms} or {\"uniform\": [lo, hi]}");
      }
    }
    c.drop_rate = j.value("drop_rate", 0.0);
    c.seed = j.value("seed", std::uint64_t{0});
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse, std::string("bad link config: ") + e.what());
  }
  c.validate();
  return c;
}

json LinkConfig::to_json() const {
  json lat = latency.kind == LatencyModel::Kind::fixed ? json{{"fixed", latency.lo_ms}}
                                                       : json{{"uniform", {latency.lo_ms, latency.hi_ms}}};
  return {{"latency", lat}, {"drop_rate", drop_rate}, {"seed", seed}};
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

SimulatedLink::SimulatedLink(LinkConfig config) : config_(config), rng_(config.seed) { config_.validate(); }

LinkOutcome SimulatedLink::sample() {
  // Both draws happen on every call so the stream position stays aligned.
  const double drop_draw = uniform01(rng_);
  const double latency_draw = uniform01(rng_);
  LinkOutcome out;
  out.delivered = drop_draw >= config_.drop_rate;
  out.latency_ms = config_.latency.kind == LatencyModel::Kind::fixed
                       ? config_.latency.lo_ms
                       : config_.latency.lo_ms + latency_draw * (config_.latency.hi_ms - config_.latency.lo_ms);
  return out;
}

LinkOutcome deliver_simulated(SimulatedLink& link, const Envelope&) { return link.sample(); }

AddressPool AddressPool::ipv4_block(const std::string& prefix, int first, int count) {
  std::vector<std::string> out;
  for (int i = 0; i < count; ++i) out.push_back(prefix + std::to_string(first + i));
  return AddressPool(std::move(out));
}

AddressPool AddressPool::loopback_ports(int first_port, int count) {
  std::vector<std::string> out;
  for (int i = 0; i < count; ++i) out.push_back("127.0.0.1:" + std::to_string(first_port + i));
  return AddressPool(std::move(out));
}

std::optional<std::string> AddressPool::allocate() {
  if (next_ >= addresses_.size()) return std::nullopt;
  return addresses_[next_++];
}

Topology::Topology(AddressPool pool, LinkConfig default_link)
    : pool_(std::move(pool)), default_link_(default_link) {
  default_link_.validate();
}

std::string Topology::register_node(const std::string& rsu_id) {
  if (rsu_id.empty()) throw Error(ErrorCode::validation, "empty rsu id");
  if (contains(rsu_id)) throw Error(ErrorCode::duplicate, "rsu '" + rsu_id + "' already registered");
  auto address = pool_.allocate();
  if (!address) throw Error(ErrorCode::pool_exhausted, "address pool exhausted", rsu_id);
  nodes_.emplace(rsu_id, *address);
  order_.push_back(rsu_id);
  return *address;
}

const std::string& Topology::address(const std::string& rsu_id) const {
  auto it = nodes_.find(rsu_id);
  if (it == nodes_.end()) throw Error(ErrorCode::not_found, "rsu '" + rsu_id + "' not registered");
  return it->second;
}

std::vector<std::string> Topology::node_ids() const { return order_; }

std::vector<std::string> Topology::peers(const std::string& rsu_id) const {
  std::vector<std::string> out;
  for (const auto& id : order_) {
    if (id != rsu_id) out.push_back(id);
  }
  return out;
}

void Topology::set_link(const std::string& from, const std::string& to, LinkConfig config) {
  config.validate();
  links_[{from, to}] = config;
}

LinkConfig Topology::link(const std::string& from, const std::string& to) const {
  auto it = links_.find({from, to});
  return it == links_.end() ? default_link_ : it->second;
}

std::size_t DeliveryReport::delivered_count() const {
  std::size_t n = 0;
  for (const auto& d : deliveries) n += d.delivered ? 1 : 0;
  return n;
}

json DeliveryReport::to_json() const {
  json peers = json::array();
  for (const auto& d : deliveries) {
    peers.push_back({{"peer", d.peer}, {"delivered", d.delivered}, {"latency_ms", d.latency_ms}});
  }
  return {{"origin", origin}, {"seq", seq}, {"deliveries", std::move(peers)}};
}

SimulatedTransport::SimulatedTransport(LinkConfig default_link) : default_link_(default_link) {
  default_link_.validate();
}

void SimulatedTransport::set_link(const std::string& from, const std::string& to, LinkConfig config) {
  config.validate();
  configs_[{from, to}] = config;
  links_.erase({from, to});
}

SimulatedLink& SimulatedTransport::link(const std::string& from, const std::string& to) {
  auto key = std::make_pair(from, to);
  auto it = links_.find(key);
  if (it != links_.end()) return it->second;
  auto cfg_it = configs_.find(key);
  LinkConfig cfg = cfg_it == configs_.end() ? default_link_ : cfg_it->second;
  // Independent stream per directed pair.
  cfg.seed ^= fnv1a64(from + "\x1f" + to);
  return links_.emplace(key, SimulatedLink(cfg)).first->second;
}

void SimulatedTransport::attach(const std::string& node_id, const std::string&, MessageHandler handler) {
  handlers_[node_id] = std::move(handler);
}

Delivery SimulatedTransport::send(const std::string& from, const std::string& to, const std::string&,
                                  const Envelope& envelope) {
  auto outcome = deliver_simulated(link(from, to), envelope);
  if (outcome.delivered) {
    events_.push({now_ + outcome.latency_ms, order_++, to, serialize(envelope)});
  }
  return {to, outcome.delivered, outcome.latency_ms};
}

void SimulatedTransport::advance_to(double t) {
  while (!events_.empty() && events_.top().at <= t) {
    auto ev = events_.top();
    events_.pop();
    now_ = std::max(now_, ev.at);
    if (auto it = handlers_.find(ev.to); it != handlers_.end()) it->second(ev.document, now_);
  }
  now_ = std::max(now_, t);
}

void SimulatedTransport::run_until_idle() {
  while (!events_.empty()) advance_to(events_.top().at);
}

DeliveryReport broadcast(const Topology& topology, const Envelope& envelope, Transport& transport) {
  if (!topology.contains(envelope.origin)) {
    throw Error(ErrorCode::not_found, "origin '" + envelope.origin + "' is not registered");
  }
  DeliveryReport report{envelope.origin, envelope.seq, {}};
  for (const auto& peer : topology.peers(envelope.origin)) {
    report.deliveries.push_back(transport.send(envelope.origin, peer, topology.address(peer), envelope));
  }
  return report;
}

EdgeNetwork::EdgeNetwork(Topology topology, Transport& transport)
    : topology_(std::move(topology)), transport_(transport) {}

std::string EdgeNetwork::register_node(const std::string& rsu_id, MessageHandler handler) {
  auto address = topology_.register_node(rsu_id);
  transport_.attach(rsu_id, address, std::move(handler));
  if (topology_.size() > 1) {
    broadcast(rsu_id, MessageType::status, {{"event", "joined"}, {"rsu_id", rsu_id}, {"address", address}});
  }
  return address;
}

Envelope EdgeNetwork::make_envelope(const std::string& origin, MessageType type, json payload) {
  Envelope e;
  e.type = type;
  e.origin = origin;
  e.seq = ++next_seq_[origin];
  e.payload = std::move(payload);
  e.sent_at = static_cast<std::int64_t>(std::llround(transport_.now_ms()));
  return e;
}

DeliveryReport EdgeNetwork::broadcast(const std::string& origin, MessageType type, json payload) {
  return broadcast(make_envelope(origin, type, std::move(payload)));
}

DeliveryReport EdgeNetwork::broadcast(const Envelope& envelope) {
  return rsu::broadcast(topology_, envelope, transport_);
}

Delivery EdgeNetwork::send_to(const std::string& origin, const std::string& peer, MessageType type, json payload) {
  if (!topology_.contains(origin)) throw Error(ErrorCode::not_found, "origin '" + origin + "' is not registered");
  auto e = make_envelope(origin, type, std::move(payload));
  return transport_.send(origin, peer, topology_.address(peer), e);
}

}  // namespace rsu
