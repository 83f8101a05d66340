#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace rsu {

enum class MessageType { alert, status, observation_relay };

std::string_view to_string(MessageType t) noexcept;
std::optional<MessageType> parse_message_type(std::string_view name) noexcept;

struct Envelope {
  MessageType type = MessageType::status;
  std::string origin;
  std::uint64_t seq = 0;
  nlohmann::json payload = nlohmann::json::object();
  std::int64_t sent_at = 0;
};

nlohmann::json to_json(const Envelope& e);
/// Throws Error(parse) on a missing field, wrong type or unknown msg_type.
Envelope parse_envelope(const nlohmann::json& doc);
std::string serialize(const Envelope& e);

/// 4-byte big-endian length prefix followed by the UTF-8 document.
std::string encode_frame(std::string_view document);

class FrameDecoder {
 public:
  explicit FrameDecoder(std::size_t max_frame = 16u << 20) : max_frame_(max_frame) {}
  void feed(std::string_view bytes) { buffer_.append(bytes); }
  /// Next complete document, if any. Throws Error(network) on an oversized frame.
  std::optional<std::string> next();

 private:
  std::string buffer_;
  std::size_t max_frame_;
};

struct LatencyModel {
  enum class Kind { fixed, uniform };
  Kind kind = Kind::fixed;
  double lo_ms = 20.0;
  double hi_ms = 20.0;

  static LatencyModel fixed(double ms) { return {Kind::fixed, ms, ms}; }
  static LatencyModel uniform(double lo, double hi) { return {Kind::uniform, lo, hi}; }
};

struct LinkConfig {
  LatencyModel latency = LatencyModel::fixed(20.0);
  double drop_rate = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
  static LinkConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct LinkOutcome {
  bool delivered = false;
  double latency_ms = 0.0;
};

// Seeded link model: outcome k depends only on the seed and k.
class SimulatedLink {
 public:
  explicit SimulatedLink(LinkConfig config);
  LinkOutcome sample();
  const LinkConfig& config() const noexcept { return config_; }

 private:
  LinkConfig config_;
  std::mt19937_64 rng_;
};

/// One delivery decision for `envelope` over `link`.
LinkOutcome deliver_simulated(SimulatedLink& link, const Envelope& envelope);

double uniform01(std::mt19937_64& rng);

class AddressPool {
 public:
  explicit AddressPool(std::vector<std::string> addresses) : addresses_(std::move(addresses)) {}
  /// prefix + n for n in [first, first + count), e.g. "10.45.0." + 2.
  static AddressPool ipv4_block(const std::string& prefix, int first, int count);
  static AddressPool loopback_ports(int first_port, int count);

  std::optional<std::string> allocate();
  std::size_t capacity() const noexcept { return addresses_.size(); }

 private:
  std::vector<std::string> addresses_;
  std::size_t next_ = 0;
};

// Full mesh of RSUs with per-pair link configuration.
class Topology {
 public:
  explicit Topology(AddressPool pool, LinkConfig default_link = {});

  /// Throws Error(duplicate) or Error(pool_exhausted).
  std::string register_node(const std::string& rsu_id);
  bool contains(const std::string& rsu_id) const { return nodes_.count(rsu_id) > 0; }
  const std::string& address(const std::string& rsu_id) const;
  std::vector<std::string> node_ids() const;
  std::vector<std::string> peers(const std::string& rsu_id) const;
  std::size_t size() const noexcept { return nodes_.size(); }

  void set_link(const std::string& from, const std::string& to, LinkConfig config);
  LinkConfig link(const std::string& from, const std::string& to) const;
  const LinkConfig& default_link() const noexcept { return default_link_; }

 private:
  AddressPool pool_;
  LinkConfig default_link_;
  std::vector<std::string> order_;
  std::map<std::string, std::string> nodes_;
  std::map<std::pair<std::string, std::string>, LinkConfig> links_;
};

/// Receives one wire document and its arrival time on the transport clock.
using MessageHandler = std::function<void(const std::string& document, double received_at_ms)>;

struct Delivery {
  std::string peer;
  bool delivered = false;
  double latency_ms = 0.0;
};

struct DeliveryReport {
  std::string origin;
  std::uint64_t seq = 0;
  std::vector<Delivery> deliveries;

  std::size_t delivered_count() const;
  std::size_t dropped_count() const { return deliveries.size() - delivered_count(); }
  nlohmann::json to_json() const;
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual void attach(const std::string& node_id, const std::string& address, MessageHandler handler) = 0;
  virtual Delivery send(const std::string& from, const std::string& to, const std::string& to_address,
                        const Envelope& envelope) = 0;
  virtual double now_ms() const = 0;
};

// Discrete-event transport on a virtual clock. Messages travel over one
// SimulatedLink per directed pair and are handed to handlers by advance_to().
class SimulatedTransport final : public Transport {
 public:
  explicit SimulatedTransport(LinkConfig default_link = {});

  void set_link(const std::string& from, const std::string& to, LinkConfig config);
  void attach(const std::string& node_id, const std::string& address, MessageHandler handler) override;
  Delivery send(const std::string& from, const std::string& to, const std::string& to_address,
                const Envelope& envelope) override;
  double now_ms() const override { return now_; }

  /// Delivers every event due at or before `t`, in (time, send order) order,
  /// then sets the clock to `t`.
  void advance_to(double t);
  void run_until_idle();
  std::size_t pending() const noexcept { return events_.size(); }

 private:
  struct Event {
    double at;
    std::uint64_t order;
    std::string to;
    std::string document;
    bool operator>(const Event& o) const { return at != o.at ? at > o.at : order > o.order; }
  };

  SimulatedLink& link(const std::string& from, const std::string& to);

  LinkConfig default_link_;
  std::map<std::pair<std::string, std::string>, LinkConfig> configs_;
  std::map<std::pair<std::string, std::string>, SimulatedLink> links_;
  std::map<std::string, MessageHandler> handlers_;
  std::priority_queue<Event, std::vector<Event>, std::greater<>> events_;
  std::uint64_t order_ = 0;
  double now_ = 0.0;
};

/// Offers the envelope to every registered peer of its origin.
DeliveryReport broadcast(const Topology& topology, const Envelope& envelope, Transport& transport);

// Topology plus transport plus per-origin sequence numbers.
class EdgeNetwork {
 public:
  EdgeNetwork(Topology topology, Transport& transport);

  /// Registers, attaches the handler and announces the node to its peers
  /// with a status message.
  std::string register_node(const std::string& rsu_id, MessageHandler handler);
  Envelope make_envelope(const std::string& origin, MessageType type, nlohmann::json payload);
  DeliveryReport broadcast(const std::string& origin, MessageType type, nlohmann::json payload);
  DeliveryReport broadcast(const Envelope& envelope);
  Delivery send_to(const std::string& origin, const std::string& peer, MessageType type, nlohmann::json payload);

  const Topology& topology() const noexcept { return topology_; }
  Transport& transport() noexcept { return transport_; }

 private:
  Topology topology_;
  Transport& transport_;
  std::map<std::string, std::uint64_t> next_seq_;
};

}  // namespace rsu
