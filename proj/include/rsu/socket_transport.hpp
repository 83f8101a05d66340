#pragma once

#include <atomic>
#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "rsu/network.hpp"

namespace rsu {

/// Splits "host:port". Throws Error(validation).
std::pair<std::string, int> split_host_port(const std::string& address);

// Real TCP transport using the length-prefixed wire format. Each attached
// node listens on its address; one connection per directed pair keeps
// per-pair order. Handlers run on connection threads.
class SocketTransport final : public Transport {
 public:
  SocketTransport();
  ~SocketTransport() override;
  SocketTransport(const SocketTransport&) = delete;
  SocketTransport& operator=(const SocketTransport&) = delete;

  /// Throws Error(network) if the address cannot be bound.
  void attach(const std::string& node_id, const std::string& address, MessageHandler handler) override;
  Delivery send(const std::string& from, const std::string& to, const std::string& to_address,
                const Envelope& envelope) override;
  double now_ms() const override;

  /// Writes an arbitrary document to `address`; used to inject raw frames.
  bool send_document(const std::string& address, const std::string& document);
  void stop();

 private:
  struct Listener {
    int fd = -1;
    MessageHandler handler;
  };

  void accept_loop(std::shared_ptr<Listener> listener);
  void read_loop(int fd, MessageHandler handler);
  int connect_to(const std::string& address);

  std::chrono::steady_clock::time_point epoch_;
  std::atomic<bool> stopping_{false};
  std::mutex mutex_;
  std::vector<std::shared_ptr<Listener>> listeners_;
  std::vector<std::thread> threads_;
  std::vector<int> accepted_fds_;
  std::map<std::pair<std::string, std::string>, int> connections_;
  std::mutex send_mutex_;
};

}  // namespace rsu
