#include "rsu/socket_transport.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <optional>

#include "rsu/error.hpp"

namespace rsu {

std::pair<std::string, int> split_host_port(const std::string& address) {
  const auto colon = address.rfind(':');
  if (colon == std::string::npos || colon == 0) throw Error(ErrorCode::validation, "expected host:port", address);
  try {
    std::size_t used = 0;
    const int port = std::stoi(address.substr(colon + 1), &used);
    if (used != address.size() - colon - 1 || port <= 0 || port > 65535) throw std::out_of_range(address);
    return {address.substr(0, colon), port};
  } catch (const std::exception&) {
    throw Error(ErrorCode::validation, "bad port", address);
  }
}

namespace {

bool write_all(int fd, const std::string& bytes) {
  std::size_t sent = 0;
  while (sent < bytes.size()) {
    const auto n = ::send(fd, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    sent += static_cast<std::size_t>(n);
  }
  return true;
}

sockaddr_in make_addr(const std::string& host, int port) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  const auto h = host == "localhost" ? std::string("127.0.0.1") : host;
  if (::inet_pton(AF_INET, h.c_str(), &addr.sin_addr) != 1) {
    throw Error(ErrorCode::validation, "not an IPv4 address", host);
  }
  return addr;
}

}  // namespace

SocketTransport::SocketTransport() : epoch_(std::chrono::steady_clock::now()) {}

SocketTransport::~SocketTransport() { stop(); }

double SocketTransport::now_ms() const {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - epoch_).count();
}

void SocketTransport::attach(const std::string& node_id, const std::string& address, MessageHandler handler) {
  const auto [host, port] = split_host_port(address);
  const auto addr = make_addr(host, port);
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw Error(ErrorCode::network, std::strerror(errno), node_id);
  const int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  if (::bind(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0 || ::listen(fd, 16) != 0) {
    const auto why = std::string(std::strerror(errno));
    ::close(fd);
    throw Error(ErrorCode::network, "cannot listen on " + address + ": " + why, node_id);
  }
  auto listener = std::make_shared<Listener>(Listener{fd, std::move(handler)});
  std::lock_guard lock(mutex_);
  listeners_.push_back(listener);
  threads_.emplace_back([this, listener] { accept_loop(listener); });
}

void SocketTransport::accept_loop(std::shared_ptr<Listener> listener) {
  while (!stopping_) {
    pollfd p{listener->fd, POLLIN, 0};
    const int ready = ::poll(&p, 1, 50);
    if (ready <= 0) continue;
    const int conn = ::accept(listener->fd, nullptr, nullptr);
    if (conn < 0) continue;
    std::lock_guard lock(mutex_);
    if (stopping_) {
      ::close(conn);
      break;
    }
    accepted_fds_.push_back(conn);
    threads_.emplace_back([this, conn, handler = listener->handler] { read_loop(conn, handler); });
  }
}

void SocketTransport::read_loop(int fd, MessageHandler handler) {
  FrameDecoder decoder;
  char buf[8192];
  while (!stopping_) {
    pollfd p{fd, POLLIN, 0};
    const int ready = ::poll(&p, 1, 50);
    if (ready < 0 && errno != EINTR) break;
    if (ready <= 0) continue;
    const auto n = ::recv(fd, buf, sizeof buf, 0);
    if (n <= 0) break;
    decoder.feed(std::string_view(buf, static_cast<std::size_t>(n)));
    bool oversized = false;
    while (true) {
      std::optional<std::string> doc;
      try {
        doc = decoder.next();
      } catch (const Error&) {
        oversized = true;
      }
      if (!doc) break;
      try {
        handler(*doc, now_ms());
      } catch (const std::exception&) {
        // a failing handler loses this document only
      }
    }
    if (oversized) break;  // drop the connection
  }
}

int SocketTransport::connect_to(const std::string& address) {
  const auto [host, port] = split_host_port(address);
  const auto addr = make_addr(host, port);
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) return -1;
  if (::connect(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0) {
    ::close(fd);
    return -1;
  }
  const int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return fd;
}

Delivery SocketTransport::send(const std::string& from, const std::string& to, const std::string& to_address,
                               const Envelope& envelope) {
  const auto start = now_ms();
  const auto frame = encode_frame(serialize(envelope));
  std::lock_guard lock(send_mutex_);
  auto key = std::make_pair(from, to);
  for (int attempt = 0; attempt < 2; ++attempt) {
    auto it = connections_.find(key);
    if (it == connections_.end()) {
      const int fd = connect_to(to_address);
      if (fd < 0) break;
      it = connections_.emplace(key, fd).first;
    }
    if (write_all(it->second, frame)) return {to, true, now_ms() - start};
    ::close(it->second);
    connections_.erase(it);
  }
  return {to, false, now_ms() - start};
}

bool SocketTransport::send_document(const std::string& address, const std::string& document) {
  const int fd = connect_to(address);
  if (fd < 0) return false;
  const bool ok = write_all(fd, encode_frame(document));
  ::close(fd);
  return ok;
}

void SocketTransport::stop() {
  if (stopping_.exchange(true)) return;
  std::vector<std::thread> threads;
  {
    std::lock_guard lock(mutex_);
    threads.swap(threads_);
  }
  for (auto& t : threads) t.join();
  // accept loops may have spawned readers before observing the flag
  {
    std::lock_guard lock(mutex_);
    threads.swap(threads_);
  }
  for (auto& t : threads) t.join();
  std::lock_guard lock(mutex_);
  for (const auto& l : listeners_) ::close(l->fd);
  for (int fd : accepted_fds_) ::close(fd);
  std::lock_guard send_lock(send_mutex_);
  for (const auto& [key, fd] : connections_) ::close(fd);
  connections_.clear();
}

}  // namespace rsu
