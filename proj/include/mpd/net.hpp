#pragma once

// POSIX TCP plumbing: RAII sockets, framed I/O with timeouts, the client
// transport and a thread-per-connection server loop.

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "mpd/bytes.hpp"
#include "mpd/error.hpp"
#include "mpd/frame.hpp"
#include "mpd/session.hpp"

namespace mpd::net {

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
};

inline Endpoint parse_endpoint(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos) throw Error(Errc::ConfigError, "expected host:port, got " + text);
  Endpoint ep;
  ep.host = text.substr(0, colon);
  try {
    const int port = std::stoi(text.substr(colon + 1));
    if (port < 0 || port > 65535) throw std::out_of_range("port");
    ep.port = static_cast<std::uint16_t>(port);
  } catch (const std::exception&) {
    throw Error(Errc::ConfigError, "bad port in " + text);
  }
  return ep;
}

class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  ~Socket() { close(); }
  Socket(Socket&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Socket& operator=(Socket&& o) noexcept {
    if (this != &o) {
      close();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  void close() {
    if (fd_ >= 0) ::close(std::exchange(fd_, -1));
  }
  void shutdown() {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
  }

  void write_all(ByteView data) const {
    std::size_t off = 0;
    while (off < data.size()) {
      const ssize_t n = ::send(fd_, data.data() + off, data.size() - off, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw Error(Errc::ChannelError, std::string("send: ") + std::strerror(errno));
      }
      off += static_cast<std::size_t>(n);
    }
  }

  /// Waits up to `timeout` for readability; false on timeout.
  bool wait_readable(std::chrono::milliseconds timeout) const {
    pollfd p{fd_, POLLIN, 0};
    for (;;) {
      const int r = ::poll(&p, 1, static_cast<int>(timeout.count()));
      if (r < 0 && errno == EINTR) continue;
      if (r < 0) throw Error(Errc::ChannelError, std::string("poll: ") + std::strerror(errno));
      return r > 0;
    }
  }

  /// Reads what is available; 0 on orderly shutdown.
  std::size_t read_some(std::uint8_t* buf, std::size_t cap) const {
    for (;;) {
      const ssize_t n = ::recv(fd_, buf, cap, 0);
      if (n < 0 && errno == EINTR) continue;
      if (n < 0) throw Error(Errc::ChannelError, std::string("recv: ") + std::strerror(errno));
      return static_cast<std::size_t>(n);
    }
  }

 private:
  int fd_ = -1;
};

inline void set_nodelay(const Socket& s) {
  int one = 1;
  ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

inline Socket connect_to(const Endpoint& ep) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string port = std::to_string(ep.port);
  if (::getaddrinfo(ep.host.c_str(), port.c_str(), &hints, &res) != 0 || !res)
    throw Error(Errc::ChannelError, "cannot resolve " + ep.host);
  std::unique_ptr<addrinfo, decltype(&::freeaddrinfo)> guard(res, &::freeaddrinfo);
  for (auto* ai = res; ai; ai = ai->ai_next) {
    Socket s(::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol));
    if (!s.valid()) continue;
    if (::connect(s.fd(), ai->ai_addr, ai->ai_addrlen) == 0) {
      set_nodelay(s);
      return s;
    }
  }
  throw Error(Errc::ChannelError,
              "cannot connect to " + ep.host + ":" + port + ": " + std::strerror(errno));
}

class Listener {
 public:
  explicit Listener(const Endpoint& ep) {
    sock_ = Socket(::socket(AF_INET, SOCK_STREAM, 0));
    if (!sock_.valid()) throw Error(Errc::ChannelError, "socket() failed");
    int one = 1;
    ::setsockopt(sock_.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(ep.port);
    if (::inet_pton(AF_INET, ep.host.c_str(), &addr.sin_addr) != 1)
      throw Error(Errc::ConfigError, "listen address must be IPv4: " + ep.host);
    if (::bind(sock_.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0)
      throw Error(Errc::ChannelError, std::string("bind: ") + std::strerror(errno));
    if (::listen(sock_.fd(), 512) != 0)
      throw Error(Errc::ChannelError, std::string("listen: ") + std::strerror(errno));
    socklen_t len = sizeof(addr);
    ::getsockname(sock_.fd(), reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
  }

  std::uint16_t port() const { return port_; }

  /// Next connection, or nullopt once the listener has been shut down.
  std::optional<Socket> accept() {
    for (;;) {
      const int fd = ::accept(sock_.fd(), nullptr, nullptr);
      if (fd >= 0) {
        Socket s(fd);
        set_nodelay(s);
        return s;
      }
      if (errno == EINTR || errno == ECONNABORTED) continue;
      return std::nullopt;
    }
  }

  void shutdown() { sock_.shutdown(); }

 private:
  Socket sock_;
  std::uint16_t port_ = 0;
};

/// Frame reader over a socket.
class FramedSocket {
 public:
  explicit FramedSocket(Socket s) : sock_(std::move(s)) {}

  Socket& socket() { return sock_; }

  void send(ByteView payload) { sock_.write_all(encode_frame(payload)); }

  /// Next frame within `timeout`. nullopt on timeout; ChannelError on EOF.
  std::optional<Bytes> recv(std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
      if (auto f = decoder_.next()) return f;
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
          deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0 || !sock_.wait_readable(left)) return std::nullopt;
      std::uint8_t buf[16384];
      const std::size_t n = sock_.read_some(buf, sizeof(buf));
      if (n == 0) throw Error(Errc::ChannelError, "peer closed the connection");
      decoder_.feed(ByteView(buf, n));
    }
  }

 private:
  Socket sock_;
  FrameDecoder decoder_;
};

/// Client-side transport. After a failed handshake it waits out the
/// server's idle window so partial split state is flushed on both ends.
class TcpTransport final : public Transport {
 public:
  TcpTransport(Socket s, std::chrono::milliseconds settle)
      : framed_(std::move(s)), settle_(settle) {}

  void send(ByteView payload) override { framed_.send(payload); }
  std::optional<Bytes> recv(std::chrono::milliseconds timeout) override {
    return framed_.recv(timeout);
  }
  void settle() override {
    if (settle_.count() > 0) std::this_thread::sleep_for(settle_);
  }

 private:
  FramedSocket framed_;
  std::chrono::milliseconds settle_;
};

inline constexpr std::chrono::milliseconds kDefaultServerIdle{200};

using OutcomeSink = std::function<void(const HandshakeOutcome&)>;

/// Drives one server session until the peer disconnects or the session
/// asks to close. A ChannelError closes the connection.
inline void run_handshake_server(Socket sock, ServerSession& session,
                                 const OutcomeSink& sink = {},
                                 std::chrono::milliseconds idle = kDefaultServerIdle) {
  FramedSocket framed(std::move(sock));
  auto emit = [&](ServerStep step) {
    for (const auto& out : step.out) framed.send(out);
    if (step.outcome && sink) sink(*step.outcome);
    return step.close;
  };
  try {
    for (;;) {
      auto frame = framed.recv(idle);
      if (!frame) {
        if (session.pending() && emit(session.on_idle())) return;
        continue;
      }
      if (emit(session.on_frame(std::move(*frame)))) return;
    }
  } catch (const Error&) {
    if (session.pending()) emit(session.on_idle());
  }
}

/// Accept loop with one thread per connection. `make_session` builds the
/// per-connection application and session.
class TcpServer {
 public:
  struct Connection {
    std::unique_ptr<ServerApp> app;
    std::unique_ptr<ServerSession> session;
  };
  using Factory = std::function<Connection()>;

  TcpServer(const Endpoint& ep, Factory factory, OutcomeSink sink = {},
            std::chrono::milliseconds idle = kDefaultServerIdle)
      : listener_(ep), factory_(std::move(factory)), sink_(std::move(sink)), idle_(idle) {}

  ~TcpServer() { stop(); }

  std::uint16_t port() const { return listener_.port(); }

  void start() {
    acceptor_ = std::thread([this] { accept_loop(); });
  }

  /// Blocks in the accept loop on the calling thread.
  void run() { accept_loop(); }

  void stop() {
    if (stopped_.exchange(true)) return;
    listener_.shutdown();
    if (acceptor_.joinable()) acceptor_.join();
    std::map<std::uint64_t, Worker> workers;
    {
      std::lock_guard lock(mu_);
      for (auto& [id, w] : workers_) ::shutdown(w.control_fd, SHUT_RDWR);
      workers.swap(workers_);
    }
    for (auto& [id, w] : workers) {
      w.thread.join();
      ::close(w.control_fd);
    }
  }

 private:
  struct Worker {
    std::thread thread;
    int control_fd;  // dup of the connection, used to interrupt it on stop()
  };

  void reap() {
    std::vector<Worker> done;
    {
      std::lock_guard lock(mu_);
      for (auto id : finished_) {
        auto it = workers_.find(id);
        if (it == workers_.end()) continue;
        done.push_back(std::move(it->second));
        workers_.erase(it);
      }
      finished_.clear();
    }
    for (auto& w : done) {
      w.thread.join();
      ::close(w.control_fd);
    }
  }

  void accept_loop() {
    while (!stopped_) {
      auto s = listener_.accept();
      if (!s) break;
      reap();
      std::lock_guard lock(mu_);
      if (stopped_) break;
      const std::uint64_t id = next_id_++;
      const int control = ::dup(s->fd());
      Worker w{std::thread([this, id, sock = std::move(*s)]() mutable {
                 {
                   auto conn = factory_();
                   run_handshake_server(std::move(sock), *conn.session, sink_, idle_);
                 }
                 std::lock_guard lock(mu_);
                 finished_.push_back(id);
               }),
               control};
      workers_.emplace(id, std::move(w));
    }
  }

  Listener listener_;
  Factory factory_;
  OutcomeSink sink_;
  std::chrono::milliseconds idle_;
  std::atomic<bool> stopped_{false};
  std::mutex mu_;
  std::map<std::uint64_t, Worker> workers_;
  std::vector<std::uint64_t> finished_;
  std::uint64_t next_id_ = 0;
  std::thread acceptor_;
};

}  // namespace mpd::net
