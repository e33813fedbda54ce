#pragma once

// Minimal publish/connect protocol with a fixed two-byte header:
// control byte (packet type in the upper nibble, lower nibble zero) and a
// single-byte remaining length equal to the body size.
//
//   CONNECT     body = client id (printable ASCII, non-empty)
//   CONNACK     body = return code (1 byte)
//   PUBLISH     body = topic_len:u8 || topic || payload
//   PUBACK      body = empty
//   DISCONNECT  body = empty

#include <algorithm>
#include <cstdint>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>

#include "mpd/bytes.hpp"
#include "mpd/error.hpp"
#include "mpd/session.hpp"

namespace mpd::mqtt {

enum class Type : std::uint8_t {
  Connect = 0x10,
  Connack = 0x20,
  Publish = 0x30,
  Puback = 0x40,
  Disconnect = 0xE0,
};

inline constexpr std::uint8_t kAccepted = 0x00;
inline constexpr std::uint8_t kServerUnavailable = 0x05;
inline constexpr std::size_t kMaxBody = 255;

struct Packet {
  Type type = Type::Connect;
  std::string client_id;  // CONNECT
  std::uint8_t code = 0;  // CONNACK
  std::string topic;      // PUBLISH
  std::string payload;    // PUBLISH
  bool operator==(const Packet&) const = default;
};

inline Packet connect(std::string id) { return {Type::Connect, std::move(id), 0, {}, {}}; }
inline Packet connack(std::uint8_t code) { return {Type::Connack, {}, code, {}, {}}; }
inline Packet publish(std::string topic, std::string payload) {
  return {Type::Publish, {}, 0, std::move(topic), std::move(payload)};
}
inline Packet puback() { return {Type::Puback, {}, 0, {}, {}}; }
inline Packet disconnect() { return {Type::Disconnect, {}, 0, {}, {}}; }

namespace detail {
inline bool printable(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](char c) { return c >= 0x20 && c < 0x7f; });
}
}  // namespace detail

inline std::optional<Packet> try_parse(ByteView bytes) {
  if (bytes.size() < 2) return std::nullopt;
  const std::uint8_t control = bytes[0];
  const std::size_t remaining = bytes[1];
  if (remaining != bytes.size() - 2) return std::nullopt;
  const std::string body(bytes.begin() + 2, bytes.end());
  switch (control) {
    case static_cast<std::uint8_t>(Type::Connect):
      if (body.empty() || !detail::printable(body)) return std::nullopt;
      return connect(body);
    case static_cast<std::uint8_t>(Type::Connack):
      if (body.size() != 1) return std::nullopt;
      return connack(static_cast<std::uint8_t>(body[0]));
    case static_cast<std::uint8_t>(Type::Publish): {
      if (body.empty()) return std::nullopt;
      const std::size_t tlen = static_cast<std::uint8_t>(body[0]);
      if (tlen == 0 || 1 + tlen > body.size()) return std::nullopt;
      std::string topic = body.substr(1, tlen);
      if (!detail::printable(topic)) return std::nullopt;
      return publish(std::move(topic), body.substr(1 + tlen));
    }
    case static_cast<std::uint8_t>(Type::Puback):
      if (!body.empty()) return std::nullopt;
      return puback();
    case static_cast<std::uint8_t>(Type::Disconnect):
      if (!body.empty()) return std::nullopt;
      return disconnect();
    default: return std::nullopt;
  }
}

inline Packet parse(ByteView bytes) {
  auto p = try_parse(bytes);
  if (!p) throw Error(Errc::ParseError, "not an mqtt packet: " + escape(bytes));
  return *p;
}

inline Bytes render(const Packet& p) {
  Bytes body;
  switch (p.type) {
    case Type::Connect: body = to_bytes(p.client_id); break;
    case Type::Connack: body = {p.code}; break;
    case Type::Publish:
      if (p.topic.size() > 255) throw Error(Errc::ParseError, "topic too long");
      body.push_back(static_cast<std::uint8_t>(p.topic.size()));
      body.insert(body.end(), p.topic.begin(), p.topic.end());
      body.insert(body.end(), p.payload.begin(), p.payload.end());
      break;
    case Type::Puback:
    case Type::Disconnect: break;
  }
  if (body.size() > kMaxBody) throw Error(Errc::ParseError, "body exceeds single-byte length");
  body.insert(body.begin(), {static_cast<std::uint8_t>(p.type), static_cast<std::uint8_t>(body.size())});
  return body;
}

inline bool is_connect(ByteView bytes) {
  auto p = try_parse(bytes);
  return p && p->type == Type::Connect;
}

// ---------------------------------------------------------------------------

inline constexpr std::size_t kDefaultCapacity = 64;

/// Shared broker state; safe to use from concurrent sessions.
class Broker {
 public:
  explicit Broker(std::size_t capacity = kDefaultCapacity) : capacity_(capacity) {}

  /// Registers `id`; false if the client table is full.
  bool register_client(const std::string& id) {
    std::lock_guard lock(mu_);
    if (clients_.count(id) == 0 && clients_.size() >= capacity_) return false;
    clients_.insert(id);
    peak_ = std::max(peak_, clients_.size());
    return true;
  }

  void deregister(const std::string& id) {
    std::lock_guard lock(mu_);
    clients_.erase(id);
  }

  void store(const std::string& topic, const std::string& payload) {
    std::lock_guard lock(mu_);
    retained_[topic] = payload;
  }

  std::optional<std::string> retained(const std::string& topic) const {
    std::lock_guard lock(mu_);
    auto it = retained_.find(topic);
    if (it == retained_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t registered() const {
    std::lock_guard lock(mu_);
    return clients_.size();
  }
  std::size_t peak() const {
    std::lock_guard lock(mu_);
    return peak_;
  }
  std::size_t capacity() const { return capacity_; }

 private:
  mutable std::mutex mu_;
  std::size_t capacity_;
  std::set<std::string> clients_;
  std::unordered_map<std::string, std::string> retained_;
  std::size_t peak_ = 0;
};

/// Connection-level view of a client on the broker.
struct Connection {
  std::optional<std::string> client_id;
};

inline std::optional<Packet> broker_handle(const Packet& pkt, Broker& broker, Connection& conn) {
  switch (pkt.type) {
    case Type::Connect:
      if (!broker.register_client(pkt.client_id)) return connack(kServerUnavailable);
      conn.client_id = pkt.client_id;
      return connack(kAccepted);
    case Type::Publish:
      broker.store(pkt.topic, pkt.payload);
      return puback();
    case Type::Disconnect:
      if (conn.client_id) broker.deregister(*conn.client_id);
      conn.client_id.reset();
      return std::nullopt;
    case Type::Connack:
    case Type::Puback: return std::nullopt;
  }
  return std::nullopt;
}

/// Per-connection server application. Only the opening CONNECT is
/// dialect-bearing; its CONNACK is mirrored with the same dialect.
class ServerApp final : public mpd::ServerApp {
 public:
  explicit ServerApp(Broker& broker) : broker_(&broker) {}
  ~ServerApp() override {
    if (conn_.client_id) broker_->deregister(*conn_.client_id);
  }
  ServerApp(const ServerApp&) = delete;
  ServerApp& operator=(const ServerApp&) = delete;

  bool expects_dialect() const override { return !conn_.client_id.has_value(); }

  bool validate(ByteView request) const override {
    auto p = try_parse(request);
    if (!p) return false;
    if (!conn_.client_id) return p->type == Type::Connect;
    return p->type == Type::Publish || p->type == Type::Disconnect;
  }

  std::optional<Bytes> handle(ByteView request) override {
    const auto pkt = parse(request);
    if (pkt.type == Type::Disconnect) closing_ = true;
    auto resp = broker_handle(pkt, *broker_, conn_);
    if (!resp) return std::nullopt;
    if (resp->type == Type::Connack) ++connacks_;
    return render(*resp);
  }

  bool mirror_response() const override { return true; }
  bool wants_close() const override { return closing_; }

  bool connected() const { return conn_.client_id.has_value(); }
  std::size_t connacks() const { return connacks_; }

 private:
  Broker* broker_;
  Connection conn_;
  bool closing_ = false;
  std::size_t connacks_ = 0;
};

}  // namespace mpd::mqtt
