#pragma once

/**
 * @file session.hpp
 * @brief Per-connection codec and handshake state machines.
 *
 * Sessions are sans-IO: the client prepares wire units and is told how many
 * were handed to the transport; the server consumes one frame payload at a
 * time and returns the frames it wants written. Drivers over real sockets
 * (net.hpp) and over the simulated channel (harness.hpp) share this code.
 *
 * Handshake rules:
 *  - The sender selects (n, spec) from its cache, applies the dialect, and
 *    caches the concatenation of the units it actually transmitted.
 *  - The receiver selects from its own cache, collects 1 or 4 units, inverts,
 *    and accepts iff the recovered message parses under the protocol grammar.
 *    The received units are cached whether or not the check succeeds.
 *  - Rejected handshakes produce no response bytes.
 *  - Under a Split dialect each of the first three sub-packets is answered
 *    with a one-byte ACK frame. ACKs are neither dialected nor cached.
 */

#include <chrono>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "mpd/bytes.hpp"
#include "mpd/dialect.hpp"
#include "mpd/error.hpp"
#include "mpd/frame.hpp"
#include "mpd/sync.hpp"

namespace mpd {

enum class HandshakeStatus { Accepted, Rejected, ChannelError };

inline const char* status_name(HandshakeStatus s) {
  switch (s) {
    case HandshakeStatus::Accepted: return "Accepted";
    case HandshakeStatus::Rejected: return "Rejected";
    case HandshakeStatus::ChannelError: return "ChannelError";
  }
  return "?";
}

struct HandshakeOutcome {
  HandshakeStatus status = HandshakeStatus::Rejected;
  std::optional<Bytes> recovered;
  std::optional<std::size_t> index_used;  // empty for plain exchanges
  std::size_t units = 0;
};

/// Protocol-specific knobs a session needs, supplied by the protocol profile.
struct DialectPolicy {
  /// Whether an outgoing client request carries a dialect.
  std::function<bool(ByteView)> dialect_bearing = [](ByteView) { return true; };
  /// Responses to dialect-bearing requests are dialected with the same index.
  bool mirror_response = false;
  /// Grammar check for responses seen by the client.
  std::function<bool(ByteView)> valid_response = [](ByteView) { return true; };
};

/// Server-side application hooks for one connection.
class ServerApp {
 public:
  virtual ~ServerApp() = default;
  /// Whether the next incoming request is dialect-bearing.
  virtual bool expects_dialect() const = 0;
  /// Grammar check; doubles as the dialect-index check.
  virtual bool validate(ByteView request) const = 0;
  /// Response to an accepted request, if any.
  virtual std::optional<Bytes> handle(ByteView request) = 0;
  virtual bool mirror_response() const { return false; }
  virtual bool wants_close() const { return false; }
};

namespace detail {
/// Responses are single-unit: a mirrored Split degrades to Identity.
inline Bytes mirror_apply(const DialectSpec& spec, ByteView m) {
  if (std::holds_alternative<Split>(spec)) return Bytes(m.begin(), m.end());
  return apply_dialect(spec, m).front();
}
inline Bytes mirror_invert(const DialectSpec& spec, const Bytes& m) {
  if (std::holds_alternative<Split>(spec)) return m;
  return invert_dialect(spec, {m});
}
}  // namespace detail

// ---------------------------------------------------------------------------

struct ServerStep {
  std::vector<Bytes> out;                   // frame payloads to write, in order
  std::optional<HandshakeOutcome> outcome;  // set when a handshake completed
  bool close = false;
};

class ServerSession {
 public:
  /// MPD-enabled session.
  ServerSession(SyncState state, const DialectTable& table, ServerApp& app)
      : state_(std::move(state)), table_(&table), app_(&app) {}

  /// Plain session: framing only, no dialects.
  explicit ServerSession(ServerApp& app) : app_(&app) {}

  bool mpd_enabled() const { return state_.has_value(); }
  const SyncState* state() const { return state_ ? &*state_ : nullptr; }
  bool pending() const { return pending_.has_value(); }

  ServerStep on_frame(Bytes payload) {
    if (pending_) {
      pending_->units.push_back(std::move(payload));
      if (pending_->units.size() < kSplitParts) return ServerStep{{ack_payload()}, {}, false};
      auto p = std::move(*pending_);
      pending_.reset();
      return finish(p.selection, p.units);
    }
    if (!state_ || !app_->expects_dialect()) return plain(payload);

    Selection sel = next_index(*state_, *table_);
    if (const auto* s = std::get_if<Split>(&sel.spec);
        s && payload.size() == s->t1 && !app_->validate(payload)) {
      pending_ = Pending{sel, {std::move(payload)}};
      return ServerStep{{ack_payload()}, {}, false};
    }
    return finish(sel, {std::move(payload)});
  }

  /// Line went idle: a partially received split handshake is rejected.
  ServerStep on_idle() {
    if (!pending_) return {};
    auto p = std::move(*pending_);
    pending_.reset();
    return finish(p.selection, p.units);
  }

 private:
  struct Pending {
    Selection selection;
    std::vector<Bytes> units;
  };

  std::optional<Bytes> recover(const DialectSpec& spec, const std::vector<Bytes>& units) const {
    if (const auto* s = std::get_if<Split>(&spec)) {
      if (units.size() == kSplitParts) {
        if (units[0].size() != s->t1 || units[1].size() != s->t2 || units[2].size() != s->t3 ||
            units[3].empty())
          return std::nullopt;
        return split_invert(units);
      }
      // A lone unit is legitimate only if the sender had to fall back to Identity.
      if (units.size() == 1 && !validate_params(spec, units[0].size())) return units[0];
      return std::nullopt;
    }
    if (units.size() != 1) return std::nullopt;
    return invert_dialect(spec, units);
  }

  ServerStep finish(const Selection& sel, const std::vector<Bytes>& units) {
    if (units.size() == 1)
      state_->cache_update(units[0]);
    else
      state_->cache_update(concat(units));
    HandshakeOutcome outcome;
    outcome.index_used = sel.index;
    outcome.units = units.size();
    ServerStep step;
    auto recovered = recover(sel.spec, units);
    if (!recovered || !app_->validate(*recovered)) {
      outcome.status = HandshakeStatus::Rejected;
      step.outcome = std::move(outcome);
      return step;
    }
    outcome.status = HandshakeStatus::Accepted;
    outcome.recovered = recovered;
    if (auto resp = app_->handle(*recovered)) {
      step.out.push_back(app_->mirror_response() ? detail::mirror_apply(sel.spec, *resp)
                                                 : std::move(*resp));
    }
    step.close = app_->wants_close();
    step.outcome = std::move(outcome);
    return step;
  }

  ServerStep plain(const Bytes& payload) {
    ServerStep step;
    HandshakeOutcome outcome;
    outcome.units = 1;
    if (!app_->validate(payload)) {
      outcome.status = HandshakeStatus::ChannelError;
      step.close = true;
    } else {
      outcome.status = HandshakeStatus::Accepted;
      outcome.recovered = payload;
      if (auto resp = app_->handle(payload)) step.out.push_back(std::move(*resp));
      step.close = app_->wants_close();
    }
    step.outcome = std::move(outcome);
    return step;
  }

  std::optional<SyncState> state_;
  const DialectTable* table_ = nullptr;
  ServerApp* app_;
  std::optional<Pending> pending_;
};

// ---------------------------------------------------------------------------

struct Outgoing {
  std::optional<Selection> selection;  // empty for plain requests
  std::vector<Bytes> units;
};

class ClientSession {
 public:
  ClientSession(SyncState state, const DialectTable& table, DialectPolicy policy = {})
      : state_(std::move(state)), table_(&table), policy_(std::move(policy)) {}

  explicit ClientSession(DialectPolicy policy = {}) : policy_(std::move(policy)) {}

  bool mpd_enabled() const { return state_.has_value(); }
  const SyncState* state() const { return state_ ? &*state_ : nullptr; }
  const DialectPolicy& policy() const { return policy_; }

  Outgoing prepare(ByteView request) const {
    if (!state_ || !policy_.dialect_bearing(request))
      return {std::nullopt, {Bytes(request.begin(), request.end())}};
    Selection sel = next_index(*state_, *table_);
    auto units = apply_dialect(sel.spec, request);
    return {std::move(sel), std::move(units)};
  }

  /// Records the first `units_sent` units of a dialect-bearing request.
  void commit(const Outgoing& out, std::size_t units_sent) {
    if (!state_ || !out.selection) return;
    if (units_sent == 1 || (units_sent > 1 && out.units.size() == 1)) {
      state_->cache_update(out.units.front());
      return;
    }
    std::vector<Bytes> sent(out.units.begin(),
                            out.units.begin() + std::min(units_sent, out.units.size()));
    state_->cache_update(concat(sent));
  }

  /// Full send: every unit reaches the transport.
  std::vector<Bytes> send_message(ByteView m) {
    auto out = prepare(m);
    commit(out, out.units.size());
    return out.units;
  }

  /// Recovers a response payload; nullopt if it fails the grammar check.
  std::optional<Bytes> decode_response(const Outgoing& out, const Bytes& payload) const {
    Bytes msg = payload;
    if (out.selection && policy_.mirror_response)
      msg = detail::mirror_invert(out.selection->spec, payload);
    if (!policy_.valid_response(msg)) return std::nullopt;
    return msg;
  }

 private:
  std::optional<SyncState> state_;
  const DialectTable* table_ = nullptr;
  DialectPolicy policy_;
};

// ---------------------------------------------------------------------------

/// Frame-level transport used by the client driver.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual void send(ByteView payload) = 0;  // throws ChannelError
  virtual std::optional<Bytes> recv(std::chrono::milliseconds timeout) = 0;
  /// Called after a failed handshake so the peer can finalize partial state.
  virtual void settle() {}
};

enum class ClientStatus { Response, Timeout, Desync };

inline const char* client_status_name(ClientStatus s) {
  switch (s) {
    case ClientStatus::Response: return "response";
    case ClientStatus::Timeout: return "timeout";
    case ClientStatus::Desync: return "desync";
  }
  return "?";
}

struct ClientResult {
  ClientStatus status = ClientStatus::Timeout;
  std::optional<Bytes> response;
  std::optional<std::size_t> index_used;
  std::size_t units_sent = 0;
  std::size_t acks = 0;
};

inline constexpr std::chrono::milliseconds kDefaultClientTimeout{2000};

/// One request/response exchange. Silent server rejection shows up as a
/// timeout; a stray or missing ACK shows up as a desync. Neither is an error.
inline ClientResult run_handshake_client(ClientSession& client, ByteView request,
                                         Transport& transport,
                                         std::chrono::milliseconds timeout = kDefaultClientTimeout) {
  const Outgoing out = client.prepare(request);
  ClientResult result;
  if (out.selection) result.index_used = out.selection->index;

  auto fail = [&](ClientStatus status) {
    client.commit(out, result.units_sent);
    transport.settle();
    result.status = status;
    return result;
  };

  for (std::size_t i = 0; i < out.units.size(); ++i) {
    try {
      transport.send(out.units[i]);
    } catch (...) {
      client.commit(out, result.units_sent + 1);
      throw;
    }
    ++result.units_sent;
    if (i + 1 < out.units.size()) {
      auto r = transport.recv(timeout);
      if (!r) return fail(ClientStatus::Timeout);
      if (!is_ack(*r)) return fail(ClientStatus::Desync);
      ++result.acks;
    }
  }
  auto r = transport.recv(timeout);
  if (!r) return fail(ClientStatus::Timeout);
  // The server expected a split and is waiting for more sub-packets.
  if (out.selection && is_ack(*r)) return fail(ClientStatus::Desync);
  auto decoded = client.decode_response(out, *r);
  if (!decoded) {
    if (out.selection && client.policy().mirror_response) return fail(ClientStatus::Desync);
    client.commit(out, result.units_sent);
    throw Error(Errc::ChannelError, "unparseable plain response from peer");
  }
  client.commit(out, result.units_sent);
  result.status = ClientStatus::Response;
  result.response = std::move(decoded);
  return result;
}

}  // namespace mpd
