#pragma once

/**
 * @file harness.hpp
 * @brief Deterministic adversary and fault-injection harness.
 *
 * A scenario wires a client session to a server session through a simulated
 * channel. The channel acts on client-to-server frames addressed by
 * (handshake ordinal, frame index within the handshake); frame index 0
 * addresses every frame of the handshake. Everything is single-threaded and
 * a pure function of the scenario config, so traces are byte-identical
 * across runs.
 */

#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <functional>
#include <chrono>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mpd/bytes.hpp"
#include "mpd/dialect.hpp"
#include "mpd/error.hpp"
#include "mpd/protocols/profile.hpp"
#include "mpd/session.hpp"
#include "mpd/sync.hpp"

namespace mpd::harness {

struct FrameRef {
  std::size_t handshake = 0;  // 1-based
  std::size_t frame = 0;      // 1-based within the handshake; 0 = all frames
  auto operator<=>(const FrameRef&) const = default;
};

struct Patch {
  std::size_t offset = 0;
  Bytes replacement;
};

struct ChannelPolicy {
  std::set<FrameRef> drop;
  std::map<FrameRef, Patch> modify;
  std::set<FrameRef> replay;
  std::uint64_t seed = 0;
  double loss_rate = 0.0;

  bool empty() const { return drop.empty() && modify.empty() && replay.empty() && loss_rate <= 0; }

  /// Schedules must not address the same frame twice.
  void validate() const {
    std::vector<FrameRef> all(drop.begin(), drop.end());
    for (const auto& [ref, patch] : modify) all.push_back(ref);
    all.insert(all.end(), replay.begin(), replay.end());
    for (std::size_t i = 0; i < all.size(); ++i)
      for (std::size_t j = i + 1; j < all.size(); ++j) {
        const auto& a = all[i];
        const auto& b = all[j];
        if (a.handshake == b.handshake && (a.frame == 0 || b.frame == 0 || a.frame == b.frame))
          throw Error(Errc::ConfigError,
                      "channel schedules overlap at handshake " + std::to_string(a.handshake));
      }
    if (loss_rate < 0 || loss_rate > 1) throw Error(Errc::ConfigError, "loss_rate outside [0,1]");
  }
};

enum class ChannelAction { Deliver, Drop, DeliverModified, DeliverTwice };

inline const char* action_name(ChannelAction a) {
  switch (a) {
    case ChannelAction::Deliver: return "deliver";
    case ChannelAction::Drop: return "drop";
    case ChannelAction::DeliverModified: return "modify";
    case ChannelAction::DeliverTwice: return "replay";
  }
  return "?";
}

struct Transfer {
  ChannelAction action = ChannelAction::Deliver;
  std::vector<Bytes> delivered;
};

namespace detail {
template <class Container>
auto find_ref(const Container& c, std::size_t hs, std::size_t frame) {
  auto it = c.find(FrameRef{hs, frame});
  return it != c.end() ? it : c.find(FrameRef{hs, 0});
}

/// Randomized loss is a pure function of (seed, handshake, frame).
inline bool random_loss(const ChannelPolicy& p, std::size_t hs, std::size_t frame) {
  if (p.loss_rate <= 0) return false;
  std::seed_seq seq{static_cast<std::uint32_t>(p.seed), static_cast<std::uint32_t>(p.seed >> 32),
                    static_cast<std::uint32_t>(hs), static_cast<std::uint32_t>(frame)};
  std::mt19937_64 rng(seq);
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p.loss_rate;
}
}  // namespace detail

inline Transfer channel_transfer(const ChannelPolicy& policy, std::size_t handshake,
                                 std::size_t frame, ByteView payload) {
  const Bytes original(payload.begin(), payload.end());
  if (detail::find_ref(policy.drop, handshake, frame) != policy.drop.end() ||
      detail::random_loss(policy, handshake, frame))
    return {ChannelAction::Drop, {}};
  if (auto it = detail::find_ref(policy.modify, handshake, frame); it != policy.modify.end()) {
    Bytes m = original;
    const auto& patch = it->second;
    for (std::size_t i = 0; i < patch.replacement.size(); ++i) {
      if (patch.offset + i < m.size())
        m[patch.offset + i] = patch.replacement[i];
      else
        m.push_back(patch.replacement[i]);
    }
    return {ChannelAction::DeliverModified, {std::move(m)}};
  }
  if (detail::find_ref(policy.replay, handshake, frame) != policy.replay.end())
    return {ChannelAction::DeliverTwice, {original, original}};
  return {ChannelAction::Deliver, {original}};
}

// ---------------------------------------------------------------------------

struct ServerEvent {
  HandshakeStatus status;
  std::optional<std::size_t> index;
};

/// In-memory client-to-server link running the channel policy.
class SimLink final : public Transport {
 public:
  SimLink(ServerSession& server, const ChannelPolicy& policy) : server_(&server), policy_(&policy) {}

  void begin_handshake(std::size_t ordinal) {
    ordinal_ = ordinal;
    frame_ = 0;
    events_.clear();
    faulted_ = false;
  }

  void send(ByteView payload) override {
    if (closed_) throw Error(Errc::ChannelError, "connection closed by server");
    ++frame_;
    auto t = channel_transfer(*policy_, ordinal_, frame_, payload);
    if (t.action != ChannelAction::Deliver) faulted_ = true;
    for (auto& p : t.delivered) {
      if (closed_) break;
      absorb(server_->on_frame(std::move(p)));
    }
  }

  std::optional<Bytes> recv(std::chrono::milliseconds) override {
    if (responses_.empty()) return std::nullopt;
    Bytes r = std::move(responses_.front());
    responses_.pop_front();
    return r;
  }

  void settle() override { absorb(server_->on_idle()); }

  /// Flushes partial server state; returns responses nobody read.
  std::size_t end_handshake() {
    settle();
    const std::size_t stray = responses_.size();
    responses_.clear();
    return stray;
  }

  const std::vector<ServerEvent>& events() const { return events_; }
  bool faulted() const { return faulted_; }
  bool closed() const { return closed_; }

 private:
  void absorb(ServerStep step) {
    for (auto& o : step.out) responses_.push_back(std::move(o));
    if (step.outcome) events_.push_back({step.outcome->status, step.outcome->index_used});
    if (step.close) closed_ = true;
  }

  ServerSession* server_;
  const ChannelPolicy* policy_;
  std::size_t ordinal_ = 0;
  std::size_t frame_ = 0;
  std::vector<ServerEvent> events_;
  std::deque<Bytes> responses_;
  bool faulted_ = false;
  bool closed_ = false;
};

// ---------------------------------------------------------------------------

struct TraceEntry {
  std::size_t ordinal = 0;
  std::size_t connection = 1;
  std::optional<std::size_t> client_index;
  std::vector<ServerEvent> server;
  ClientStatus client = ClientStatus::Timeout;
  std::size_t units = 0;  // units the client handed to the channel
  bool faulted = false;

  /// "timeout" when the server saw nothing, else the first server outcome.
  std::string status() const { return server.empty() ? "timeout" : status_name(server[0].status); }
};

inline std::string format_trace_line(const TraceEntry& e) {
  auto idx = [](const std::optional<std::size_t>& i) {
    return i ? std::to_string(*i) : std::string("-");
  };
  std::ostringstream out;
  out << "hs=" << e.ordinal << " conn=" << e.connection << " client_n=" << idx(e.client_index)
      << " server_n=" << (e.server.empty() ? "-" : idx(e.server[0].index))
      << " status=" << e.status() << " client=" << client_status_name(e.client)
      << " fault=" << (e.faulted ? 1 : 0);
  if (e.server.size() > 1) {
    out << " extra=";
    for (std::size_t i = 1; i < e.server.size(); ++i)
      out << (i > 1 ? "," : "") << status_name(e.server[i].status) << "@"
          << idx(e.server[i].index);
  }
  return out.str();
}

inline std::string format_trace(const std::vector<TraceEntry>& trace) {
  std::string out;
  for (const auto& e : trace) out += format_trace_line(e) + "\n";
  return out;
}

struct ScenarioMetrics {
  std::size_t sent = 0;
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::size_t timeouts = 0;
  std::size_t desyncs = 0;
  std::size_t extra_server_events = 0;
  std::size_t stray_responses = 0;
  std::vector<std::pair<std::size_t, std::size_t>> resync_lag;  // fault ordinal -> rejects after
  std::size_t broker_registered_peak = 0;
  std::size_t connacks = 0;
  std::size_t genuine_sent = 0;
  std::size_t genuine_accepted = 0;
  bool final_sync = true;
  double wall_time = 0.0;
};

inline nlohmann::json to_json(const ScenarioMetrics& m) {
  nlohmann::json lag = nlohmann::json::array();
  for (auto [ord, n] : m.resync_lag) lag.push_back({{"ordinal", ord}, {"rejects", n}});
  return {{"sent", m.sent},
          {"accepted", m.accepted},
          {"rejected", m.rejected},
          {"timeouts", m.timeouts},
          {"desyncs", m.desyncs},
          {"extra_server_events", m.extra_server_events},
          {"stray_responses", m.stray_responses},
          {"resync_lag", lag},
          {"broker_registered_peak", m.broker_registered_peak},
          {"connacks", m.connacks},
          {"genuine_sent", m.genuine_sent},
          {"genuine_accepted", m.genuine_accepted},
          {"final_sync", m.final_sync},
          {"wall_time", m.wall_time}};
}

/// Consecutive Rejected handshakes following each faulted one.
inline std::vector<std::pair<std::size_t, std::size_t>> resync_lags(
    const std::vector<TraceEntry>& trace) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    if (!trace[i].faulted) continue;
    std::size_t n = 0;
    for (std::size_t j = i + 1; j < trace.size() && !trace[j].faulted &&
                                trace[j].status() == "Rejected";
         ++j)
      ++n;
    out.emplace_back(trace[i].ordinal, n);
  }
  return out;
}

// ---------------------------------------------------------------------------

struct WorkloadSpec {
  std::vector<Bytes> messages;  // used verbatim when non-empty
  std::size_t generate = 0;     // otherwise: this many generated requests
};

struct ScenarioConfig {
  Protocol protocol = Protocol::Ftp;
  Bytes key = to_bytes("mpd-regression-key");
  std::optional<DialectTable> table;  // profile default when empty
  std::size_t depth = 1;
  std::string hash = "md5";
  Bytes initial_packet = to_bytes(kDefaultInitialPacket);
  bool mpd = true;
  ChannelPolicy channel;
  WorkloadSpec workload;
  std::uint64_t seed = 1;
  std::optional<std::filesystem::path> root;  // ftp file root
  std::size_t broker_capacity = mqtt::kDefaultCapacity;
};

struct ScenarioResult {
  ScenarioMetrics metrics;
  std::vector<TraceEntry> trace;
  std::optional<SyncState> client_state;
  std::optional<SyncState> server_state;
};

inline const std::vector<std::pair<std::string, std::string>>& sample_files() {
  static const std::vector<std::pair<std::string, std::string>> files = {
      {"sample.txt", "sample file contents\n"},
      {"blog.css", "body { margin: 0; }\n"},
      {"template.pdf", "%PDF-1.4 template\n"},
      {"notes.md", "# notes\n"},
  };
  return files;
}

/// Directory populated with the sample files, removed on destruction.
class SampleRoot {
 public:
  SampleRoot() {
    namespace fs = std::filesystem;
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("mpd-root-" + std::to_string(rd()) + "-" +
                                         std::to_string(::getpid()));
    fs::create_directories(path_);
    for (const auto& [name, body] : sample_files()) std::ofstream(path_ / name) << body;
  }
  ~SampleRoot() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  SampleRoot(const SampleRoot&) = delete;
  SampleRoot& operator=(const SampleRoot&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::vector<Bytes> generate_workload(Protocol protocol, std::size_t count,
                                            std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Bytes> out;
  out.reserve(count);
  if (protocol == Protocol::Ftp) {
    const auto& files = sample_files();
    for (std::size_t i = 0; i < count; ++i) {
      if (rng() % 10 == 0)
        out.push_back(to_bytes("ls"));
      else
        out.push_back(ftp::render(ftp::rget(files[rng() % files.size()].first)));
    }
    return out;
  }
  // Repeated connect / publish / disconnect sessions.
  std::size_t session = 0;
  while (out.size() < count) {
    out.push_back(mqtt::render(mqtt::connect("dev" + std::to_string(++session))));
    const std::size_t pubs = rng() % 3 + 1;
    for (std::size_t i = 0; i < pubs && out.size() < count; ++i)
      out.push_back(mqtt::render(mqtt::publish("t/" + std::to_string(rng() % 4),
                                               "v" + std::to_string(rng() % 1000))));
    if (out.size() < count) out.push_back(mqtt::render(mqtt::disconnect()));
  }
  return out;
}

/// One client/server connection inside a scenario.
struct SimConnection {
  std::unique_ptr<ServerApp> app;
  std::unique_ptr<ServerSession> server;
  std::unique_ptr<ClientSession> client;
  std::unique_ptr<SimLink> link;
};

class ScenarioRunner {
 public:
  explicit ScenarioRunner(ScenarioConfig config) : cfg_(std::move(config)) {
    cfg_.channel.validate();
    profile_ = profile(cfg_.protocol);
    table_ = cfg_.table ? *cfg_.table : profile_.table;
    if (cfg_.depth < 1) throw Error(Errc::ConfigError, "buffer depth must be >= 1");
    if (cfg_.key.empty()) throw Error(Errc::ConfigError, "missing key");
    if (cfg_.protocol == Protocol::Ftp) {
      if (!cfg_.root) {
        sample_root_ = std::make_unique<SampleRoot>();
        root_ = sample_root_->path();
      } else {
        root_ = *cfg_.root;
      }
    }
    broker_ = std::make_unique<mqtt::Broker>(cfg_.broker_capacity);
  }

  ScenarioResult run() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto workload = cfg_.workload.messages.empty()
                              ? generate_workload(cfg_.protocol, cfg_.workload.generate, cfg_.seed)
                              : cfg_.workload.messages;
    ScenarioResult result;
    auto& m = result.metrics;
    std::size_t connection = 1;
    auto conn = open();
    for (std::size_t i = 0; i < workload.size(); ++i) {
      if (conn.link->closed()) {
        conn = open();
        ++connection;
      }
      TraceEntry e;
      e.ordinal = i + 1;
      e.connection = connection;
      conn.link->begin_handshake(e.ordinal);
      ClientResult cr;
      try {
        cr = run_handshake_client(*conn.client, workload[i], *conn.link);
      } catch (const Error&) {
        cr.status = ClientStatus::Timeout;
      }
      m.stray_responses += conn.link->end_handshake();
      e.client_index = cr.index_used;
      e.client = cr.status;
      e.units = cr.units_sent;
      e.server = conn.link->events();
      e.faulted = conn.link->faulted();
      ++m.sent;
      if (!e.server.empty()) {
        if (e.server[0].status == HandshakeStatus::Accepted) ++m.accepted;
        if (e.server[0].status == HandshakeStatus::Rejected) ++m.rejected;
        m.extra_server_events += e.server.size() - 1;
      }
      if (cr.status == ClientStatus::Timeout) ++m.timeouts;
      if (cr.status == ClientStatus::Desync) ++m.desyncs;
      result.trace.push_back(std::move(e));
    }
    m.resync_lag = resync_lags(result.trace);
    m.broker_registered_peak = broker_->peak();
    if (conn.client->state()) result.client_state = *conn.client->state();
    if (conn.server->state()) result.server_state = *conn.server->state();
    m.final_sync = !result.client_state || (result.client_state == result.server_state);
    m.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
  }

  const DialectTable& table() const { return table_; }

 private:
  SimConnection open() {
    SimConnection c;
    if (cfg_.protocol == Protocol::Ftp)
      c.app = std::make_unique<ftp::ServerApp>(root_);
    else
      c.app = std::make_unique<mqtt::ServerApp>(*broker_);
    if (cfg_.mpd) {
      auto state = [&] {
        return SyncState(cfg_.key, cfg_.depth, cfg_.initial_packet, HashFunction(cfg_.hash));
      };
      c.server = std::make_unique<ServerSession>(state(), table_, *c.app);
      c.client = std::make_unique<ClientSession>(state(), table_, profile_.policy);
    } else {
      c.server = std::make_unique<ServerSession>(*c.app);
      c.client = std::make_unique<ClientSession>(profile_.policy);
    }
    c.link = std::make_unique<SimLink>(*c.server, cfg_.channel);
    return c;
  }

  ScenarioConfig cfg_;
  ProtocolProfile profile_;
  DialectTable table_;
  std::unique_ptr<SampleRoot> sample_root_;
  std::filesystem::path root_;
  std::unique_ptr<mqtt::Broker> broker_;
};

inline ScenarioResult run_scenario(const ScenarioConfig& config) {
  return ScenarioRunner(config).run();
}

// ---------------------------------------------------------------------------
// Attacks

struct AttackTarget {
  Bytes key = to_bytes("mpd-regression-key");
  std::optional<DialectTable> table;
  std::size_t depth = 1;
  std::string hash = "md5";
  Bytes initial_packet = to_bytes(kDefaultInitialPacket);
  bool mpd = true;
  std::size_t broker_capacity = mqtt::kDefaultCapacity;
  /// A genuine keyed client runs one handshake after every `genuine_every`
  /// attack packets (0 = no genuine client).
  std::size_t genuine_every = 0;
};

namespace detail {
inline SyncState make_state(const AttackTarget& t) {
  return SyncState(t.key, t.depth, t.initial_packet, HashFunction(t.hash));
}

/// Feeds raw units to a server session the way an unkeyed attacker would:
/// every unit goes out regardless of ACKs, then the line goes idle.
inline std::vector<HandshakeOutcome> inject(ServerSession& server, const std::vector<Bytes>& units,
                                            std::size_t& responses) {
  std::vector<HandshakeOutcome> outcomes;
  auto take = [&](ServerStep s) {
    for (const auto& o : s.out)
      if (!is_ack(o)) ++responses;
    if (s.outcome) outcomes.push_back(*s.outcome);
  };
  for (const auto& u : units) take(server.on_frame(u));
  take(server.on_idle());
  return outcomes;
}
}  // namespace detail

/// Injects `count` copies of `command` transformed by a fixed `spoofed`
/// dialect over one attacker connection to an ftp server.
inline ScenarioMetrics attack_fixed_dialect(const AttackTarget& target, std::size_t count,
                                            const DialectSpec& spoofed,
                                            ByteView command = to_bytes("rget,secret.txt")) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto prof = profile(Protocol::Ftp);
  const DialectTable table = target.table ? *target.table : prof.table;
  SampleRoot root;
  ScenarioMetrics m;

  ftp::ServerApp attacker_app(root.path());
  std::optional<ServerSession> attacker_server;
  if (target.mpd)
    attacker_server.emplace(detail::make_state(target), table, attacker_app);
  else
    attacker_server.emplace(attacker_app);

  ftp::ServerApp genuine_app(root.path());
  ServerSession genuine_server(detail::make_state(target), table, genuine_app);
  ClientSession genuine_client(detail::make_state(target), table, prof.policy);
  ChannelPolicy clean;
  SimLink genuine_link(genuine_server, clean);
  const auto& files = sample_files();

  const auto units = apply_dialect(spoofed, command);
  std::size_t responses = 0;
  for (std::size_t i = 0; i < count; ++i) {
    ++m.sent;
    for (const auto& o : detail::inject(*attacker_server, units, responses)) {
      if (o.status == HandshakeStatus::Accepted) ++m.accepted;
      if (o.status == HandshakeStatus::Rejected) ++m.rejected;
    }
    if (target.genuine_every && (i + 1) % target.genuine_every == 0) {
      genuine_link.begin_handshake(m.genuine_sent + 1);
      const auto req = ftp::render(ftp::rget(files[m.genuine_sent % files.size()].first));
      auto r = run_handshake_client(genuine_client, req, genuine_link);
      genuine_link.end_handshake();
      ++m.genuine_sent;
      const auto& ev = genuine_link.events();
      if (r.status == ClientStatus::Response && !ev.empty() &&
          ev[0].status == HandshakeStatus::Accepted)
        ++m.genuine_accepted;
    }
  }
  m.stray_responses = responses;
  m.timeouts = m.sent - responses;
  m.final_sync = *genuine_client.state() == *genuine_server.state();
  m.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return m;
}

/// Opens `count` connections, each sending one undialected CONNECT with a
/// distinct client id. Flood connections stay open for the whole run.
inline ScenarioMetrics attack_connect_flood(const AttackTarget& target, std::size_t count) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto prof = profile(Protocol::Mqtt);
  const DialectTable table = target.table ? *target.table : prof.table;
  mqtt::Broker broker(target.broker_capacity);
  ScenarioMetrics m;

  struct FloodConn {
    std::unique_ptr<mqtt::ServerApp> app;
    std::unique_ptr<ServerSession> server;
  };
  std::vector<FloodConn> flood;
  flood.reserve(count);
  std::size_t responses = 0;
  char id[32];

  for (std::size_t i = 0; i < count; ++i) {
    FloodConn c;
    c.app = std::make_unique<mqtt::ServerApp>(broker);
    c.server = target.mpd ? std::make_unique<ServerSession>(detail::make_state(target), table, *c.app)
                          : std::make_unique<ServerSession>(*c.app);
    std::snprintf(id, sizeof(id), "flood-%05zu", i);
    ++m.sent;
    for (const auto& o : detail::inject(*c.server, {mqtt::render(mqtt::connect(id))}, responses)) {
      if (o.status == HandshakeStatus::Accepted) ++m.accepted;
      if (o.status == HandshakeStatus::Rejected) ++m.rejected;
    }
    m.connacks += c.app->connacks();
    flood.push_back(std::move(c));

    if (target.genuine_every && (i + 1) % target.genuine_every == 0) {
      // A genuine device connects, publishes, and disconnects.
      mqtt::ServerApp app(broker);
      std::optional<ServerSession> server;
      std::optional<ClientSession> client;
      if (target.mpd) {
        server.emplace(detail::make_state(target), table, app);
        client.emplace(detail::make_state(target), table, prof.policy);
      } else {
        server.emplace(app);
        client.emplace(prof.policy);
      }
      ChannelPolicy clean;
      SimLink link(*server, clean);
      link.begin_handshake(1);
      auto r = run_handshake_client(*client, mqtt::render(mqtt::connect("genuine")), link);
      link.end_handshake();
      ++m.genuine_sent;
      if (r.status == ClientStatus::Response && r.response &&
          mqtt::parse(*r.response) == mqtt::connack(mqtt::kAccepted)) {
        link.begin_handshake(2);
        auto p = run_handshake_client(*client, mqtt::render(mqtt::publish("t", "hi")), link);
        if (p.response && mqtt::parse(*p.response) == mqtt::puback()) ++m.genuine_accepted;
        link.begin_handshake(3);
        run_handshake_client(*client, mqtt::render(mqtt::disconnect()), link);
      }
    }
  }
  m.stray_responses = responses;
  m.broker_registered_peak = broker.peak();
  m.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return m;
}

/// Upper bound on the acceptance probability of a fixed-dialect attacker:
/// the fraction of table entries under which the attacker's units recover
/// to a message the server accepts.
inline double fixed_dialect_acceptance_bound(const DialectTable& table, const DialectSpec& spoofed,
                                             ByteView command,
                                             const std::function<bool(ByteView)>& grammar) {
  const auto units = apply_dialect(spoofed, command);
  std::size_t accepting = 0;
  for (const auto& entry : table.entries()) {
    std::optional<Bytes> recovered;
    if (const auto* s = std::get_if<Split>(&entry)) {
      if (units.size() == kSplitParts && units[0].size() == s->t1 && units[1].size() == s->t2 &&
          units[2].size() == s->t3)
        recovered = concat(units);
      else if (units.size() == 1 && !validate_params(entry, units[0].size()))
        recovered = units[0];
      else if (units.size() == 1 && units[0].size() == s->t1 && grammar(units[0]))
        recovered = units[0];
    } else if (units.size() == 1) {
      recovered = invert_dialect(entry, units);
    }
    if (recovered && grammar(*recovered)) ++accepting;
  }
  return static_cast<double>(accepting) / static_cast<double>(table.n_max());
}

// ---------------------------------------------------------------------------
// Config files

inline Bytes load_key_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::ConfigError, "cannot read key file " + path);
  std::string raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::string trimmed = raw;
  while (!trimmed.empty() && std::isspace(static_cast<unsigned char>(trimmed.back())))
    trimmed.pop_back();
  if (is_hex(trimmed)) return from_hex(trimmed);
  if (raw.empty()) throw Error(Errc::ConfigError, "empty key file " + path);
  return to_bytes(raw);
}

namespace detail {
inline FrameRef parse_ref(const nlohmann::json& j) {
  if (j.is_number_unsigned()) return {j.get<std::size_t>(), 0};
  return {j.at("handshake").get<std::size_t>(), j.value("frame", std::size_t{0})};
}
inline nlohmann::json ref_json(const FrameRef& r) {
  if (r.frame == 0) return r.handshake;
  return {{"handshake", r.handshake}, {"frame", r.frame}};
}
}  // namespace detail

/// Parses a scenario config. Relative paths resolve against `base_dir`.
inline ScenarioConfig parse_scenario_config(const nlohmann::json& j,
                                            const std::filesystem::path& base_dir = ".") {
  try {
    ScenarioConfig c;
    auto resolve = [&](const std::string& p) {
      std::filesystem::path path(p);
      return path.is_absolute() ? path : base_dir / path;
    };
    c.protocol = parse_protocol(j.value("protocol", std::string("ftp")));
    if (j.contains("key_hex"))
      c.key = from_hex(j.at("key_hex").get<std::string>());
    else if (j.contains("key_file"))
      c.key = load_key_file(resolve(j.at("key_file").get<std::string>()).string());
    else if (j.contains("key"))
      c.key = to_bytes(j.at("key").get<std::string>());
    else
      throw Error(Errc::ConfigError, "scenario needs key, key_hex or key_file");
    if (j.contains("table") && !j.at("table").is_null())
      c.table = load_table(resolve(j.at("table").get<std::string>()).string());
    c.depth = j.value("h", std::size_t{1});
    c.hash = j.value("hash", std::string("md5"));
    c.initial_packet = to_bytes(j.value("initial_packet", std::string(kDefaultInitialPacket)));
    c.mpd = j.value("mpd", true);
    c.seed = j.value("seed", std::uint64_t{1});
    if (j.contains("root")) c.root = resolve(j.at("root").get<std::string>());
    c.broker_capacity = j.value("broker_capacity", mqtt::kDefaultCapacity);
    if (j.contains("channel")) {
      const auto& ch = j.at("channel");
      for (const auto& d : ch.value("drop", nlohmann::json::array()))
        c.channel.drop.insert(detail::parse_ref(d));
      for (const auto& r : ch.value("replay", nlohmann::json::array()))
        c.channel.replay.insert(detail::parse_ref(r));
      for (const auto& mo : ch.value("modify", nlohmann::json::array()))
        c.channel.modify[detail::parse_ref(mo)] =
            Patch{mo.value("offset", std::size_t{0}), from_hex(mo.at("bytes_hex").get<std::string>())};
      c.channel.loss_rate = ch.value("loss_rate", 0.0);
      c.channel.seed = ch.value("seed", c.seed);
    }
    if (j.contains("workload")) {
      const auto& w = j.at("workload");
      for (const auto& msg : w.value("messages", nlohmann::json::array()))
        c.workload.messages.push_back(msg.is_string() ? to_bytes(msg.get<std::string>())
                                                      : from_hex(msg.at("hex").get<std::string>()));
      c.workload.generate = w.value("generate", std::size_t{0});
    }
    if (c.workload.messages.empty() && c.workload.generate == 0)
      throw Error(Errc::ConfigError, "scenario workload is empty");
    c.channel.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ConfigError, e.what());
  }
}

inline ScenarioConfig load_scenario_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::ConfigError, "cannot read scenario config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ConfigError, std::string("scenario config: ") + e.what());
  }
  return parse_scenario_config(j, std::filesystem::path(path).parent_path());
}

/// Default scenario config referencing a table file, as written by table-gen.
inline nlohmann::json default_scenario_json(Protocol protocol, const std::string& table_path,
                                            std::uint64_t seed) {
  return {{"protocol", protocol_name(protocol)},
          {"key", "mpd-regression-key"},
          {"table", table_path},
          {"h", 1},
          {"hash", "md5"},
          {"seed", seed},
          {"channel", {{"drop", nlohmann::json::array()},
                       {"modify", nlohmann::json::array()},
                       {"replay", nlohmann::json::array()},
                       {"loss_rate", 0.0}}},
          {"workload", {{"generate", 100}}}};
}

inline nlohmann::json channel_json(const ChannelPolicy& p) {
  nlohmann::json drop = nlohmann::json::array(), replay = nlohmann::json::array(),
                 modify = nlohmann::json::array();
  for (const auto& r : p.drop) drop.push_back(detail::ref_json(r));
  for (const auto& r : p.replay) replay.push_back(detail::ref_json(r));
  for (const auto& [r, patch] : p.modify) {
    nlohmann::json e = {{"handshake", r.handshake}, {"frame", r.frame},
                        {"offset", patch.offset}, {"bytes_hex", to_hex(patch.replacement)}};
    modify.push_back(e);
  }
  return {{"drop", drop}, {"modify", modify}, {"replay", replay},
          {"loss_rate", p.loss_rate}, {"seed", p.seed}};
}

// ---------------------------------------------------------------------------
// Table generation

enum class TableKind { Shuffle, Split, Mixed };

inline TableKind parse_table_kind(std::string_view s) {
  if (s == "shuffle") return TableKind::Shuffle;
  if (s == "split") return TableKind::Split;
  if (s == "mixed") return TableKind::Mixed;
  throw Error(Errc::ConfigError, "unknown table kind: " + std::string(s));
}

/// Random distinct dialects. Shuffles keep both segments inside the first
/// `window` bytes, where the protocol keywords live.
inline DialectTable generate_table(std::size_t count, TableKind kind, std::uint64_t seed,
                                   std::size_t window = 5) {
  if (count == 0) throw Error(Errc::ConfigError, "table needs at least one entry");
  std::mt19937_64 rng(seed);
  std::vector<DialectSpec> entries;
  std::set<std::string> seen;
  std::size_t attempts = 0;
  while (entries.size() < count) {
    if (++attempts > 100000) throw Error(Errc::ConfigError, "cannot generate that many dialects");
    bool shuffle = kind == TableKind::Shuffle || (kind == TableKind::Mixed && rng() % 2 == 0);
    DialectSpec spec;
    if (shuffle) {
      const std::size_t l = rng() % 2 + 1;
      const std::size_t o = l + rng() % std::max<std::size_t>(1, window - 2 * l + 1);
      const std::size_t p = rng() % std::max<std::size_t>(1, window - o - l + 1);
      spec = Shuffle{p, l, o};
    } else {
      spec = Split{rng() % 3 + 1, rng() % 3 + 1, rng() % 3 + 1};
    }
    if (!structurally_valid(spec)) continue;
    // Grow the window once the small parameter space is exhausted.
    if (!seen.insert(to_string(spec)).second) {
      if (attempts % 64 == 0) ++window;
      continue;
    }
    entries.push_back(spec);
  }
  return DialectTable(std::move(entries));
}

}  // namespace mpd::harness
