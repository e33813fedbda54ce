// mpd: server, client, attacker, channel proxy, scenario runner, benchmark
// and table generator over the header-only library.

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/resource.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <atomic>
#include <mutex>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "mpd/bench.hpp"
#include "mpd/harness.hpp"
#include "mpd/net.hpp"

using namespace mpd;
namespace fs = std::filesystem;
using std::chrono::milliseconds;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string protocol = "ftp";
  std::string key_path;
  std::string table_path;
  std::size_t depth = 1;
  std::string hash = "md5";
  bool plain = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--protocol", c.protocol, "ftp or mqtt")->check(CLI::IsMember({"ftp", "mqtt"}));
  cmd->add_option("--key", c.key_path, "key file (hex or raw bytes); MPD_KEY=<hex> also works");
  cmd->add_option("--table", c.table_path, "dialect table file (default: protocol table)");
  cmd->add_option("--depth", c.depth, "history buffer depth")->check(CLI::PositiveNumber);
  cmd->add_option("--hash", c.hash, "digest name for the keyed hash");
  cmd->add_flag("--plain", c.plain, "framing only, no dialects");
}

Bytes resolve_key(const Common& c) {
  if (!c.key_path.empty()) return harness::load_key_file(c.key_path);
  if (const char* env = std::getenv("MPD_KEY"); env && *env) {
    if (!is_hex(env)) throw UsageError("MPD_KEY must be hex");
    return from_hex(env);
  }
  throw UsageError("missing key: pass --key or set MPD_KEY");
}

struct Resolved {
  Protocol protocol;
  ProtocolProfile prof;
  DialectTable table;
  std::optional<Bytes> key;  // empty in plain mode
};

Resolved resolve(const Common& c) {
  Resolved r{parse_protocol(c.protocol), profile(c.protocol), profile(c.protocol).table, {}};
  if (!c.table_path.empty()) r.table = load_table(c.table_path);
  if (!c.plain) r.key = resolve_key(c);
  return r;
}

SyncState make_state(const Common& c, const Resolved& r) {
  return SyncState(*r.key, c.depth, to_bytes(kDefaultInitialPacket), HashFunction(c.hash));
}

std::uint16_t default_port(Protocol p) { return p == Protocol::Ftp ? 2121 : 1883; }

net::Endpoint endpoint_or_default(const std::string& text, Protocol p) {
  if (text.empty()) return {"127.0.0.1", default_port(p)};
  return net::parse_endpoint(text);
}

void print_json(const nlohmann::json& j) { std::cout << j.dump(2) << std::endl; }

/// Blocks SIGINT/SIGTERM in every thread; `wait_for_signal` picks them up.
sigset_t block_stop_signals() {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  return set;
}

void wait_for_signal(const sigset_t& set) {
  int sig = 0;
  sigwait(&set, &sig);
}

void raise_fd_limit() {
  rlimit lim{};
  if (::getrlimit(RLIMIT_NOFILE, &lim) == 0 && lim.rlim_cur < lim.rlim_max) {
    lim.rlim_cur = lim.rlim_max;
    ::setrlimit(RLIMIT_NOFILE, &lim);
  }
}

// ---------------------------------------------------------------------------

struct ServeOpts {
  Common common;
  std::string root;
  std::string listen;
  int idle_ms = static_cast<int>(net::kDefaultServerIdle.count());
  std::size_t capacity = mqtt::kDefaultCapacity;
  bool log = false;
};

int cmd_serve(const ServeOpts& o) {
  const auto r = resolve(o.common);
  if (r.protocol == Protocol::Ftp && o.root.empty()) throw UsageError("serve --protocol ftp needs --root");
  if (r.protocol == Protocol::Ftp && !fs::is_directory(o.root))
    throw Error(Errc::ConfigError, "root is not a directory: " + o.root);
  const sigset_t signals = block_stop_signals();

  mqtt::Broker broker(o.capacity);
  std::mutex mu;
  std::size_t accepted = 0, rejected = 0, channel_errors = 0;
  auto sink = [&](const HandshakeOutcome& out) {
    std::lock_guard lock(mu);
    switch (out.status) {
      case HandshakeStatus::Accepted: ++accepted; break;
      case HandshakeStatus::Rejected: ++rejected; break;
      case HandshakeStatus::ChannelError: ++channel_errors; break;
    }
    if (o.log)
      std::cerr << status_name(out.status) << " n="
                << (out.index_used ? std::to_string(*out.index_used) : "-") << " units=" << out.units
                << std::endl;
  };
  auto factory = [&]() {
    net::TcpServer::Connection c;
    if (r.protocol == Protocol::Ftp)
      c.app = std::make_unique<ftp::ServerApp>(o.root);
    else
      c.app = std::make_unique<mqtt::ServerApp>(broker);
    c.session = r.key ? std::make_unique<ServerSession>(make_state(o.common, r), r.table, *c.app)
                      : std::make_unique<ServerSession>(*c.app);
    return c;
  };
  net::TcpServer server(endpoint_or_default(o.listen, r.protocol), factory, sink,
                        milliseconds(o.idle_ms));
  std::cerr << "listening on port " << server.port() << std::endl;
  server.start();
  wait_for_signal(signals);
  server.stop();
  std::lock_guard lock(mu);
  print_json({{"accepted", accepted},
              {"rejected", rejected},
              {"channel_errors", channel_errors},
              {"broker_registered_peak", broker.peak()}});
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct ClientOpts {
  Common common;
  std::string connect;
  std::string out_dir = ".";
  std::string client_id = "mpd-client";
  int timeout_ms = static_cast<int>(kDefaultClientTimeout.count());
  int settle_ms = static_cast<int>(net::kDefaultServerIdle.count()) + 50;
  std::vector<std::string> command;
};

ClientResult exchange(ClientSession& client, net::TcpTransport& t, const Bytes& request,
                      const ClientOpts& o) {
  auto res = run_handshake_client(client, request, t, milliseconds(o.timeout_ms));
  if (res.status != ClientStatus::Response)
    throw Error(Errc::ChannelError, std::string("no response (") + client_status_name(res.status) + ")");
  return res;
}

int cmd_client(const ClientOpts& o) {
  const auto r = resolve(o.common);
  if (o.command.empty()) throw UsageError("client needs a command");
  std::optional<ClientSession> client;
  if (r.key)
    client.emplace(make_state(o.common, r), r.table, r.prof.policy);
  else
    client.emplace(r.prof.policy);
  net::TcpTransport t(net::connect_to(endpoint_or_default(o.connect, r.protocol)),
                      milliseconds(o.settle_ms));
  const auto& verb = o.command[0];

  if (r.protocol == Protocol::Ftp) {
    std::optional<ftp::Command> cmd;
    if (verb == "rget" && o.command.size() == 2) cmd = ftp::rget(o.command[1]);
    if (verb == "ls" && o.command.size() == 1) cmd = ftp::Command{ftp::Verb::Ls, {}};
    if (verb == "quit" && o.command.size() == 1) cmd = ftp::Command{ftp::Verb::Quit, {}};
    if (!cmd) throw UsageError("ftp commands: rget <name> | ls | quit");
    const auto res = exchange(*client, t, ftp::render(*cmd), o);
    const std::string body = to_string(*res.response);
    if (body.rfind("ERR,", 0) == 0) throw Error(Errc::ChannelError, "server: " + body);
    if (cmd->verb == ftp::Verb::Rget) {
      const fs::path dest = fs::path(o.out_dir) / *cmd->arg;
      std::ofstream f(dest, std::ios::binary);
      f.write(body.data() + 3, static_cast<std::streamsize>(body.size() - 3));
      if (!f) throw Error(Errc::ConfigError, "cannot write " + dest.string());
      std::cerr << "wrote " << dest.string() << " (" << body.size() - 3 << " bytes)" << std::endl;
    } else {
      std::cout << body << std::endl;
    }
    return kExitOk;
  }

  if (!((verb == "connect" && o.command.size() == 1) || (verb == "publish" && o.command.size() == 3)))
    throw UsageError("mqtt commands: connect | publish <topic> <payload>");
  const auto ack = exchange(*client, t, mqtt::render(mqtt::connect(o.client_id)), o);
  const auto connack = mqtt::parse(*ack.response);
  if (connack.code != mqtt::kAccepted)
    throw Error(Errc::ChannelError, "connection refused, code " + std::to_string(connack.code));
  if (verb == "publish") {
    const auto res = exchange(*client, t, mqtt::render(mqtt::publish(o.command[1], o.command[2])), o);
    if (mqtt::parse(*res.response).type != mqtt::Type::Puback)
      throw Error(Errc::ChannelError, "publish not acknowledged");
  }
  t.send(mqtt::render(mqtt::disconnect()));
  std::cout << "ok" << std::endl;
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct AttackOpts {
  Common common;
  std::string mode = "flood";
  std::string connect;
  std::size_t count = 10000;
  double rate = 0;  // packets per second, 0 = unlimited
  std::string spoof = "identity";
  std::string command = "rget,secret.txt";
  int grace_ms = 500;
  bool local = false;
  std::size_t genuine_every = 100;
};

/// Reads every complete frame already waiting on `s` without blocking.
std::vector<Bytes> drain(net::Socket& s, FrameDecoder& dec) {
  std::vector<Bytes> frames;
  std::uint8_t buf[4096];
  while (s.wait_readable(milliseconds(0))) {
    const std::size_t n = s.read_some(buf, sizeof(buf));
    if (n == 0) break;
    dec.feed(ByteView(buf, n));
  }
  while (auto f = dec.next()) frames.push_back(std::move(*f));
  return frames;
}

void pace(double rate, std::size_t i, std::chrono::steady_clock::time_point t0) {
  if (rate <= 0) return;
  std::this_thread::sleep_until(t0 + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                         std::chrono::duration<double>(i / rate)));
}

int cmd_attack(const AttackOpts& o) {
  if (o.mode != "flood" && o.mode != "inject") throw UsageError("--mode flood|inject");
  if (o.local) {
    // In-process run against a simulated server keyed like a genuine one.
    harness::AttackTarget target;
    target.mpd = !o.common.plain;
    target.depth = o.common.depth;
    target.hash = o.common.hash;
    target.genuine_every = o.genuine_every;
    if (!o.common.table_path.empty()) target.table = load_table(o.common.table_path);
    if (target.mpd) target.key = resolve_key(o.common);
    harness::ScenarioMetrics m;
    if (o.mode == "flood")
      m = harness::attack_connect_flood(target, o.count);
    else
      m = harness::attack_fixed_dialect(target, o.count, parse_spec_line(o.spoof), to_bytes(o.command));
    print_json(harness::to_json(m));
    return kExitOk;
  }

  const auto protocol = parse_protocol(o.common.protocol);
  const auto ep = endpoint_or_default(o.connect, protocol);
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t sent = 0, responses = 0, refused = 0, acks = 0, connect_errors = 0;

  if (o.mode == "flood") {
    raise_fd_limit();
    std::vector<std::pair<net::Socket, FrameDecoder>> conns;
    conns.reserve(o.count);
    char id[32];
    for (std::size_t i = 0; i < o.count; ++i) {
      pace(o.rate, i, t0);
      std::snprintf(id, sizeof(id), "flood-%05zu", i);
      try {
        net::Socket s = net::connect_to(ep);
        s.write_all(encode_frame(mqtt::render(mqtt::connect(id))));
        conns.emplace_back(std::move(s), FrameDecoder{});
        ++sent;
      } catch (const Error&) {
        ++connect_errors;
      }
    }
    std::this_thread::sleep_for(milliseconds(o.grace_ms));
    for (auto& [s, dec] : conns) {
      try {
        for (const auto& f : drain(s, dec)) {
          auto p = mqtt::try_parse(f);
          if (p && p->type == mqtt::Type::Connack && p->code != mqtt::kAccepted)
            ++refused;
          else
            ++responses;
        }
      } catch (const Error&) {
      }
    }
  } else {
    const auto units = apply_dialect(parse_spec_line(o.spoof), to_bytes(o.command));
    net::Socket s = net::connect_to(ep);
    FrameDecoder dec;
    auto tally = [&] {
      for (const auto& f : drain(s, dec)) (is_ack(f) ? acks : responses)++;
    };
    for (std::size_t i = 0; i < o.count; ++i) {
      pace(o.rate, i, t0);
      for (const auto& u : units) s.write_all(encode_frame(u));
      ++sent;
      tally();
    }
    std::this_thread::sleep_for(milliseconds(o.grace_ms));
    tally();
  }
  print_json({{"mode", o.mode},
              {"sent", sent},
              {"responses", responses},
              {"refused", refused},
              {"acks", acks},
              {"connect_errors", connect_errors},
              {"wall_time", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()}});
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct ChannelOpts {
  std::string listen = "127.0.0.1:0";
  std::string connect;
  std::string config;
  std::vector<std::string> drop, replay, modify;
  double loss_rate = 0;
  std::uint64_t seed = 0;
  bool log = false;
};

harness::FrameRef parse_ref(const std::string& text) {
  const auto colon = text.find(':');
  try {
    if (colon == std::string::npos) return {std::stoul(text), 0};
    return {std::stoul(text.substr(0, colon)), std::stoul(text.substr(colon + 1))};
  } catch (const std::exception&) {
    throw UsageError("bad frame reference: " + text);
  }
}

harness::ChannelPolicy channel_policy(const ChannelOpts& o) {
  harness::ChannelPolicy p;
  if (!o.config.empty()) {
    std::ifstream in(o.config);
    if (!in) throw Error(Errc::ConfigError, "cannot read " + o.config);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::ConfigError, e.what());
    }
    // Accept either a scenario config or a bare channel object.
    nlohmann::json wrapper = j.contains("channel") ? j : nlohmann::json{{"channel", j}};
    wrapper["key"] = "unused";
    wrapper["workload"] = {{"generate", 1}};
    wrapper.erase("table");
    p = harness::parse_scenario_config(wrapper).channel;
  }
  for (const auto& d : o.drop) p.drop.insert(parse_ref(d));
  for (const auto& d : o.replay) p.replay.insert(parse_ref(d));
  for (const auto& m : o.modify) {
    // handshake:frame:offset:hex
    const auto parts = CLI::detail::split(m, ':');
    if (parts.size() != 4) throw UsageError("--modify wants handshake:frame:offset:hex");
    p.modify[parse_ref(parts[0] + ":" + parts[1])] = {std::stoul(parts[2]), from_hex(parts[3])};
  }
  if (o.loss_rate > 0) p.loss_rate = o.loss_rate;
  if (o.seed) p.seed = o.seed;
  p.validate();
  return p;
}

/// Forwards one client connection, applying the policy to client frames.
/// A client frame opens a new handshake unless the last server frame since
/// the previous client frame was an ACK (the client is mid-split).
/// Handshake ordinals count across connections, as in the scenario harness.
void proxy_connection(net::Socket client, const net::Endpoint& upstream,
                      const harness::ChannelPolicy& policy, bool log, std::mutex& log_mu,
                      std::atomic<std::size_t>& ordinal) {
  try {
    net::Socket server = net::connect_to(upstream);
    FrameDecoder from_client, from_server;
    std::size_t handshake = 0, frame = 0;
    bool mid_split = false;
    pollfd fds[2] = {{client.fd(), POLLIN, 0}, {server.fd(), POLLIN, 0}};
    std::uint8_t buf[16384];
    for (;;) {
      if (::poll(fds, 2, -1) < 0) {
        if (errno == EINTR) continue;
        return;
      }
      if (fds[0].revents & (POLLIN | POLLHUP | POLLERR)) {
        const std::size_t n = client.read_some(buf, sizeof(buf));
        if (n == 0) return;
        from_client.feed(ByteView(buf, n));
        while (auto f = from_client.next()) {
          if (!mid_split) {
            handshake = ++ordinal;
            frame = 0;
          }
          ++frame;
          mid_split = false;
          auto t = harness::channel_transfer(policy, handshake, frame, *f);
          if (log) {
            std::lock_guard lock(log_mu);
            std::cerr << "hs=" << handshake << " frame=" << frame << " " << harness::action_name(t.action)
                      << std::endl;
          }
          for (const auto& d : t.delivered) server.write_all(encode_frame(d));
        }
      }
      if (fds[1].revents & (POLLIN | POLLHUP | POLLERR)) {
        const std::size_t n = server.read_some(buf, sizeof(buf));
        if (n == 0) return;
        from_server.feed(ByteView(buf, n));
        while (auto f = from_server.next()) {
          mid_split = is_ack(*f);
          client.write_all(encode_frame(*f));
        }
      }
    }
  } catch (const Error&) {
  }
}

int cmd_channel(const ChannelOpts& o) {
  if (o.connect.empty()) throw UsageError("channel needs --connect host:port");
  const auto policy = channel_policy(o);
  const auto upstream = net::parse_endpoint(o.connect);
  const sigset_t signals = block_stop_signals();
  net::Listener listener(net::parse_endpoint(o.listen));
  std::cerr << "listening on port " << listener.port() << std::endl;
  std::mutex log_mu;
  std::atomic<std::size_t> ordinal{0};
  std::vector<std::thread> workers;
  std::thread acceptor([&] {
    while (auto s = listener.accept())
      workers.emplace_back(proxy_connection, std::move(*s), upstream, std::cref(policy), o.log,
                           std::ref(log_mu), std::ref(ordinal));
  });
  wait_for_signal(signals);
  listener.shutdown();
  acceptor.join();
  for (auto& w : workers) w.detach();
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct ScenarioOpts {
  std::string config;
  std::string trace_out;
  std::string metrics_out;
};

int cmd_scenario(const ScenarioOpts& o) {
  const auto cfg = harness::load_scenario_config(o.config);
  const auto result = harness::run_scenario(cfg);
  const std::string trace = harness::format_trace(result.trace);
  const auto metrics = harness::to_json(result.metrics);
  if (o.trace_out.empty()) {
    std::cout << trace;
  } else {
    std::ofstream(o.trace_out) << trace;
  }
  if (o.metrics_out.empty())
    print_json(metrics);
  else
    std::ofstream(o.metrics_out) << metrics.dump(2) << "\n";
  return kExitOk;
}

struct BenchOpts {
  bench::BenchConfig cfg;
  std::string table_path;
};

int cmd_bench(BenchOpts o) {
  if (!o.table_path.empty()) o.cfg.table = load_table(o.table_path);
  const auto report = bench::bench_overhead(o.cfg);
  print_json(bench::to_json(report));
  return report.complete ? kExitOk : kExitRuntime;
}

struct TableGenOpts {
  std::size_t count = 8;
  std::string kind = "mixed";
  std::uint64_t seed = 1;
  std::string out;
  std::string scenario_out;
  std::string protocol = "ftp";
};

int cmd_table_gen(const TableGenOpts& o) {
  const auto table = harness::generate_table(o.count, harness::parse_table_kind(o.kind), o.seed);
  const std::string text = "# generated: kind=" + o.kind + " seed=" + std::to_string(o.seed) + "\n" +
                           format_table(table);
  if (o.out.empty()) {
    std::cout << text;
  } else {
    std::ofstream f(o.out);
    if (!(f << text)) throw Error(Errc::ConfigError, "cannot write " + o.out);
  }
  if (!o.scenario_out.empty()) {
    if (o.out.empty()) throw UsageError("--scenario-out needs --out for the table file");
    const auto j = harness::default_scenario_json(parse_protocol(o.protocol),
                                                  fs::absolute(o.out).string(), o.seed);
    std::ofstream f(o.scenario_out);
    if (!(f << j.dump(2) << "\n")) throw Error(Errc::ConfigError, "cannot write " + o.scenario_out);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-protocol dialect tooling"};
  app.require_subcommand(1);

  ServeOpts serve;
  auto* s = app.add_subcommand("serve", "run an ftp or mqtt server");
  add_common(s, serve.common);
  s->add_option("--root", serve.root, "ftp file root");
  s->add_option("--listen", serve.listen, "host:port");
  s->add_option("--idle-ms", serve.idle_ms, "split reassembly idle timeout");
  s->add_option("--capacity", serve.capacity, "mqtt client table size");
  s->add_flag("--log", serve.log, "log each handshake to stderr");

  ClientOpts client;
  auto* c = app.add_subcommand("client", "send one command");
  add_common(c, client.common);
  c->add_option("--connect", client.connect, "host:port");
  c->add_option("--out", client.out_dir, "directory for downloaded files");
  c->add_option("--client-id", client.client_id, "mqtt client id");
  c->add_option("--timeout-ms", client.timeout_ms, "response timeout");
  c->add_option("--settle-ms", client.settle_ms, "pause after a failed handshake");
  c->add_option("command", client.command, "rget <name> | ls | quit | connect | publish <t> <p>");

  AttackOpts attack;
  auto* a = app.add_subcommand("attack", "unkeyed attacker");
  add_common(a, attack.common);
  a->add_option("--mode", attack.mode, "flood | inject");
  a->add_option("--connect", attack.connect, "host:port");
  a->add_option("--count", attack.count, "packets to send");
  a->add_option("--rate", attack.rate, "packets per second (0 = unlimited)");
  a->add_option("--spoof", attack.spoof, "fixed dialect for inject, e.g. \"shuffle 1 1 3\"");
  a->add_option("--command", attack.command, "request to inject");
  a->add_option("--grace-ms", attack.grace_ms, "wait for late responses");
  a->add_flag("--local", attack.local, "simulate the target in-process");
  a->add_option("--genuine-every", attack.genuine_every, "with --local: genuine client cadence");

  ChannelOpts channel;
  auto* ch = app.add_subcommand("channel", "fault-injecting TCP proxy");
  ch->add_option("--listen", channel.listen, "host:port");
  ch->add_option("--connect", channel.connect, "upstream server host:port");
  ch->add_option("--config", channel.config, "scenario or channel JSON");
  ch->add_option("--drop", channel.drop, "handshake[:frame]");
  ch->add_option("--replay", channel.replay, "handshake[:frame]");
  ch->add_option("--modify", channel.modify, "handshake:frame:offset:hex");
  ch->add_option("--loss-rate", channel.loss_rate, "random frame loss probability");
  ch->add_option("--seed", channel.seed, "seed for random loss");
  ch->add_flag("--log", channel.log, "log each frame decision to stderr");

  ScenarioOpts scenario;
  auto* sc = app.add_subcommand("scenario", "run a deterministic harness scenario");
  sc->add_option("--config", scenario.config, "scenario JSON")->required();
  sc->add_option("--trace", scenario.trace_out, "write the trace here instead of stdout");
  sc->add_option("--metrics", scenario.metrics_out, "write metrics JSON here instead of stdout");

  BenchOpts bench_opts;
  auto* b = app.add_subcommand("bench", "plain vs MPD overhead over loopback");
  b->add_option("--requests", bench_opts.cfg.requests, "rget calls per run");
  b->add_option("--payload", bench_opts.cfg.payload, "file size in bytes");
  b->add_option("--runs", bench_opts.cfg.runs, "measured runs per variant")->check(CLI::Range(1, 1000));
  b->add_option("--table", bench_opts.table_path, "dialect table (default: ftp shuffle table)");
  b->add_option("--depth", bench_opts.cfg.depth, "history buffer depth")->check(CLI::PositiveNumber);

  TableGenOpts tg;
  auto* t = app.add_subcommand("table-gen", "generate a dialect table");
  t->add_option("--count", tg.count, "number of dialects")->check(CLI::PositiveNumber);
  t->add_option("--kind", tg.kind, "shuffle | split | mixed")
      ->check(CLI::IsMember({"shuffle", "split", "mixed"}));
  t->add_option("--seed", tg.seed, "generator seed");
  t->add_option("--out", tg.out, "table file (default: stdout)");
  t->add_option("--scenario-out", tg.scenario_out, "also write a scenario config using the table");
  t->add_option("--protocol", tg.protocol, "protocol for --scenario-out")
      ->check(CLI::IsMember({"ftp", "mqtt"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (s->parsed()) return cmd_serve(serve);
    if (c->parsed()) return cmd_client(client);
    if (a->parsed()) return cmd_attack(attack);
    if (ch->parsed()) return cmd_channel(channel);
    if (sc->parsed()) return cmd_scenario(scenario);
    if (b->parsed()) return cmd_bench(bench_opts);
    if (t->parsed()) return cmd_table_gen(tg);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n" << app.help() << std::flush;
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kExitRuntime;
  }
  return kExitUsage;
}
