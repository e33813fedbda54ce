#pragma once

// Overhead benchmark: a plain and an MPD ftp server run as child processes;
// the parent issues `requests` rget calls to each over loopback TCP. Server
// memory is the child's peak RSS from wait4().

#include <sys/resource.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mpd/harness.hpp"
#include "mpd/net.hpp"

namespace mpd::bench {

struct BenchConfig {
  std::size_t requests = 10000;
  std::size_t payload = 1024;
  std::size_t runs = 4;  // per variant
  Bytes key = to_bytes("mpd-bench-key");
  DialectTable table = ftp_shuffle_table();
  std::size_t depth = 1;
  std::string hash = "md5";
};

struct BenchRun {
  bool mpd = false;
  double seconds = 0;
  long maxrss_kb = 0;
  double server_cpu = 0;  // child user + system seconds
  std::size_t responses = 0;
};

struct BenchReport {
  std::vector<BenchRun> runs;  // measured runs, warm-up excluded
  double plain_seconds = 0, mpd_seconds = 0;  // medians
  double plain_rss_kb = 0, mpd_rss_kb = 0;
  double time_overhead = 0;    // relative, e.g. 0.05 = 5 %
  double memory_overhead = 0;  // relative
  bool complete = true;        // every request got a response
};

inline nlohmann::json to_json(const BenchReport& r) {
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& run : r.runs)
    runs.push_back({{"mpd", run.mpd}, {"seconds", run.seconds}, {"maxrss_kb", run.maxrss_kb},
                    {"server_cpu", run.server_cpu}, {"responses", run.responses}});
  return {{"runs", runs},
          {"plain_seconds", r.plain_seconds},
          {"mpd_seconds", r.mpd_seconds},
          {"plain_rss_kb", r.plain_rss_kb},
          {"mpd_rss_kb", r.mpd_rss_kb},
          {"time_overhead", r.time_overhead},
          {"memory_overhead", r.memory_overhead},
          {"complete", r.complete}};
}

namespace detail {

inline constexpr const char* kBenchFile = "payload.bin";

[[noreturn]] inline void serve_once(int port_fd, const std::filesystem::path& root,
                                    const BenchConfig& cfg, bool mpd) {
  int code = 0;
  try {
    net::Listener listener({"127.0.0.1", 0});
    const std::uint16_t port = listener.port();
    if (::write(port_fd, &port, sizeof(port)) != sizeof(port)) ::_exit(3);
    ::close(port_fd);
    auto sock = listener.accept();
    if (!sock) ::_exit(4);
    ftp::ServerApp app(root);
    std::optional<ServerSession> session;
    if (mpd)
      session.emplace(SyncState(cfg.key, cfg.depth, to_bytes(kDefaultInitialPacket),
                                HashFunction(cfg.hash)),
                      cfg.table, app);
    else
      session.emplace(app);
    net::run_handshake_server(std::move(*sock), *session);
  } catch (...) {
    code = 2;
  }
  ::_exit(code);
}

struct Child {
  pid_t pid = -1;
  std::uint16_t port = 0;
};

inline Child spawn_server(const std::filesystem::path& root, const BenchConfig& cfg, bool mpd) {
  int fds[2];
  if (::pipe(fds) != 0) throw Error(Errc::ChannelError, "pipe failed");
  const pid_t pid = ::fork();
  if (pid < 0) throw Error(Errc::ChannelError, "fork failed");
  if (pid == 0) {
    ::close(fds[0]);
    serve_once(fds[1], root, cfg, mpd);
  }
  ::close(fds[1]);
  Child c{pid, 0};
  if (::read(fds[0], &c.port, sizeof(c.port)) != sizeof(c.port)) c.port = 0;
  ::close(fds[0]);
  return c;
}

inline void reap(pid_t pid, BenchRun& run) {
  int status = 0;
  rusage usage{};
  ::wait4(pid, &status, 0, &usage);
  run.maxrss_kb = usage.ru_maxrss;
  auto secs = [](const timeval& tv) { return tv.tv_sec + tv.tv_usec / 1e6; };
  run.server_cpu = secs(usage.ru_utime) + secs(usage.ru_stime);
}

inline constexpr std::size_t kBlock = 250;

/// One plain and one MPD server side by side; the client alternates blocks
/// of requests between them so slow drift in machine load hits both alike.
inline std::pair<BenchRun, BenchRun> run_pair(const std::filesystem::path& root,
                                              const BenchConfig& cfg) {
  BenchRun runs[2];
  Child children[2];
  for (int v = 0; v < 2; ++v) {
    runs[v].mpd = v == 1;
    children[v] = spawn_server(root, cfg, v == 1);
  }
  if (children[0].port && children[1].port) {
    const auto prof = profile(Protocol::Ftp);
    std::optional<ClientSession> clients[2];
    clients[0].emplace(prof.policy);
    clients[1].emplace(SyncState(cfg.key, cfg.depth, to_bytes(kDefaultInitialPacket),
                                 HashFunction(cfg.hash)),
                       cfg.table, prof.policy);
    std::optional<net::TcpTransport> links[2];
    for (int v = 0; v < 2; ++v)
      links[v].emplace(net::connect_to({"127.0.0.1", children[v].port}), std::chrono::milliseconds(0));
    const Bytes request = ftp::render(ftp::rget(kBenchFile));
    std::size_t done[2] = {0, 0};
    for (std::size_t block = 0; done[0] < cfg.requests || done[1] < cfg.requests; ++block) {
      for (int k = 0; k < 2; ++k) {
        const int v = (block + k) % 2;
        const std::size_t n = std::min(kBlock, cfg.requests - done[v]);
        const auto t0 = std::chrono::steady_clock::now();
        for (std::size_t i = 0; i < n; ++i) {
          auto r = run_handshake_client(*clients[v], request, *links[v]);
          if (r.status == ClientStatus::Response) ++runs[v].responses;
        }
        runs[v].seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        done[v] += n;
      }
    }
  }
  for (int v = 0; v < 2; ++v) {
    if (children[v].pid > 0) reap(children[v].pid, runs[v]);
  }
  return {runs[0], runs[1]};
}

}  // namespace detail

namespace detail {
inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2;
}
}  // namespace detail

/// Runs `cfg.runs` plain/MPD pairs after one unmeasured warm-up pair.
/// Reported figures are per-variant medians.
inline BenchReport bench_overhead(const BenchConfig& cfg) {
  if (cfg.runs == 0 || cfg.requests == 0) throw Error(Errc::ConfigError, "bench needs runs and requests");
  harness::SampleRoot root;
  {
    std::ofstream f(root.path() / detail::kBenchFile, std::ios::binary);
    for (std::size_t i = 0; i < cfg.payload; ++i) f.put(static_cast<char>('a' + i % 26));
  }
  BenchReport rep;
  std::vector<double> secs[2], rss[2];
  for (std::size_t i = 0; i <= cfg.runs; ++i) {
    auto [plain, mpd] = detail::run_pair(root.path(), cfg);
    if (i == 0) continue;
    for (const auto& run : {plain, mpd}) {
      rep.complete = rep.complete && run.responses == cfg.requests;
      secs[run.mpd].push_back(run.seconds);
      rss[run.mpd].push_back(static_cast<double>(run.maxrss_kb));
      rep.runs.push_back(run);
    }
  }
  rep.plain_seconds = detail::median(secs[0]);
  rep.mpd_seconds = detail::median(secs[1]);
  rep.plain_rss_kb = detail::median(rss[0]);
  rep.mpd_rss_kb = detail::median(rss[1]);
  rep.time_overhead = rep.mpd_seconds / rep.plain_seconds - 1.0;
  rep.memory_overhead = rep.mpd_rss_kb / rep.plain_rss_kb - 1.0;
  return rep;
}

}  // namespace mpd::bench
