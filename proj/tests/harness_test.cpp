#include <gtest/gtest.h>

#include <random>

#include "mpd/harness.hpp"

using namespace mpd;
using namespace mpd::harness;

namespace {

ScenarioConfig ftp_config(std::vector<std::string> messages, std::size_t h = 1) {
  ScenarioConfig c;
  c.protocol = Protocol::Ftp;
  c.key = to_bytes("k");
  c.depth = h;
  for (auto& m : messages) c.workload.messages.push_back(to_bytes(m));
  return c;
}

std::vector<std::string> statuses(const ScenarioResult& r) {
  std::vector<std::string> out;
  for (const auto& e : r.trace) out.push_back(e.status());
  return out;
}

}  // namespace

TEST(Channel, TransferActions) {
  ChannelPolicy p;
  p.drop.insert({1, 0});
  p.modify[{2, 1}] = Patch{0, {0xFF}};
  p.replay.insert({3, 2});
  const Bytes m = to_bytes("abc");
  EXPECT_EQ(channel_transfer(p, 1, 3, m).action, ChannelAction::Drop);
  auto mod = channel_transfer(p, 2, 1, m);
  EXPECT_EQ(mod.action, ChannelAction::DeliverModified);
  EXPECT_EQ(mod.delivered.at(0), (Bytes{0xFF, 'b', 'c'}));
  EXPECT_EQ(channel_transfer(p, 2, 2, m).action, ChannelAction::Deliver);
  auto rep = channel_transfer(p, 3, 2, m);
  EXPECT_EQ(rep.delivered.size(), 2u);
  EXPECT_EQ(channel_transfer(p, 3, 1, m).action, ChannelAction::Deliver);
}

TEST(Channel, OverlappingSchedulesRejected) {
  ChannelPolicy p;
  p.drop.insert({2, 0});
  p.replay.insert({2, 1});
  EXPECT_THROW(p.validate(), Error);
  ChannelPolicy q;
  q.drop.insert({2, 1});
  q.replay.insert({2, 2});
  EXPECT_NO_THROW(q.validate());
}

TEST(Channel, RandomLossIsPure) {
  ChannelPolicy p;
  p.loss_rate = 0.3;
  p.seed = 99;
  std::size_t dropped = 0;
  for (std::size_t hs = 1; hs <= 2000; ++hs) {
    const auto a = channel_transfer(p, hs, 1, to_bytes("x")).action;
    EXPECT_EQ(a, channel_transfer(p, hs, 1, to_bytes("x")).action);
    dropped += a == ChannelAction::Drop;
  }
  EXPECT_NEAR(dropped / 2000.0, 0.3, 0.05);
}

TEST(Scenario, CleanRunAllAccepted) {
  ScenarioConfig c;
  c.workload.generate = 300;
  auto r = run_scenario(c);
  EXPECT_EQ(r.metrics.sent, 300u);
  EXPECT_EQ(r.metrics.accepted, 300u);
  EXPECT_EQ(r.metrics.rejected, 0u);
  EXPECT_TRUE(r.metrics.final_sync);
}

TEST(Scenario, DropFirstOfFour) {
  auto c = ftp_config({"rget,sample.txt", "rget,sample.txt", "rget,blog.css", "rget,template.pdf"});
  c.channel.drop.insert({1, 0});
  auto r = run_scenario(c);
  EXPECT_EQ(statuses(r),
            (std::vector<std::string>{"timeout", "Rejected", "Accepted", "Accepted"}));
  EXPECT_TRUE(r.metrics.final_sync);
  ASSERT_EQ(r.metrics.resync_lag.size(), 1u);
  EXPECT_EQ(r.metrics.resync_lag[0].second, 1u);
}

TEST(Scenario, TraceIsDeterministic) {
  ScenarioConfig c;
  c.workload.generate = 200;
  c.channel.loss_rate = 0.1;
  c.channel.seed = 5;
  EXPECT_EQ(format_trace(run_scenario(c).trace), format_trace(run_scenario(c).trace));
}

TEST(Scenario, SingleFaultRecoversWithinDepth) {
  // Over many keys and fault positions: at most h rejections, then clean.
  for (std::size_t h = 1; h <= 3; ++h) {
    for (std::uint64_t seed = 1; seed <= 40; ++seed) {
      ScenarioConfig c;
      c.key = to_bytes("key-" + std::to_string(seed));
      c.depth = h;
      c.seed = seed;
      c.workload.generate = 12;
      const std::size_t at = seed % 5 + 1;
      switch (seed % 3) {
        case 0: c.channel.drop.insert({at, 0}); break;
        case 1: c.channel.drop.insert({at, 2}); break;
        default: c.channel.modify[{at, 1}] = Patch{0, {0xFF}};
      }
      auto r = run_scenario(c);
      std::size_t rejected_after = 0;
      for (std::size_t i = at; i < r.trace.size(); ++i) {
        if (r.trace[i].status() == "Rejected") {
          ++rejected_after;
          EXPECT_LT(i, at + h) << "h=" << h << " seed=" << seed;
        }
      }
      EXPECT_LE(rejected_after, h);
      EXPECT_TRUE(r.metrics.final_sync);
    }
  }
}

TEST(Scenario, ReplayDesyncsGenuineClient) {
  for (std::size_t h = 1; h <= 3; ++h) {
    for (std::uint64_t seed = 1; seed <= 30; ++seed) {
      ScenarioConfig c;
      c.key = to_bytes("replay-" + std::to_string(seed));
      c.depth = h;
      c.seed = seed;
      c.workload.generate = 10;
      c.channel.replay.insert({2, 0});
      auto r = run_scenario(c);
      std::size_t rejected = 0;
      for (std::size_t i = 2; i < r.trace.size(); ++i) rejected += r.trace[i].status() == "Rejected";
      if (r.trace[1].units == 1) {
        // One extra server-side cache entry: the first h-1 handshakes after it fail.
        EXPECT_EQ(r.trace[1].status(), "Accepted");
        EXPECT_LE(rejected, h - 1) << "h=" << h << " seed=" << seed;
      } else {
        EXPECT_LE(rejected, h) << "h=" << h << " seed=" << seed;
      }
      EXPECT_TRUE(r.metrics.final_sync);
    }
  }
}

TEST(Scenario, ReplayOfShuffledHandshakeKnownTrace) {
  auto c = ftp_config(std::vector<std::string>(8, "rget,sample.txt"), 3);
  c.channel.replay.insert({2, 0});
  auto r = run_scenario(c);
  EXPECT_EQ(statuses(r), (std::vector<std::string>{"Accepted", "Accepted", "Rejected", "Rejected",
                                                   "Accepted", "Accepted", "Accepted", "Accepted"}));
}

TEST(Scenario, MqttSessions) {
  ScenarioConfig c;
  c.protocol = Protocol::Mqtt;
  c.workload.generate = 100;
  auto r = run_scenario(c);
  EXPECT_EQ(r.metrics.accepted, r.metrics.sent);
  EXPECT_GT(r.trace.back().connection, 1u);
  EXPECT_LE(r.metrics.broker_registered_peak, 1u);
}

TEST(Scenario, PlainRun) {
  ScenarioConfig c;
  c.mpd = false;
  c.workload.generate = 50;
  auto r = run_scenario(c);
  EXPECT_EQ(r.metrics.accepted, 50u);
}

TEST(Attack, FixedDialectInjectionFails) {
  AttackTarget t;
  t.genuine_every = 10;
  auto m = attack_fixed_dialect(t, 500, Identity{});
  EXPECT_EQ(m.accepted, 0u);
  EXPECT_EQ(m.genuine_accepted, m.genuine_sent);
  EXPECT_TRUE(m.final_sync);
}

TEST(Attack, FixedDialectAgainstPlainServerSucceeds) {
  AttackTarget t;
  t.mpd = false;
  auto m = attack_fixed_dialect(t, 50, Identity{});
  EXPECT_EQ(m.accepted, 50u);
}

TEST(Attack, SpoofedDialectBoundedByTable) {
  AttackTarget t;
  const auto table = profile(Protocol::Ftp).table;
  const DialectSpec spoof = table.at(1);
  const Bytes cmd = to_bytes("rget,secret.txt");
  const double bound = fixed_dialect_acceptance_bound(table, spoof, cmd,
                                                      [](ByteView b) { return ftp::try_parse(b).has_value(); });
  auto m = attack_fixed_dialect(t, 2000, spoof, cmd);
  const double rate = static_cast<double>(m.accepted) / m.sent;
  EXPECT_GT(bound, 0.0);
  EXPECT_LE(rate, bound + 3 * std::sqrt(bound * (1 - bound) / m.sent));
}

TEST(Attack, ConnectFlood) {
  AttackTarget t;
  t.genuine_every = 50;
  auto protected_run = attack_connect_flood(t, 1000);
  EXPECT_EQ(protected_run.accepted, 0u);
  EXPECT_EQ(protected_run.broker_registered_peak, 1u);  // the genuine device only
  EXPECT_EQ(protected_run.genuine_accepted, protected_run.genuine_sent);

  t.mpd = false;
  auto plain = attack_connect_flood(t, 1000);
  EXPECT_EQ(plain.broker_registered_peak, mqtt::kDefaultCapacity);
  EXPECT_LT(plain.genuine_accepted, plain.genuine_sent);
}

TEST(Config, ParseScenarioJson) {
  auto j = nlohmann::json::parse(R"({
    "protocol": "ftp", "key_hex": "6b", "h": 2,
    "channel": {"drop": [1, {"handshake": 3, "frame": 2}],
                "modify": [{"handshake": 4, "frame": 1, "offset": 0, "bytes_hex": "ff"}]},
    "workload": {"messages": ["rget,sample.txt", "ls"]}
  })");
  auto c = parse_scenario_config(j);
  EXPECT_EQ(c.key, to_bytes("k"));
  EXPECT_EQ(c.depth, 2u);
  EXPECT_TRUE(c.channel.drop.count({1, 0}));
  EXPECT_TRUE(c.channel.drop.count({3, 2}));
  EXPECT_EQ(c.channel.modify.at({4, 1}).replacement, Bytes{0xFF});
  EXPECT_EQ(c.workload.messages.size(), 2u);
}

TEST(Config, BadConfigs) {
  EXPECT_THROW(parse_scenario_config(nlohmann::json::parse(R"({"workload":{"generate":1}})")),
               Error);
  EXPECT_THROW(parse_scenario_config(nlohmann::json::parse(R"({"key":"k"})")), Error);
  EXPECT_THROW(parse_scenario_config(nlohmann::json::parse(
                   R"({"key":"k","workload":{"generate":1},"channel":{"drop":[1],"replay":[1]}})")),
               Error);
}

TEST(TableGen, DistinctEntriesAndDeterministic) {
  for (auto kind : {TableKind::Shuffle, TableKind::Split, TableKind::Mixed}) {
    auto a = generate_table(16, kind, 7);
    EXPECT_EQ(a.n_max(), 16u);
    EXPECT_EQ(a, generate_table(16, kind, 7));
    std::set<std::string> names;
    for (const auto& e : a.entries()) names.insert(to_string(e));
    EXPECT_EQ(names.size(), 16u);
  }
}
