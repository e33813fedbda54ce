#include <gtest/gtest.h>

#include <deque>

#include "mpd/harness.hpp"
#include "mpd/session.hpp"

using namespace mpd;

namespace {

// Accepts lines of at least 4 bytes starting with "ok", responds "r:" + line.
// The length floor keeps short split heads from parsing as whole requests.
class EchoApp final : public ServerApp {
 public:
  bool expects_dialect() const override { return true; }
  bool validate(ByteView r) const override {
    return r.size() >= 4 && to_string(r).rfind("ok", 0) == 0;
  }
  std::optional<Bytes> handle(ByteView r) override { return to_bytes("r:" + to_string(r)); }
};

DialectPolicy echo_policy() {
  DialectPolicy p;
  p.valid_response = [](ByteView r) { return to_string(r).rfind("r:", 0) == 0; };
  return p;
}

DialectTable one(DialectSpec s) { return DialectTable({s}); }

// Direct link with no faults.
class Wire final : public Transport {
 public:
  explicit Wire(ServerSession& s) : s_(&s) {}
  void send(ByteView p) override {
    ++sent;
    take(s_->on_frame(Bytes(p.begin(), p.end())));
  }
  std::optional<Bytes> recv(std::chrono::milliseconds) override {
    if (q_.empty()) return std::nullopt;
    auto r = q_.front();
    q_.pop_front();
    return r;
  }
  void settle() override { take(s_->on_idle()); }
  std::vector<HandshakeOutcome> outcomes;
  std::size_t sent = 0;

 private:
  void take(ServerStep st) {
    for (auto& o : st.out) q_.push_back(o);
    if (st.outcome) outcomes.push_back(*st.outcome);
  }
  ServerSession* s_;
  std::deque<Bytes> q_;
};

SyncState state(std::string key = "k", std::size_t h = 1) { return init_state(to_bytes(key), h); }

}  // namespace

TEST(ServerSession, ShuffleAcceptAndCache) {
  EchoApp app;
  auto table = one(Shuffle{0, 1, 1});
  ServerSession server(state(), table, app);
  auto step = server.on_frame(to_bytes("kook"));  // "okok" shuffled
  ASSERT_TRUE(step.outcome);
  EXPECT_EQ(step.outcome->status, HandshakeStatus::Accepted);
  EXPECT_EQ(step.outcome->recovered, to_bytes("okok"));
  EXPECT_EQ(step.out, std::vector<Bytes>{to_bytes("r:okok")});
  EXPECT_EQ(server.state()->buffer().back(), to_bytes("kook"));  // wire bytes are cached
}

TEST(ServerSession, RejectionIsSilentAndStillCached) {
  EchoApp app;
  auto table = one(Shuffle{0, 1, 1});
  ServerSession server(state(), table, app);
  auto step = server.on_frame(to_bytes("okok"));
  ASSERT_TRUE(step.outcome);
  EXPECT_EQ(step.outcome->status, HandshakeStatus::Rejected);
  EXPECT_TRUE(step.out.empty());
  EXPECT_FALSE(step.close);
  EXPECT_EQ(server.state()->buffer().back(), to_bytes("okok"));
}

TEST(ServerSession, SplitAcksAndReassembles) {
  EchoApp app;
  auto table = one(Split{1, 2, 1});
  ServerSession server(state(), table, app);
  for (auto part : {"o", "k-", "x"}) {
    auto st = server.on_frame(to_bytes(part));
    EXPECT_EQ(st.out, std::vector<Bytes>{ack_payload()});
    EXPECT_FALSE(st.outcome);
  }
  auto st = server.on_frame(to_bytes("yz"));
  ASSERT_TRUE(st.outcome);
  EXPECT_EQ(st.outcome->status, HandshakeStatus::Accepted);
  EXPECT_EQ(st.outcome->units, 4u);
  EXPECT_EQ(server.state()->buffer().back(), to_bytes("ok-xyz"));
}

TEST(ServerSession, SplitWrongPartSizesRejected) {
  EchoApp app;
  auto table = one(Split{1, 2, 1});
  ServerSession server(state(), table, app);
  server.on_frame(to_bytes("o"));
  server.on_frame(to_bytes("k"));
  server.on_frame(to_bytes("-x"));
  auto st = server.on_frame(to_bytes("yz"));
  ASSERT_TRUE(st.outcome);
  EXPECT_EQ(st.outcome->status, HandshakeStatus::Rejected);
}

TEST(ServerSession, SplitFallbackForShortMessage) {
  EchoApp app;
  auto table = one(Split{2, 2, 2});
  ServerSession server(state(), table, app);
  auto st = server.on_frame(to_bytes("okay"));  // too short to split: Identity
  ASSERT_TRUE(st.outcome);
  EXPECT_EQ(st.outcome->status, HandshakeStatus::Accepted);
}

TEST(ServerSession, WholeMessageUnderFeasibleSplitRejected) {
  EchoApp app;
  auto table = one(Split{1, 1, 1});
  ServerSession server(state(), table, app);
  auto st = server.on_frame(to_bytes("ok-long"));
  ASSERT_TRUE(st.outcome);
  EXPECT_EQ(st.outcome->status, HandshakeStatus::Rejected);
}

TEST(ServerSession, PartialSplitFinalizedOnIdle) {
  EchoApp app;
  auto table = one(Split{1, 2, 1});
  ServerSession server(state(), table, app);
  server.on_frame(to_bytes("o"));
  EXPECT_TRUE(server.pending());
  auto st = server.on_idle();
  ASSERT_TRUE(st.outcome);
  EXPECT_EQ(st.outcome->status, HandshakeStatus::Rejected);
  EXPECT_FALSE(server.pending());
  EXPECT_EQ(server.state()->buffer().back(), to_bytes("o"));
  EXPECT_FALSE(server.on_idle().outcome);
}

TEST(ServerSession, PlainModeClosesOnGarbage) {
  EchoApp app;
  ServerSession server(app);
  auto ok = server.on_frame(to_bytes("okay"));
  EXPECT_EQ(ok.outcome->status, HandshakeStatus::Accepted);
  auto bad = server.on_frame(to_bytes("nope"));
  EXPECT_EQ(bad.outcome->status, HandshakeStatus::ChannelError);
  EXPECT_TRUE(bad.close);
}

TEST(ClientSession, CachesOnlyTransmittedUnits) {
  auto table = one(Split{1, 2, 1});
  ClientSession client(state(), table);
  auto out = client.prepare(to_bytes("ok-xyz"));
  ASSERT_EQ(out.units.size(), 4u);
  client.commit(out, 2);
  EXPECT_EQ(client.state()->buffer().back(), to_bytes("ok-"));
}

TEST(ClientSession, SendMessageMatchesServer) {
  EchoApp app;
  auto table = profile(Protocol::Ftp).table;
  ClientSession client(state("x", 2), table, echo_policy());
  ServerSession server(state("x", 2), table, app);
  Wire wire(server);
  for (int i = 0; i < 200; ++i) {
    auto r = run_handshake_client(client, to_bytes("ok message number " + std::to_string(i)), wire);
    ASSERT_EQ(r.status, ClientStatus::Response);
    ASSERT_EQ(*client.state(), *server.state());
  }
}

TEST(ClientDriver, SplitHandshakeCountsAcks) {
  EchoApp app;
  auto table = one(Split{1, 2, 1});
  ClientSession client(state(), table, echo_policy());
  ServerSession server(state(), table, app);
  Wire wire(server);
  auto r = run_handshake_client(client, to_bytes("ok-xyz"), wire);
  EXPECT_EQ(r.status, ClientStatus::Response);
  EXPECT_EQ(r.acks, 3u);
  EXPECT_EQ(r.units_sent, 4u);
  EXPECT_EQ(r.response, to_bytes("r:ok-xyz"));
}

TEST(ClientDriver, DesyncedSplitKeepsCachesEqual) {
  // Client believes Split, server believes Shuffle: the first sub-packet is
  // rejected as a whole message, no ACK arrives, both cache that sub-packet.
  EchoApp app;
  auto ctable = one(Split{2, 1, 1});
  auto stable = one(Shuffle{0, 1, 1});
  ClientSession client(state(), ctable, echo_policy());
  ServerSession server(state(), stable, app);
  Wire wire(server);
  auto r = run_handshake_client(client, to_bytes("ok-xyz"), wire);
  EXPECT_EQ(r.status, ClientStatus::Timeout);
  EXPECT_EQ(r.units_sent, 1u);
  EXPECT_EQ(client.state()->buffer(), server.state()->buffer());
}

TEST(ClientDriver, AckInsteadOfResponseIsDesync) {
  // Client sends a whole shuffled message whose length equals the server's t1.
  EchoApp app;
  auto ctable = one(Shuffle{0, 1, 1});
  auto stable = one(Split{4, 1, 1});
  ClientSession client(state(), ctable, echo_policy());
  ServerSession server(state(), stable, app);
  Wire wire(server);
  auto r = run_handshake_client(client, to_bytes("okay"), wire);
  EXPECT_EQ(r.status, ClientStatus::Desync);
  EXPECT_FALSE(server.pending());  // settle() flushed the partial split
  EXPECT_EQ(client.state()->buffer(), server.state()->buffer());
}

TEST(ClientDriver, MirroredResponse) {
  harness::ScenarioConfig c;
  c.protocol = Protocol::Mqtt;
  c.workload.messages = {mqtt::render(mqtt::connect("dev-a")),
                         mqtt::render(mqtt::publish("t", "1"))};
  auto r = harness::run_scenario(c);
  EXPECT_EQ(r.metrics.accepted, 2u);
  EXPECT_EQ(r.trace[0].client, ClientStatus::Response);
  EXPECT_TRUE(r.trace[0].client_index.has_value());
  EXPECT_FALSE(r.trace[1].client_index.has_value());  // publish is not dialect-bearing
}

TEST(Mirror, SplitDegradesToIdentity) {
  const Bytes m = to_bytes("\x20\x01\x00");
  EXPECT_EQ(detail::mirror_apply(Split{1, 1, 1}, m), m);
  EXPECT_EQ(detail::mirror_invert(Split{1, 1, 1}, m), m);
  EXPECT_EQ(detail::mirror_invert(Shuffle{0, 1, 1}, detail::mirror_apply(Shuffle{0, 1, 1}, m)), m);
}
