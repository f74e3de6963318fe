// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <atomic>
#include <memory>
#include <set>
#include <thread>

#include "ntd/error.hpp"
#include "ntd/evalharness.hpp"
#include "ntd/gateway.hpp"

namespace {

using ntd::ClassId;
using ntd::GatewayClient;
using ntd::GatewayRequest;
using ntd::GatewayResponse;
using ntd::Metric;

struct World {
  ntd::SyntheticData data;
  std::shared_ptr<const ntd::Detector> detector;
};

const World& world() {
  static const World w = [] {
    ntd::SyntheticSpec spec;
    spec.seed = 31;
    spec.heldout_per_class = 20;
    auto data = ntd::generate_synthetic(spec);
    ntd::CalibrationConfig cfg;
    cfg.n = 3;
    cfg.rounds = 500;
    cfg.seed = 31;
    auto table = ntd::calibrate(data.store, cfg);
    auto store = std::make_shared<const ntd::ValidationStore>(data.store);
    auto det = std::make_shared<const ntd::Detector>(store, std::move(table), 3, cfg.metric);
    return World{std::move(data), std::move(det)};
  }();
  return w;
}

GatewayRequest request_for(const ntd::Query& q) {
  GatewayRequest r;
  r.input_id = q.input_id;
  r.predicted_class = q.predicted_class.value;
  r.embedding = std::vector<float>(q.embedding.values().begin(), q.embedding.values().end());
  return r;
}

// The offline replay of request `seq`.
ntd::Verdict replay(const ntd::Query& q, std::uint64_t service_seed, std::uint64_t seq) {
  ntd::Rng rng(ntd::request_seed(service_seed, seq));
  return world().detector->detect(q, rng);
}

TEST(Frame, LengthPrefixIsBigEndian) {
  const std::string f = ntd::encode_frame("abc");
  ASSERT_EQ(f.size(), 7u);
  EXPECT_EQ(f.substr(0, 4), std::string("\0\0\0\3", 4));
  EXPECT_EQ(ntd::decode_frame_length(std::string("\x01\x02\x03\x04", 4)), 0x01020304u);
  EXPECT_THROW((void)ntd::decode_frame_length("abc"), ntd::Error);
}

TEST(Messages, RequestRoundTrip) {
  GatewayRequest r;
  r.input_id = "img-7";
  r.predicted_class = 4;
  r.embedding = std::vector<float>{0.1f, -2.5f, 3.0e-8f};
  const auto back = GatewayRequest::parse(r.render());
  EXPECT_EQ(back.input_id, "img-7");
  EXPECT_EQ(back.predicted_class, 4u);
  EXPECT_EQ(back.embedding, r.embedding);
  EXPECT_FALSE(back.embedding_ref.has_value());

  GatewayRequest both = r;
  both.embedding_ref = "x";
  EXPECT_THROW((void)GatewayRequest::parse(both.render()), ntd::Error);
  GatewayRequest neither = r;
  neither.embedding.reset();
  EXPECT_THROW((void)GatewayRequest::parse(neither.render()), ntd::Error);
}

TEST(Messages, ResponseRoundTrip) {
  GatewayResponse r;
  r.input_id = "a";
  r.ok = true;
  r.decision = ntd::Decision::kTrigger;
  r.score = 0.1 + 0.2;
  r.threshold = 0.987654321;
  r.cls = 3;
  r.latency_us = 12;
  r.request_seq = 99;
  r.seed = 0xffffffffffffffffULL;
  r.degraded = true;
  const auto back = GatewayResponse::parse(r.render());
  EXPECT_TRUE(back.ok);
  EXPECT_EQ(back.decision, r.decision);
  EXPECT_EQ(back.score, r.score);
  EXPECT_EQ(back.threshold, r.threshold);
  EXPECT_EQ(back.seed, r.seed);
  EXPECT_EQ(back.request_seq, 99u);
  EXPECT_TRUE(back.degraded);
}

TEST(Handler, VerdictsReplayOffline) {
  ntd::RequestHandler h(world().detector, 77);
  for (std::size_t i = 0; i < 100; ++i) {
    const auto& q = world().data.heldout[i].query;
    const auto resp = GatewayResponse::parse(h.handle(request_for(q).render()).render());
    ASSERT_TRUE(resp.ok) << resp.error;
    EXPECT_EQ(resp.request_seq, i);
    EXPECT_EQ(resp.seed, ntd::request_seed(77, i));
    const auto v = replay(q, 77, i);
    EXPECT_EQ(resp.score, v.score);
    EXPECT_EQ(resp.threshold, v.threshold);
    EXPECT_EQ(resp.decision, v.decision);
    EXPECT_EQ(resp.input_id, q.input_id);
  }
}

TEST(Handler, MalformedRequestsDoNotConsumeSequenceNumbers) {
  ntd::RequestHandler h(world().detector, 1);
  for (std::string_view bad : {std::string_view{}, std::string_view{"garbage"},
                               std::string_view{"input_id=a\npredicted_class=x\nembedding=1\n"},
                               std::string_view{"input_id=a\npredicted_class=1\n"}}) {
    const auto r = h.handle(bad);
    EXPECT_FALSE(r.ok);
    EXPECT_EQ(r.error_code, ntd::to_string(ntd::ErrorCode::kProtocol));
  }
  EXPECT_EQ(h.requests_handled(), 0u);

  GatewayRequest ref;
  ref.input_id = "r";
  ref.predicted_class = 0;
  ref.embedding_ref = "missing";
  const auto r = h.handle(ref.render());
  EXPECT_FALSE(r.ok);
  EXPECT_EQ(r.input_id, "r");
  EXPECT_EQ(h.requests_handled(), 0u);
}

TEST(Handler, DetectionErrorsCarryTheirCode) {
  ntd::RequestHandler h(world().detector, 1);
  GatewayRequest r;
  r.input_id = "wrong-dim";
  r.predicted_class = 0;
  r.embedding = std::vector<float>{1.0f, 2.0f};
  const auto resp = h.handle(r.render());
  EXPECT_FALSE(resp.ok);
  EXPECT_EQ(resp.error_code, ntd::to_string(ntd::ErrorCode::kDimMismatch));
}

TEST(Handler, RegisteredEmbeddings) {
  const auto& q = world().data.heldout[0].query;
  ntd::EmbeddingRegistry reg;
  reg.emplace("first", q.embedding);
  ntd::RequestHandler h(world().detector, 5, reg);
  GatewayRequest r;
  r.input_id = q.input_id;
  r.predicted_class = q.predicted_class.value;
  r.embedding_ref = "first";
  const auto resp = h.handle(r.render());
  ASSERT_TRUE(resp.ok);
  EXPECT_EQ(resp.score, replay(q, 5, 0).score);
}

class Server : public ::testing::Test {
 protected:
  void SetUp() override {
    ntd::ServerOptions opts;
    opts.seed = 123;
    server_ = std::make_unique<ntd::GatewayServer>(world().detector, opts);
    server_->start();
    ASSERT_NE(server_->port(), 0);
  }
  void TearDown() override { server_->stop(); }

  std::unique_ptr<ntd::GatewayServer> server_;
};

TEST_F(Server, ZeroLengthFrameKeepsTheConnection) {
  GatewayClient c("127.0.0.1", server_->port());
  c.send_bytes(std::string(4, '\0'));
  const auto raw = c.read_frame();
  ASSERT_TRUE(raw.has_value());
  const auto r = GatewayResponse::parse(*raw);
  EXPECT_FALSE(r.ok);
  EXPECT_EQ(r.error_code, ntd::to_string(ntd::ErrorCode::kProtocol));
  const auto ok = c.call(request_for(world().data.heldout[0].query));
  EXPECT_TRUE(ok.ok);
  EXPECT_EQ(ok.request_seq, 0u);
}

TEST_F(Server, OversizeFrameIsRefusedAndClosed) {
  GatewayClient c("127.0.0.1", server_->port());
  c.send_bytes(std::string("\x7f\xff\xff\xff", 4));
  const auto raw = c.read_frame();
  ASSERT_TRUE(raw.has_value());
  EXPECT_FALSE(GatewayResponse::parse(*raw).ok);
  EXPECT_FALSE(c.read_frame().has_value());
  // The service itself keeps going.
  GatewayClient d("127.0.0.1", server_->port());
  EXPECT_TRUE(d.call(request_for(world().data.heldout[1].query)).ok);
}

TEST_F(Server, TruncatedFrameThenDisconnect) {
  {
    GatewayClient c("127.0.0.1", server_->port());
    c.send_bytes(std::string("\0\0\0\x50partial", 11));
  }
  GatewayClient d("127.0.0.1", server_->port());
  EXPECT_TRUE(d.call(request_for(world().data.heldout[2].query)).ok);
  EXPECT_EQ(server_->requests_handled(), 1u);
}

TEST_F(Server, ConcurrentRequestsReplayExactly) {
  const auto& heldout = world().data.heldout;
  constexpr int kClients = 4;
  constexpr int kPerClient = 250;
  std::vector<std::vector<std::pair<std::size_t, GatewayResponse>>> results(kClients);
  std::vector<std::thread> threads;
  for (int t = 0; t < kClients; ++t) {
    threads.emplace_back([&, t] {
      GatewayClient c("127.0.0.1", server_->port());
      for (int i = 0; i < kPerClient; ++i) {
        const std::size_t idx = (static_cast<std::size_t>(t) * kPerClient + i) % heldout.size();
        results[t].emplace_back(idx, c.call(request_for(heldout[idx].query)));
      }
    });
  }
  for (auto& th : threads) th.join();

  std::set<std::uint64_t> seqs;
  for (const auto& per_client : results) {
    for (const auto& [idx, resp] : per_client) {
      ASSERT_TRUE(resp.ok) << resp.error;
      seqs.insert(resp.request_seq);
      const auto v = replay(heldout[idx].query, 123, resp.request_seq);
      ASSERT_EQ(resp.score, v.score);
      ASSERT_EQ(resp.decision, v.decision);
    }
  }
  EXPECT_EQ(seqs.size(), 1000u);
  EXPECT_EQ(*seqs.rbegin(), 999u);
  EXPECT_EQ(server_->requests_handled(), 1000u);
}

TEST(Endpoint, Parsing) {
  EXPECT_EQ(ntd::parse_endpoint("127.0.0.1:8080"), (std::pair<std::string, std::uint16_t>{"127.0.0.1", 8080}));
  EXPECT_EQ(ntd::parse_endpoint("localhost:1").first, "localhost");
  EXPECT_THROW((void)ntd::parse_endpoint("nohost"), ntd::Error);
  EXPECT_THROW((void)ntd::parse_endpoint("1.2.3.4:99999"), ntd::Error);
}

}  // namespace
