#include <gtest/gtest.h>

#include <httplib.h>

#include <thread>

#include <json.hpp>

#include "dlrepro/gateway/gateway.hpp"
#include "dlrepro/util/error.hpp"
#include "dlrepro/util/text.hpp"
#include "test_support.hpp"

using namespace dlrepro;
using namespace dlrepro::gateway;

namespace {

struct StubServer {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  int hits = 0;
  int fail_first = 0;

  StubServer() {
    server.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      ++hits;
      if (fail_first > 0) {
        --fail_first;
        res.status = 503;
        return;
      }
      auto body = nlohmann::json::parse(req.body);
      EXPECT_EQ(body["temperature"], 0.7);
      EXPECT_EQ(body["top_k"], 20);
      res.set_content(R"({"choices":[{"message":{"role":"assistant","content":"CONSTANT"}}]})", "application/json");
    });
    server.Post("/v1/embeddings", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"data":[{"embedding":[0.5,0.5]}]})", "application/json");
    });
    server.Post("/v1/rerank", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"results":[{"index":0,"relevance_score":1.7}]})", "application/json");
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~StubServer() {
    server.stop();
    thread.join();
  }
  ProviderConfig config() const {
    ProviderConfig c;
    c.endpoint = "http://127.0.0.1:" + std::to_string(port);
    c.backoff = std::chrono::milliseconds(1);
    c.timeout = std::chrono::milliseconds(5000);
    return c;
  }
};

std::vector<Message> msgs(const std::string& s) { return {{"system", "sys"}, {"user", s}}; }

}  // namespace

TEST(Gateway, DefaultsAndRoleModels) {
  ProviderConfig c;
  EXPECT_DOUBLE_EQ(c.params.temperature, 0.7);
  EXPECT_DOUBLE_EQ(c.params.top_p, 0.8);
  EXPECT_EQ(c.params.top_k, 20);
  EXPECT_DOUBLE_EQ(c.params.repetition_penalty, 1.05);
  EXPECT_EQ(c.model_for("restructure"), kTextModel);
  EXPECT_EQ(c.model_for("generate"), kCodeModel);
}

TEST(Gateway, DigestStableAndSensitive) {
  ProviderConfig c;
  auto a = make_complete_request("plan", msgs("x"), c);
  auto b = make_complete_request("plan", msgs("x"), c);
  EXPECT_EQ(a.digest, b.digest);
  EXPECT_EQ(a.digest.size(), 64u);
  EXPECT_NE(a.digest, make_complete_request("generate", msgs("x"), c).digest);
  EXPECT_NE(a.digest, make_complete_request("plan", msgs("y"), c).digest);
  c.params.temperature = 0.2;
  EXPECT_NE(a.digest, make_complete_request("plan", msgs("x"), c).digest);
  // Frozen value: guards against accidental changes to the canonical form.
  ProviderConfig d;
  EXPECT_EQ(make_embed_request("hello", d).payload, R"({"input":"hello","model":"text-embedding"})");
}

TEST(Gateway, ReplayHitAndStrictMiss) {
  ProviderConfig c;
  auto r = make_complete_request("plan", msgs("x"), c);
  ExchangeRecord rec{r.digest, ExchangeKind::Complete, "plan", r.payload, R"({"text":"stored é text\n"})"};
  Gateway g(c, std::make_shared<ReplayTransport>(std::vector<ExchangeRecord>{rec}));
  EXPECT_EQ(g.complete("plan", msgs("x")), "stored \xc3\xa9 text\n");
  try {
    g.complete("plan", msgs("other"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ReplayMiss);
  }
}

TEST(Gateway, RecordAgainstStubServer) {
  StubServer stub;
  test::TempDir tmp;
  auto log = tmp / "exchanges/exchanges.jsonl";
  auto cfg = stub.config();
  auto live = std::make_shared<HttpTransport>(cfg);
  Gateway g(cfg, std::make_shared<RecordingTransport>(live, log), true, true);
  EXPECT_EQ(g.complete("generate", msgs("hi")), "CONSTANT");
  EXPECT_EQ(text::split_lines(text::read_file(log.string())).size(), 1u);
  EXPECT_EQ(g.embed("x"), (std::vector<double>{0.5, 0.5}));
  EXPECT_DOUBLE_EQ(g.cross_score("a", "b"), 1.0);
  EXPECT_EQ(text::split_lines(text::read_file(log.string())).size(), 3u);

  // The recorded log replays without the server.
  Gateway offline(cfg, std::make_shared<ReplayTransport>(log), true, true);
  EXPECT_EQ(offline.complete("generate", msgs("hi")), "CONSTANT");
}

TEST(Gateway, RetriesThenFails) {
  StubServer stub;
  auto cfg = stub.config();
  cfg.max_retries = 2;
  stub.fail_first = 2;
  Gateway g(cfg, std::make_shared<HttpTransport>(cfg));
  EXPECT_EQ(g.complete("generate", msgs("a")), "CONSTANT");
  EXPECT_EQ(stub.hits, 3);
  stub.fail_first = 10;
  try {
    g.complete("generate", msgs("b"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ProviderFailure);
    auto digest = make_complete_request("generate", msgs("b"), cfg).digest;
    EXPECT_NE(std::string(e.what()).find(digest.substr(0, 12)), std::string::npos);
  }
}

TEST(Gateway, UnreachableProviderIsProviderFailure) {
  ProviderConfig cfg;
  cfg.endpoint = "http://127.0.0.1:1";
  cfg.max_retries = 0;
  cfg.timeout = std::chrono::milliseconds(1000);
  Gateway g(cfg, std::make_shared<HttpTransport>(cfg));
  EXPECT_THROW(g.complete("plan", msgs("x")), Error);
}

TEST(MockProviders, Deterministic) {
  EXPECT_EQ(mock_embed("x"), mock_embed("x"));
  EXPECT_EQ(mock_embed("x").size(), kMockEmbedDim);
  EXPECT_NE(mock_embed("x"), mock_embed("y"));
  EXPECT_DOUBLE_EQ(mock_cross_score("loss backward", "loss backward"), 1.0);
  EXPECT_DOUBLE_EQ(mock_cross_score("alpha beta", "gamma delta"), 0.0);
  EXPECT_DOUBLE_EQ(mock_cross_score("a b", "b c"), 1.0 / 3.0);
  // Frozen first components: the mock must not drift across platforms.
  auto v = mock_embed("model");
  EXPECT_DOUBLE_EQ(v[0], 1.7734399914900623);
  EXPECT_DOUBLE_EQ(v[1], 0.38219563180476834);
  EXPECT_DOUBLE_EQ(v[255], -0.77933701061260707);
}
