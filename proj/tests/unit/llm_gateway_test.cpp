#include <gtest/gtest.h>

#include <atomic>
#include <cstdlib>
#include <map>
#include <random>
#include <thread>

#include "knowgpt/error.hpp"
#include "knowgpt/llm_gateway.hpp"
#include "support/fixtures.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace knowgpt {
namespace {

std::vector<Choice> five() {
  return {{"A", "bank"}, {"B", "library"}, {"C", "garage"}, {"D", "ocean floor"}, {"E", "attic"}};
}

TEST(ParseAnswer, Cascade) {
  const auto c = five();
  EXPECT_EQ(parse_answer("The answer is (B).", c).label, "B");
  EXPECT_EQ(parse_answer("B", c).label, "B");
  EXPECT_EQ(parse_answer("Answer: C, because", c).label, "C");
  EXPECT_EQ(parse_answer("Probably the Ocean Floor", c).label, "D");
  auto fail = parse_answer("I cannot determine the answer.", c);
  EXPECT_FALSE(fail.parse_ok);
  EXPECT_FALSE(fail.label.has_value());
  EXPECT_EQ(fail.raw, "I cannot determine the answer.");
}

TEST(ParseAnswer, ParenthesisedWinsOverEarlierToken) {
  EXPECT_EQ(parse_answer("A guess: (E)", five()).label, "E");
}

TEST(ParseAnswer, NeverOutsideLabelSet) {
  const auto c = five();
  std::mt19937_64 rng(5);
  const std::string alphabet = "ABCDEFGHXYZ() .,abc\n";
  for (int i = 0; i < 5000; ++i) {
    std::string s;
    for (int k = 0; k < 12; ++k) s += alphabet[rng() % alphabet.size()];
    auto p = parse_answer(s, c);
    EXPECT_EQ(p.parse_ok, p.label.has_value());
    if (p.label) {
      EXPECT_TRUE(std::any_of(c.begin(), c.end(), [&](const Choice& ch) { return ch.label == *p.label; }))
          << s;
    }
  }
}

OracleHints hints(std::string id, int arm = 0) {
  OracleHints h;
  h.example_id = std::move(id);
  h.labels = {"A", "B", "C", "D", "E"};
  h.gold_label = "A";
  h.gold_fact = "(wheel, part_of, car)";
  h.arm = ArmId{arm};
  return h;
}

TEST(SimOracle, FactMatch) {
  SimOracleConfig cfg;
  EXPECT_EQ(simulate_oracle(cfg, "Background knowledge:\n(wheel, part_of, car)\n", hints("q")), "(A)");
  EXPECT_EQ(simulate_oracle(cfg, "Background knowledge:\nwheel is part of car.\n", hints("q")), "(A)");
  EXPECT_NE(simulate_oracle(cfg, "Question: nothing", hints("q")), "(A)");
  auto h = hints("q");
  h.gold_fact.reset();
  EXPECT_THROW(simulate_oracle(cfg, "x", h), ConfigError);
}

TEST(SimOracle, WrongLabelsUniform) {
  SimOracleConfig cfg;
  cfg.seed = 3;
  std::map<std::string, int> counts;
  const int n = 10000;
  for (int i = 0; i < n; ++i) counts[simulate_oracle(cfg, "no facts", hints("q" + std::to_string(i)))]++;
  EXPECT_EQ(counts.count("(A)"), 0u);
  double chi2 = 0.0;
  for (const char* l : {"(B)", "(C)", "(D)", "(E)"}) {
    const double e = n / 4.0;
    chi2 += (counts[l] - e) * (counts[l] - e) / e;
  }
  // 3 degrees of freedom, p = 0.001.
  EXPECT_LT(chi2, 16.27);
}

TEST(SimOracle, BernoulliDegenerateProbabilities) {
  SimOracleConfig cfg;
  cfg.mode = SimMode::kPerArmBernoulli;
  cfg.arm_probs = {1.0, 0.0, 0.5, 0.5, 0.5, 0.5};
  for (int i = 0; i < 200; ++i) {
    const auto id = "q" + std::to_string(i);
    EXPECT_EQ(simulate_oracle(cfg, "p", hints(id, 0)), "(A)");
    EXPECT_NE(simulate_oracle(cfg, "p", hints(id, 1)), "(A)");
  }
}

TEST(SimOracle, ContextualUsesCluster) {
  SimOracleConfig cfg;
  cfg.mode = SimMode::kContextual;
  cfg.cluster_probs["c0"] = {1, 0, 0, 0, 0, 0};
  cfg.cluster_probs["c1"] = {0, 1, 0, 0, 0, 0};
  auto h = hints("q", 1);
  h.cluster = "c1";
  EXPECT_EQ(simulate_oracle(cfg, "p", h), "(A)");
  h.cluster = "c0";
  EXPECT_NE(simulate_oracle(cfg, "p", h), "(A)");
  h.cluster.reset();
  EXPECT_THROW(simulate_oracle(cfg, "p", h), ConfigError);
}

TEST(SimOracle, Deterministic) {
  SimOracleConfig cfg;
  cfg.mode = SimMode::kPerArmBernoulli;
  cfg.arm_probs = std::vector<double>(6, 0.5);
  SimProvider a(cfg), b(cfg);
  for (int i = 0; i < 100; ++i) {
    CompletionRequest r{"prompt", hints("q" + std::to_string(i), i % 6)};
    EXPECT_EQ(a.complete(r).text, b.complete(r).text);
    EXPECT_EQ(a.complete(r).text, a.complete(r).text);
  }
}

TEST(SimOracleConfigTest, RejectsBadProbabilities) {
  SimOracleConfig cfg;
  cfg.mode = SimMode::kPerArmBernoulli;
  cfg.arm_probs = {0.5, 1.5, 0, 0, 0, 0};
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_THROW(parse_sim_mode("oracle"), ConfigError);
}

TEST(Backoff, AtLeastExponentialBase) {
  std::mt19937_64 rng(1);
  const std::chrono::milliseconds base{1000};
  for (int attempt = 1; attempt <= 6; ++attempt) {
    for (int i = 0; i < 50; ++i) {
      const auto d = backoff_delay(attempt, base, rng);
      const auto floor = base * (1 << (attempt - 1));
      EXPECT_GE(d, floor);
      EXPECT_LE(d, floor + floor / 2);
    }
  }
}

TEST(ResponseCacheTest, KeyIsSha256OfModelAndPrompt) {
  EXPECT_EQ(ResponseCache::key("gpt-x", "hello"),
            "6712ef613adfa647164b8f18f07a29d19929da898ef051d8791321c11f3e6ef6");
  EXPECT_NE(ResponseCache::key("gpt-y", "hello"), ResponseCache::key("gpt-x", "hello"));
}

TEST(ResponseCacheTest, PersistsAcrossInstances) {
  testing::TempDir dir;
  {
    ResponseCache c(dir / "cache.jsonl");
    EXPECT_FALSE(c.lookup("m", "p").has_value());
    c.store("m", "p", "(B)");
    EXPECT_EQ(c.lookup("m", "p"), "(B)");
  }
  ResponseCache again(dir / "cache.jsonl");
  EXPECT_EQ(again.size(), 1u);
  EXPECT_EQ(again.lookup("m", "p"), "(B)");
  EXPECT_FALSE(again.lookup("other", "p").has_value());
  auto line = nlohmann::json::parse(testing::read_text(dir / "cache.jsonl"));
  EXPECT_EQ(line.at("hash"), ResponseCache::key("m", "p"));
  EXPECT_EQ(line.at("model"), "m");
}

TEST(CachingGatewayTest, SecondCallServedFromCache) {
  testing::TempDir dir;
  ResponseCache cache(dir / "c.jsonl");
  SimProvider sim(SimOracleConfig{});
  CachingGateway gw(sim, cache);
  CompletionRequest r{"(wheel, part_of, car)", hints("q")};
  auto first = gw.complete(r);
  auto second = gw.complete(r);
  EXPECT_FALSE(first.from_cache);
  EXPECT_TRUE(second.from_cache);
  EXPECT_EQ(first.text, second.text);
  EXPECT_EQ(gw.hits(), 1u);
  EXPECT_EQ(gw.misses(), 1u);
}

// Local chat-completion server; `handler` decides each response.
class FakeEndpoint {
 public:
  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

  explicit FakeEndpoint(Handler h) {
    server_.Post("/v1/chat/completions", [this, h](const httplib::Request& req, httplib::Response& res) {
      ++calls;
      h(req, res);
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeEndpoint() {
    server_.stop();
    thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions"; }

  std::atomic<int> calls{0};

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

void reply_with(httplib::Response& res, const std::string& text) {
  nlohmann::json j{{"choices", {{{"message", {{"role", "assistant"}, {"content", text}}}}}}};
  res.set_content(j.dump(), "application/json");
}

class HttpProviderTest : public ::testing::Test {
 protected:
  void SetUp() override { ::setenv("KNOWGPT_TEST_KEY", "sk-test", 1); }

  ProviderConfig config(const std::string& url) {
    ProviderConfig c;
    c.kind = ProviderKind::kHttp;
    c.endpoint = url;
    c.model = "test-model";
    c.api_key_env = "KNOWGPT_TEST_KEY";
    c.timeout_seconds = 5;
    c.backoff_base = std::chrono::milliseconds(10);
    return c;
  }
};

TEST_F(HttpProviderTest, WireFormat) {
  nlohmann::json seen;
  std::string auth;
  FakeEndpoint ep([&](const httplib::Request& req, httplib::Response& res) {
    seen = nlohmann::json::parse(req.body);
    auth = req.get_header_value("Authorization");
    reply_with(res, "(C)");
  });
  HttpProvider p(config(ep.url()));
  auto r = p.complete({"What is it?", std::nullopt});
  EXPECT_EQ(r.text, "(C)");
  EXPECT_EQ(auth, "Bearer sk-test");
  EXPECT_EQ(seen.at("model"), "test-model");
  EXPECT_EQ(seen.at("temperature"), 0.0);
  ASSERT_EQ(seen.at("messages").size(), 1u);
  EXPECT_EQ(seen.at("messages")[0].at("role"), "user");
  EXPECT_EQ(seen.at("messages")[0].at("content"), "What is it?");
  EXPECT_EQ(r.prompt_tokens_est, 3u);
}

TEST_F(HttpProviderTest, MissingKeyFailsBeforeNetwork) {
  ::unsetenv("KNOWGPT_TEST_KEY");
  EXPECT_THROW(HttpProvider(config("http://127.0.0.1:1/x")), ConfigError);
}

TEST_F(HttpProviderTest, RetriesTransientStatusWithBackoff) {
  FakeEndpoint ep([&](const httplib::Request&, httplib::Response& res) {
    if (ep.calls <= 2) {
      res.status = ep.calls == 1 ? 429 : 503;
      return;
    }
    reply_with(res, "(A)");
  });
  std::vector<std::chrono::milliseconds> delays;
  HttpProvider p(config(ep.url()), [&](std::chrono::milliseconds d) { delays.push_back(d); });
  EXPECT_EQ(p.complete({"q", std::nullopt}).text, "(A)");
  EXPECT_EQ(ep.calls, 3);
  ASSERT_EQ(delays.size(), 2u);
  EXPECT_GE(delays[0].count(), 10);
  EXPECT_GE(delays[1].count(), 20);
}

TEST_F(HttpProviderTest, GivesUpAfterMaxRetries) {
  FakeEndpoint ep([](const httplib::Request&, httplib::Response& res) { res.status = 500; });
  auto cfg = config(ep.url());
  cfg.max_retries = 2;
  HttpProvider p(cfg, [](std::chrono::milliseconds) {});
  EXPECT_THROW(p.complete({"q", std::nullopt}), Error);
  EXPECT_EQ(ep.calls, 3);
}

TEST_F(HttpProviderTest, ClientErrorNotRetried) {
  FakeEndpoint ep([](const httplib::Request&, httplib::Response& res) { res.status = 400; });
  HttpProvider p(config(ep.url()), [](std::chrono::milliseconds) {});
  EXPECT_THROW(p.complete({"q", std::nullopt}), Error);
  EXPECT_EQ(ep.calls, 1);
}

TEST_F(HttpProviderTest, MalformedBody) {
  FakeEndpoint ep([](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"choices": []})", "application/json");
  });
  HttpProvider p(config(ep.url()));
  EXPECT_THROW(p.complete({"q", std::nullopt}), FormatError);
}

TEST_F(HttpProviderTest, ConcurrencyCapHolds) {
  std::atomic<int> live{0};
  std::atomic<int> peak{0};
  FakeEndpoint ep([&](const httplib::Request&, httplib::Response& res) {
    const int now = ++live;
    int p = peak.load();
    while (now > p && !peak.compare_exchange_weak(p, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(30));
    --live;
    reply_with(res, "(B)");
  });
  auto cfg = config(ep.url());
  cfg.max_concurrent = 2;
  HttpProvider p(cfg);
  std::vector<std::thread> workers;
  for (int i = 0; i < 8; ++i) {
    workers.emplace_back([&] { EXPECT_EQ(p.complete({"q", std::nullopt}).text, "(B)"); });
  }
  for (auto& w : workers) w.join();
  EXPECT_EQ(ep.calls, 8);
  EXPECT_LE(peak.load(), 2);
  EXPECT_LE(p.peak_in_flight(), 2);
  EXPECT_GE(p.peak_in_flight(), 1);
}

}  // namespace
}  // namespace knowgpt
