#pragma once

// Access to the black-box answering model: a chat-completion HTTP provider,
// a deterministic simulated oracle for tests, a response cache, and parsing
// of the model's reply back to a choice label.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "knowgpt/bandit.hpp"
#include "knowgpt/kg_store.hpp"

namespace knowgpt {

// Side information only the simulated oracle reads; real providers ignore it.
struct OracleHints {
  std::string example_id;
  std::vector<std::string> labels;
  std::optional<std::string> gold_label;
  std::optional<std::string> gold_fact;
  std::optional<std::string> cluster;
  ArmId arm;
};

struct CompletionRequest {
  std::string prompt;
  std::optional<OracleHints> hints;
};

struct LlmReply {
  std::string text;
  std::size_t prompt_tokens_est = 0;
  std::int64_t latency_ms = 0;
  bool from_cache = false;
};

class LlmGateway {
 public:
  virtual ~LlmGateway() = default;
  virtual LlmReply complete(const CompletionRequest& request) = 0;
  virtual std::string model() const = 0;
};

enum class ProviderKind { kHttp, kSim };

struct ProviderConfig {
  ProviderKind kind = ProviderKind::kSim;
  std::string endpoint;
  std::string model;
  std::string api_key_env = "KNOWGPT_API_KEY";
  double timeout_seconds = 60.0;
  int max_retries = 3;
  int max_concurrent = 4;
  double temperature = 0.0;
  std::chrono::milliseconds backoff_base{1000};

  // Throws ConfigError.
  void validate() const;
};

enum class SimMode { kFactMatch, kPerArmBernoulli, kContextual };

SimMode parse_sim_mode(std::string_view s);

struct SimOracleConfig {
  SimMode mode = SimMode::kFactMatch;
  std::vector<double> arm_probs;
  // cluster name -> per-arm success probability
  std::map<std::string, std::vector<double>> cluster_probs;
  std::uint64_t seed = 0;

  void validate() const;
};

// True when the gold fact occurs in the prompt. A fact written as
// "(head, relation, tail)" also matches its verbalized sentence; any other
// string must occur verbatim.
bool prompt_contains_fact(std::string_view prompt, std::string_view gold_fact);

// Deterministic reply "(<label>)". fact_match: gold iff the gold fact is in the
// prompt; per_arm_bernoulli / contextual: gold with the arm's (or the
// cluster's) probability, drawn from a generator seeded by seed, example id
// and arm. Wrong answers are uniform over the non-gold labels. Throws
// ConfigError when the hints lack what the mode needs.
std::string simulate_oracle(const SimOracleConfig& cfg, std::string_view prompt,
                            const OracleHints& hints);

class SimProvider : public LlmGateway {
 public:
  explicit SimProvider(SimOracleConfig cfg);
  LlmReply complete(const CompletionRequest& request) override;
  std::string model() const override { return "sim"; }

 private:
  SimOracleConfig cfg_;
};

// Delay before retry `attempt` (1-based): base * 2^(attempt-1) plus a jitter
// in [0, base * 2^(attempt-1) / 2].
std::chrono::milliseconds backoff_delay(int attempt, std::chrono::milliseconds base,
                                        std::mt19937_64& rng);

// POSTs {model, messages:[{role:"user", content}], temperature} and returns
// choices[0].message.content. Retries transport errors, 429 and 5xx with
// exponential backoff; at most max_concurrent requests are in flight.
class HttpProvider : public LlmGateway {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  // Throws ConfigError when the API key variable is unset.
  explicit HttpProvider(ProviderConfig cfg, Sleeper sleeper = {});
  ~HttpProvider() override;

  LlmReply complete(const CompletionRequest& request) override;
  std::string model() const override { return cfg_.model; }

  int peak_in_flight() const { return peak_in_flight_.load(); }

 private:
  struct Limiter;

  ProviderConfig cfg_;
  std::string api_key_;
  Sleeper sleeper_;
  std::unique_ptr<Limiter> limiter_;
  std::atomic<int> in_flight_{0};
  std::atomic<int> peak_in_flight_{0};
  std::mutex rng_mutex_;
  std::mt19937_64 rng_;
};

// Append-only JSONL of {hash, model, reply}, keyed by SHA-256 of model and
// prompt. Safe for concurrent use.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path path);

  std::optional<std::string> lookup(std::string_view model, std::string_view prompt) const;
  void store(std::string_view model, std::string_view prompt, std::string_view reply);
  std::size_t size() const;

  static std::string key(std::string_view model, std::string_view prompt);

 private:
  std::filesystem::path path_;
  mutable std::shared_mutex mutex_;
  std::unordered_map<std::string, std::string> entries_;
};

class CachingGateway : public LlmGateway {
 public:
  CachingGateway(LlmGateway& inner, ResponseCache& cache) : inner_(inner), cache_(cache) {}

  LlmReply complete(const CompletionRequest& request) override;
  std::string model() const override { return inner_.model(); }

  std::size_t hits() const { return hits_.load(); }
  std::size_t misses() const { return misses_.load(); }

 private:
  LlmGateway& inner_;
  ResponseCache& cache_;
  std::atomic<std::size_t> hits_{0};
  std::atomic<std::size_t> misses_{0};
};

std::unique_ptr<LlmGateway> make_gateway(const ProviderConfig& provider,
                                         const SimOracleConfig& sim);

struct ParsedAnswer {
  std::optional<std::string> label;
  bool parse_ok = false;
  std::string raw;
};

// (1) first "(<label>)"; (2) first standalone label token; (3) first choice
// text found case-insensitively; (4) parse failure.
ParsedAnswer parse_answer(std::string_view reply, std::span<const Choice> choices);

}  // namespace knowgpt
