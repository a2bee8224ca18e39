#include "knowgpt/llm_gateway.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>
#include <spdlog/spdlog.h>

#include "knowgpt/error.hpp"
#include "knowgpt/hash.hpp"
#include "knowgpt/prompt_render.hpp"

namespace knowgpt {

void ProviderConfig::validate() const {
  if (kind == ProviderKind::kHttp) {
    if (endpoint.empty()) throw ConfigError("http provider requires an endpoint");
    if (model.empty()) throw ConfigError("http provider requires a model name");
  }
  if (max_retries < 0) throw ConfigError("max_retries must be >= 0");
  if (max_concurrent < 1) throw ConfigError("max_concurrent must be >= 1");
  if (!(timeout_seconds > 0.0)) throw ConfigError("timeout must be > 0");
}

SimMode parse_sim_mode(std::string_view s) {
  if (s == "fact_match") return SimMode::kFactMatch;
  if (s == "per_arm_bernoulli") return SimMode::kPerArmBernoulli;
  if (s == "contextual") return SimMode::kContextual;
  throw ConfigError("unknown sim mode '" + std::string(s) + "'");
}

void SimOracleConfig::validate() const {
  auto check = [](const std::vector<double>& ps) {
    for (double p : ps) {
      if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("sim probabilities must lie in [0, 1]");
    }
  };
  check(arm_probs);
  for (const auto& [cluster, ps] : cluster_probs) check(ps);
  if (mode == SimMode::kPerArmBernoulli && arm_probs.empty()) {
    throw ConfigError("per_arm_bernoulli needs per-arm probabilities");
  }
  if (mode == SimMode::kContextual && cluster_probs.empty()) {
    throw ConfigError("contextual sim mode needs a cluster probability table");
  }
}

namespace {

std::string trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

std::string lowercase(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

bool prompt_contains_fact(std::string_view prompt, std::string_view gold_fact) {
  if (gold_fact.empty()) return false;
  if (prompt.find(gold_fact) != std::string_view::npos) return true;
  std::string_view f = gold_fact;
  if (f.size() < 2 || f.front() != '(' || f.back() != ')') return false;
  f = f.substr(1, f.size() - 2);
  auto first = f.find(", ");
  auto second = first == std::string_view::npos ? first : f.find(", ", first + 2);
  if (second == std::string_view::npos) return false;
  auto head = trim(f.substr(0, first));
  auto rel = trim(f.substr(first + 2, second - first - 2));
  auto tail = trim(f.substr(second + 2));
  return prompt.find(Verbalizer::builtin().sentence(head, rel, tail)) != std::string_view::npos;
}

std::string simulate_oracle(const SimOracleConfig& cfg, std::string_view prompt,
                            const OracleHints& hints) {
  if (!hints.gold_label) {
    throw ConfigError("sim oracle needs a gold label (example " + hints.example_id + ")");
  }
  const std::string& gold = *hints.gold_label;
  std::mt19937_64 rng(
      mix_seed(cfg.seed, hints.example_id + "|" + std::to_string(hints.arm.index)));
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  bool correct = false;
  switch (cfg.mode) {
    case SimMode::kFactMatch:
      if (!hints.gold_fact) {
        throw ConfigError("fact_match oracle: example " + hints.example_id + " has no gold fact");
      }
      correct = prompt_contains_fact(prompt, *hints.gold_fact);
      break;
    case SimMode::kPerArmBernoulli: {
      const auto i = static_cast<std::size_t>(hints.arm.index);
      if (i >= cfg.arm_probs.size()) throw ConfigError("no sim probability for arm " + std::to_string(i));
      correct = unit(rng) < cfg.arm_probs[i];
      break;
    }
    case SimMode::kContextual: {
      if (!hints.cluster) {
        throw ConfigError("contextual oracle: example " + hints.example_id + " has no cluster");
      }
      auto it = cfg.cluster_probs.find(*hints.cluster);
      if (it == cfg.cluster_probs.end()) {
        throw ConfigError("contextual oracle: unknown cluster '" + *hints.cluster + "'");
      }
      const auto i = static_cast<std::size_t>(hints.arm.index);
      if (i >= it->second.size()) throw ConfigError("no sim probability for arm " + std::to_string(i));
      correct = unit(rng) < it->second[i];
      break;
    }
  }
  if (correct) return "(" + gold + ")";

  std::vector<std::string> wrong;
  for (const auto& l : hints.labels) {
    if (l != gold) wrong.push_back(l);
  }
  if (wrong.empty()) return "(" + gold + ")";
  std::uniform_int_distribution<std::size_t> pick(0, wrong.size() - 1);
  return "(" + wrong[pick(rng)] + ")";
}

SimProvider::SimProvider(SimOracleConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

LlmReply SimProvider::complete(const CompletionRequest& request) {
  if (request.prompt.empty()) throw ConfigError("empty prompt");
  LlmReply reply;
  reply.prompt_tokens_est = estimate_tokens(request.prompt);
  if (!request.hints) {
    // Free-form requests (e.g. graph-description rewrites) have no oracle
    // answer; echo nothing so callers fall back to template mode.
    return reply;
  }
  reply.text = simulate_oracle(cfg_, request.prompt, *request.hints);
  return reply;
}

std::chrono::milliseconds backoff_delay(int attempt, std::chrono::milliseconds base,
                                        std::mt19937_64& rng) {
  if (attempt < 1) return std::chrono::milliseconds{0};
  const auto nominal = base.count() << std::min(attempt - 1, 30);
  std::uniform_int_distribution<std::int64_t> jitter(0, std::max<std::int64_t>(0, nominal / 2));
  return std::chrono::milliseconds{nominal + jitter(rng)};
}

// ---------------------------------------------------------------------------
// Cache

ResponseCache::ResponseCache(std::filesystem::path path) : path_(std::move(path)) {
  std::ifstream in(path_);
  if (!in) return;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      entries_[j.at("hash").get<std::string>()] = j.at("reply").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      spdlog::warn("{}:{}: skipping malformed cache line ({})", path_.string(), line_no, e.what());
    }
  }
}

std::string ResponseCache::key(std::string_view model, std::string_view prompt) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  EVP_DigestUpdate(ctx, model.data(), model.size());
  const char sep = '\0';
  EVP_DigestUpdate(ctx, &sep, 1);
  EVP_DigestUpdate(ctx, prompt.data(), prompt.size());
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

std::optional<std::string> ResponseCache::lookup(std::string_view model,
                                                 std::string_view prompt) const {
  auto k = key(model, prompt);
  std::shared_lock lock(mutex_);
  auto it = entries_.find(k);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void ResponseCache::store(std::string_view model, std::string_view prompt,
                          std::string_view reply) {
  auto k = key(model, prompt);
  std::unique_lock lock(mutex_);
  if (!entries_.try_emplace(k, reply).second) return;
  std::ofstream out(path_, std::ios::app);
  if (!out) throw Error("cannot append to cache file " + path_.string());
  nlohmann::json j{{"hash", k}, {"model", model}, {"reply", reply}};
  out << j.dump() << '\n';
}

std::size_t ResponseCache::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

LlmReply CachingGateway::complete(const CompletionRequest& request) {
  const auto m = inner_.model();
  if (auto hit = cache_.lookup(m, request.prompt)) {
    ++hits_;
    LlmReply reply;
    reply.text = std::move(*hit);
    reply.prompt_tokens_est = estimate_tokens(request.prompt);
    reply.from_cache = true;
    return reply;
  }
  ++misses_;
  auto reply = inner_.complete(request);
  if (!reply.text.empty()) cache_.store(m, request.prompt, reply.text);
  return reply;
}

std::unique_ptr<LlmGateway> make_gateway(const ProviderConfig& provider,
                                         const SimOracleConfig& sim) {
  provider.validate();
  if (provider.kind == ProviderKind::kSim) return std::make_unique<SimProvider>(sim);
  return std::make_unique<HttpProvider>(provider);
}

// ---------------------------------------------------------------------------
// Answer parsing

namespace {

bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

}  // namespace

ParsedAnswer parse_answer(std::string_view reply, std::span<const Choice> choices) {
  ParsedAnswer out;
  out.raw = std::string(reply);

  // Rule 1: "(<label>)"
  std::size_t best_pos = std::string_view::npos;
  const Choice* best = nullptr;
  for (const auto& c : choices) {
    if (c.label.empty()) continue;
    auto pos = reply.find("(" + c.label + ")");
    if (pos < best_pos) {
      best_pos = pos;
      best = &c;
    }
  }
  if (best != nullptr) {
    out.label = best->label;
    out.parse_ok = true;
    return out;
  }

  // Rule 2: standalone label token
  std::size_t i = 0;
  while (i < reply.size()) {
    if (!is_alnum(reply[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < reply.size() && is_alnum(reply[j])) ++j;
    auto token = reply.substr(i, j - i);
    for (const auto& c : choices) {
      if (!c.label.empty() && token == c.label) {
        out.label = c.label;
        out.parse_ok = true;
        return out;
      }
    }
    i = j;
  }

  // Rule 3: choice text, case-insensitive
  const auto lower_reply = lowercase(reply);
  best_pos = std::string::npos;
  for (const auto& c : choices) {
    if (c.text.empty()) continue;
    auto pos = lower_reply.find(lowercase(c.text));
    if (pos < best_pos) {
      best_pos = pos;
      best = &c;
    }
  }
  if (best != nullptr) {
    out.label = best->label;
    out.parse_ok = true;
  }
  return out;
}

}  // namespace knowgpt
