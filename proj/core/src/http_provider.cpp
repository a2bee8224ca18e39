#include <chrono>
#include <cstdlib>
#include <semaphore>
#include <thread>

#include "knowgpt/error.hpp"
#include "knowgpt/llm_gateway.hpp"
#include "knowgpt/prompt_render.hpp"

// After Eigen: <resolv.h>, pulled in by httplib, defines a `_res` macro.
#include <httplib.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

namespace knowgpt {

struct HttpProvider::Limiter {
  explicit Limiter(int n) : slots(n) {}
  std::counting_semaphore<1024> slots;
};

namespace {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

Endpoint split_endpoint(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw ConfigError("endpoint must start with http:// or https://: " + url);
  }
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

bool retryable_status(int status) { return status == 429 || status >= 500; }

}  // namespace

HttpProvider::HttpProvider(ProviderConfig cfg, Sleeper sleeper)
    : cfg_(std::move(cfg)), sleeper_(std::move(sleeper)) {
  cfg_.kind = ProviderKind::kHttp;
  cfg_.validate();
  if (cfg_.max_concurrent > 1024) throw ConfigError("max_concurrent must be <= 1024");
  const char* key = std::getenv(cfg_.api_key_env.c_str());
  if (key == nullptr || *key == '\0') {
    throw ConfigError("API key environment variable " + cfg_.api_key_env + " is not set");
  }
  api_key_ = key;
  split_endpoint(cfg_.endpoint);
  if (!sleeper_) {
    sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  }
  limiter_ = std::make_unique<Limiter>(cfg_.max_concurrent);
  rng_.seed(std::random_device{}());
}

HttpProvider::~HttpProvider() = default;

LlmReply HttpProvider::complete(const CompletionRequest& request) {
  if (request.prompt.empty()) throw ConfigError("empty prompt");
  const auto ep = split_endpoint(cfg_.endpoint);
  nlohmann::json body{
      {"model", cfg_.model},
      {"messages", nlohmann::json::array({{{"role", "user"}, {"content", request.prompt}}})},
      {"temperature", cfg_.temperature},
  };
  const std::string payload = body.dump();
  const httplib::Headers headers{{"Authorization", "Bearer " + api_key_}};

  const auto started = std::chrono::steady_clock::now();
  std::string last_error;
  for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
    if (attempt > 0) {
      std::chrono::milliseconds delay;
      {
        std::lock_guard lock(rng_mutex_);
        delay = backoff_delay(attempt, cfg_.backoff_base, rng_);
      }
      spdlog::debug("retry {} in {} ms after: {}", attempt, delay.count(), last_error);
      sleeper_(delay);
    }

    httplib::Result res;
    {
      limiter_->slots.acquire();
      const int now = ++in_flight_;
      int peak = peak_in_flight_.load();
      while (now > peak && !peak_in_flight_.compare_exchange_weak(peak, now)) {
      }
      httplib::Client client(ep.origin);
      const auto timeout = std::chrono::duration<double>(cfg_.timeout_seconds);
      client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
      client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
      res = client.Post(ep.path, headers, payload, "application/json");
      --in_flight_;
      limiter_->slots.release();
    }

    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (retryable_status(res->status)) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      throw Error("LLM endpoint returned HTTP " + std::to_string(res->status) + ": " +
                  res->body.substr(0, 200));
    }
    LlmReply reply;
    try {
      auto j = nlohmann::json::parse(res->body);
      reply.text = j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("malformed completion response: ") + e.what());
    }
    reply.prompt_tokens_est = estimate_tokens(request.prompt);
    reply.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                           std::chrono::steady_clock::now() - started)
                           .count();
    return reply;
  }
  throw Error("LLM request failed after " + std::to_string(cfg_.max_retries + 1) +
              " attempts: " + last_error);
}

}  // namespace knowgpt
