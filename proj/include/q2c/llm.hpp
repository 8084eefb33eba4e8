#pragma once

#include <atomic>
#include <future>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>

namespace q2c {

struct LlmRequest {
  std::string model;
  std::string prompt;
  double temperature = 0.0;
};

// Chat-completion transport. complete() returns the assistant message text
// and throws LlmError on failure. bypass_cache asks caching layers to skip
// and overwrite any stored response (used to retry malformed outputs);
// non-caching transports ignore it.
class LlmClient {
public:
  virtual ~LlmClient() = default;
  virtual std::string complete(const LlmRequest& req, bool bypass_cache) = 0;
  std::string complete(const LlmRequest& req) { return complete(req, false); }
};

struct RetryPolicy {
  int max_attempts = 4;  // 1 initial try + 3 retries
  int base_delay_ms = 1000;
  double factor = 2.0;
};

// HTTP client for an OpenAI-style chat-completions endpoint. Retries
// transport errors and 429/5xx with exponential backoff.
class HttpLlmClient : public LlmClient {
public:
  HttpLlmClient(std::string base_url, std::string api_key,
                RetryPolicy retry = {}, int timeout_seconds = 30);

  // Reads Q2C_LLM_BASE_URL and Q2C_LLM_API_KEY.
  static HttpLlmClient from_env();

  std::string complete(const LlmRequest& req, bool bypass_cache) override;
  using LlmClient::complete;

private:
  std::string base_url_;
  std::string api_key_;
  RetryPolicy retry_;
  int timeout_seconds_;
};

// Response store keyed by digest. Entries live in memory and, when a
// directory is configured, one file per key on disk (written atomically via
// temp + rename). Distinct keys may be read/written concurrently.
class ResponseCache {
public:
  ResponseCache() = default;                 // memory-only
  explicit ResponseCache(std::string dir);   // disk-backed

  std::optional<std::string> get(const std::string& key);
  void put(const std::string& key, const std::string& value);
  void erase(const std::string& key);

private:
  std::string dir_;
  std::mutex mu_;
  std::unordered_map<std::string, std::string> mem_;
};

// Cache wrapper: hits skip the upstream entirely, and concurrent identical
// requests are collapsed into one upstream call.
class CachingLlmClient : public LlmClient {
public:
  CachingLlmClient(LlmClient& upstream, std::shared_ptr<ResponseCache> cache);

  std::string complete(const LlmRequest& req, bool bypass_cache) override;
  using LlmClient::complete;

  static std::string cache_key(const LlmRequest& req);

  std::size_t upstream_calls() const { return upstream_calls_.load(); }

private:
  LlmClient& upstream_;
  std::shared_ptr<ResponseCache> cache_;
  std::mutex mu_;
  std::unordered_map<std::string, std::shared_future<std::string>> inflight_;
  std::atomic<std::size_t> upstream_calls_{0};
};

}  // namespace q2c
