#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "q2c/llm.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "q2c/digest.hpp"
#include "q2c/errors.hpp"

namespace q2c {

namespace {

// Splits "scheme://host[:port]/prefix" into origin and path prefix.
std::pair<std::string, std::string> split_base_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos)
    throw LlmError("base URL missing scheme: " + url);
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, ""};
  std::string prefix = url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {url.substr(0, path_start), prefix};
}

}  // namespace

HttpLlmClient::HttpLlmClient(std::string base_url, std::string api_key,
                             RetryPolicy retry, int timeout_seconds)
    : base_url_(std::move(base_url)),
      api_key_(std::move(api_key)),
      retry_(retry),
      timeout_seconds_(timeout_seconds) {}

HttpLlmClient HttpLlmClient::from_env() {
  const char* base = std::getenv("Q2C_LLM_BASE_URL");
  const char* key = std::getenv("Q2C_LLM_API_KEY");
  if (!base || !*base)
    throw LlmError("Q2C_LLM_BASE_URL is not set");
  return HttpLlmClient(base, key ? key : "");
}

std::string HttpLlmClient::complete(const LlmRequest& req, bool) {
  const auto [origin, prefix] = split_base_url(base_url_);

  nlohmann::json body = {
      {"model", req.model},
      {"messages",
       nlohmann::json::array({{{"role", "user"}, {"content", req.prompt}}})},
      {"temperature", req.temperature},
  };
  const std::string payload = body.dump();

  std::string last_error;
  int delay_ms = retry_.base_delay_ms;
  for (int attempt = 0; attempt < retry_.max_attempts; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
      delay_ms = static_cast<int>(delay_ms * retry_.factor);
    }
    httplib::Client cli(origin);
    cli.set_connection_timeout(timeout_seconds_, 0);
    cli.set_read_timeout(timeout_seconds_, 0);
    cli.set_write_timeout(timeout_seconds_, 0);
    httplib::Headers headers;
    if (!api_key_.empty())
      headers.emplace("Authorization", "Bearer " + api_key_);

    auto res = cli.Post(prefix + "/chat/completions", headers, payload,
                        "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200)
      throw LlmError("HTTP " + std::to_string(res->status) + ": " + res->body);

    try {
      auto j = nlohmann::json::parse(res->body);
      return j.at("choices").at(0).at("message").at("content")
          .get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw LlmError(std::string("unexpected completion payload: ") + e.what());
    }
  }
  throw LlmError("LLM request failed after " +
                 std::to_string(retry_.max_attempts) + " attempts: " +
                 last_error);
}

ResponseCache::ResponseCache(std::string dir) : dir_(std::move(dir)) {
  if (!dir_.empty()) std::filesystem::create_directories(dir_);
}

std::optional<std::string> ResponseCache::get(const std::string& key) {
  {
    std::lock_guard lock(mu_);
    auto it = mem_.find(key);
    if (it != mem_.end()) return it->second;
  }
  if (dir_.empty()) return std::nullopt;
  std::ifstream in(std::filesystem::path(dir_) / key, std::ios::binary);
  if (!in) return std::nullopt;
  std::string value((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  std::lock_guard lock(mu_);
  mem_[key] = value;
  return value;
}

void ResponseCache::put(const std::string& key, const std::string& value) {
  {
    std::lock_guard lock(mu_);
    mem_[key] = value;
  }
  if (dir_.empty()) return;
  const auto final_path = std::filesystem::path(dir_) / key;
  const auto tmp_path = std::filesystem::path(dir_) / (key + ".tmp");
  {
    std::ofstream out(tmp_path, std::ios::binary | std::ios::trunc);
    out << value;
  }
  std::error_code ec;
  std::filesystem::rename(tmp_path, final_path, ec);
}

void ResponseCache::erase(const std::string& key) {
  {
    std::lock_guard lock(mu_);
    mem_.erase(key);
  }
  if (!dir_.empty()) {
    std::error_code ec;
    std::filesystem::remove(std::filesystem::path(dir_) / key, ec);
  }
}

CachingLlmClient::CachingLlmClient(LlmClient& upstream,
                                   std::shared_ptr<ResponseCache> cache)
    : upstream_(upstream), cache_(std::move(cache)) {
  if (!cache_) cache_ = std::make_shared<ResponseCache>();
}

std::string CachingLlmClient::cache_key(const LlmRequest& req) {
  return sha256_hex(req.model + '\x1f' + req.prompt);
}

std::string CachingLlmClient::complete(const LlmRequest& req, bool bypass_cache) {
  const std::string key = cache_key(req);
  if (bypass_cache) {
    cache_->erase(key);
  } else if (auto hit = cache_->get(key)) {
    return *hit;
  }

  // Bypass requests go straight upstream; they never join or register an
  // in-flight entry, so the dedup bookkeeping below stays single-owner.
  if (bypass_cache) {
    upstream_calls_.fetch_add(1);
    std::string value = upstream_.complete(req, true);
    cache_->put(key, value);
    return value;
  }

  // One upstream call per key at a time: followers wait on the leader.
  std::promise<std::string> prom;
  std::shared_future<std::string> fut;
  bool leader = false;
  {
    std::lock_guard lock(mu_);
    auto it = inflight_.find(key);
    if (it != inflight_.end()) {
      fut = it->second;
    } else {
      fut = prom.get_future().share();
      inflight_[key] = fut;
      leader = true;
    }
  }
  if (!leader) return fut.get();

  try {
    upstream_calls_.fetch_add(1);
    std::string value = upstream_.complete(req, false);
    cache_->put(key, value);
    prom.set_value(value);
  } catch (...) {
    prom.set_exception(std::current_exception());
    std::lock_guard lock(mu_);
    inflight_.erase(key);
    throw;
  }
  {
    std::lock_guard lock(mu_);
    inflight_.erase(key);
  }
  return fut.get();
}

}  // namespace q2c
