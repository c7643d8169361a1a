#pragma once

// SPDX-License-Identifier: Apache-2.0

/**
 * @file http_backend.hpp
 * @brief Backend speaking an OpenAI-compatible HTTP API (vLLM and similar).
 *
 *   generate        POST {base}/chat/completions, one request per sample
 *   label_logprobs  POST {base}/chat/completions continuing the assistant
 *                   message after "<answer>", max_tokens=1, top_logprobs=20
 *   score_sequence  POST {base}/completions with echo=true (prompt logprobs)
 *
 * Requires cpp-httplib; define CPPHTTPLIB_OPENSSL_SUPPORT for https URLs.
 */

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "rrm/backend.hpp"
#include "rrm/hash.hpp"
#include "rrm/templates.hpp"
#include "rrm/text.hpp"

namespace rrm {

struct HttpBackendConfig {
  std::string url = "http://localhost:8000/v1";
  std::string model;
  /// Name of the environment variable holding the bearer token.
  std::string api_key_env = "OPENAI_API_KEY";
  std::size_t max_concurrency = 8;
  long timeout_ms = 60000;
  /// Requests per second across all threads; 0 disables rate limiting.
  double rate_per_second = 0.0;
  std::string neutral_prefix;
  RetryPolicy retry;
};

namespace detail {

/// Splits "scheme://host[:port]/path" into origin and path.
inline std::pair<std::string, std::string> split_url(const std::string& url) {
  const auto scheme = url.find("://");
  const auto path_at = url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
  if (path_at == std::string::npos) return {url, ""};
  std::string path = url.substr(path_at);
  while (!path.empty() && path.back() == '/') path.pop_back();
  return {url.substr(0, path_at), path};
}

class Gate {
 public:
  explicit Gate(std::size_t n) : free_(n == 0 ? 1 : n) {}
  void acquire() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return free_ > 0; });
    --free_;
  }
  void release() {
    {
      std::lock_guard lock(mu_);
      ++free_;
    }
    cv_.notify_one();
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::size_t free_;
};

}  // namespace detail

class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(HttpBackendConfig cfg) : cfg_(std::move(cfg)), gate_(cfg_.max_concurrency) {
    std::tie(origin_, base_path_) = detail::split_url(cfg_.url);
    if (!cfg_.api_key_env.empty())
      if (const char* key = std::getenv(cfg_.api_key_env.c_str())) api_key_ = key;
    if (cfg_.rate_per_second > 0.0)
      bucket_ = std::make_unique<TokenBucket>(cfg_.rate_per_second, static_cast<double>(cfg_.max_concurrency));
  }

  std::vector<Completion> generate(const PromptContext& prompt, const SamplingParams& params) override {
    params.validate();
    const std::string pdigest = digest(prompt.prompt_text);
    std::vector<Completion> out;
    for (std::size_t i = 0; i < params.n_samples; ++i) {
      nlohmann::json body = {{"model", cfg_.model},
                             {"messages", {{{"role", "user"}, {"content", prompt.prompt_text}}}},
                             {"temperature", params.temperature},
                             {"top_p", params.top_p},
                             {"max_tokens", params.max_tokens},
                             {"logprobs", true}};
      if (params.seed) body["seed"] = *params.seed + static_cast<std::int64_t>(i);
      const std::string key = digest(pdigest + "|" + std::to_string(params.temperature) + "|" +
                                     std::to_string(params.top_p) + "|" + std::to_string(params.max_tokens) + "|" +
                                     (params.seed ? std::to_string(*params.seed) : "-") + "|" + std::to_string(i));
      const auto resp = post("/chat/completions", body, key);
      out.push_back(parse_chat_completion(resp));
    }
    return out;
  }

  double score_sequence(std::string_view prefix, std::string_view continuation) override {
    if (continuation.empty()) throw Error(ErrorCode::EmptyContinuation);
    const std::string full = std::string(prefix) + std::string(continuation);
    nlohmann::json body = {{"model", cfg_.model}, {"prompt", full}, {"echo", true},
                           {"max_tokens", 1},     {"logprobs", 0},  {"temperature", 0.0}};
    nlohmann::json resp;
    try {
      resp = post("/completions", body, digest("score|" + full));
    } catch (const Error& e) {
      if (e.code() == ErrorCode::InvalidArgument) throw Error(ErrorCode::ScoringUnsupported, e.detail());
      throw;
    }
    try {
      const auto& lp = resp.at("choices").at(0).at("logprobs");
      const auto& offsets = lp.at("text_offset");
      const auto& values = lp.at("token_logprobs");
      double total = 0.0;
      bool any = false;
      for (std::size_t t = 0; t < values.size() && t < offsets.size(); ++t) {
        const auto off = offsets[t].get<std::size_t>();
        if (off < prefix.size() || off >= full.size() || values[t].is_null()) continue;
        total += values[t].get<double>();
        any = true;
      }
      if (!any) throw Error(ErrorCode::ScoringUnsupported, "no prompt logprobs returned");
      return total;
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ScoringUnsupported, e.what());
    }
  }

  LabelDistribution label_logprobs(const PromptContext& prompt,
                                   const std::optional<std::string>& rationale_prefix) override {
    nlohmann::json messages = {{{"role", "user"}, {"content", prompt.prompt_text}}};
    const auto sections = extract_sections(prompt.prompt_text);
    const bool tagged = rationale_prefix || !sections || sections->asks_for_reasoning;
    nlohmann::json body = {{"model", cfg_.model}, {"max_tokens", 1},   {"temperature", 0.0},
                           {"logprobs", true},    {"top_logprobs", 20}};
    if (tagged) {
      messages.push_back({{"role", "assistant"}, {"content", rationale_prefix.value_or("") + "<answer>"}});
      body["continue_final_message"] = true;
      body["add_generation_prompt"] = false;
    }
    body["messages"] = messages;
    const auto resp = post("/chat/completions", body, digest("label|" + prompt.prompt_text + "|" +
                                                             rationale_prefix.value_or("")));
    return label_distribution_from_top_logprobs(resp);
  }

  /// No tokenizer round trip: the larger of the word count and bytes / 4.
  std::size_t count_tokens(std::string_view s) const override {
    return std::max(text::count_words(s), (s.size() + 3) / 4);
  }

  std::string neutral_prefix() const override { return cfg_.neutral_prefix; }

  std::string describe() const override { return "http:" + cfg_.model; }

  std::uint64_t attempts() const { return attempts_.load(); }

  /// Reads the A/B entries from the first generated token's top logprobs.
  static LabelDistribution label_distribution_from_top_logprobs(const nlohmann::json& resp) {
    const double ninf = -std::numeric_limits<double>::infinity();
    double a = ninf, b = ninf, lowest = 0.0;
    try {
      const auto& top = resp.at("choices").at(0).at("logprobs").at("content").at(0).at("top_logprobs");
      for (const auto& e : top) {
        const auto tok = std::string(text::trim(e.at("token").get<std::string>()));
        const double lp = e.at("logprob").get<double>();
        lowest = std::min(lowest, lp);
        if (tok == "A") a = std::max(a, lp);
        if (tok == "B") b = std::max(b, lp);
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::LabelTokensUnavailable, e.what());
    }
    if (a == ninf && b == ninf) throw Error(ErrorCode::LabelTokensUnavailable);
    // A label absent from the top list is at most as likely as the last entry.
    if (a == ninf) a = lowest;
    if (b == ninf) b = lowest;
    return LabelDistribution::from_logprobs(a, b);
  }

  static Completion parse_chat_completion(const nlohmann::json& resp) {
    try {
      const auto& choice = resp.at("choices").at(0);
      Completion c;
      const auto& content = choice.at("message").at("content");
      c.text = content.is_null() ? std::string() : content.get<std::string>();
      const auto reason = choice.value("finish_reason", std::string("stop"));
      c.finish_reason = reason == "length" ? FinishReason::length
                        : reason == "stop" ? FinishReason::stop
                                           : FinishReason::error;
      if (choice.contains("logprobs") && choice.at("logprobs").is_object() &&
          choice.at("logprobs").contains("content") && choice.at("logprobs").at("content").is_array())
        for (const auto& t : choice.at("logprobs").at("content"))
          c.token_logprobs.push_back({t.at("token").get<std::string>(), t.at("logprob").get<double>()});
      return c;
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::MalformedOutput, e.what());
    }
  }

 private:
  nlohmann::json post(const std::string& endpoint, const nlohmann::json& body, const std::string& idempotency_key) {
    return with_retry(
        cfg_.retry,
        [&] {
          if (bucket_) bucket_->acquire();
          gate_.acquire();
          struct Release {
            detail::Gate& g;
            ~Release() { g.release(); }
          } release{gate_};
          return post_once(endpoint, body, idempotency_key);
        },
        &attempts_);
  }

  nlohmann::json post_once(const std::string& endpoint, const nlohmann::json& body,
                           const std::string& idempotency_key) const {
    httplib::Client client(origin_);
    const auto timeout = std::chrono::milliseconds(cfg_.timeout_ms);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    httplib::Headers headers{{"Idempotency-Key", idempotency_key}};
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
    auto res = client.Post(base_path_ + endpoint, headers, body.dump(), "application/json");
    if (!res) throw Error(ErrorCode::BackendUnavailable, httplib::to_string(res.error()));
    if (res->status == 429) throw Error(ErrorCode::RateLimited, res->body);
    if (res->status >= 500) throw Error(ErrorCode::BackendUnavailable, "HTTP " + std::to_string(res->status));
    if (res->status >= 400) {
      const auto lower = text::lower(res->body);
      if (lower.find("context") != std::string::npos &&
          (lower.find("length") != std::string::npos || lower.find("maximum") != std::string::npos))
        throw Error(ErrorCode::ContextOverflow, res->body);
      throw Error(ErrorCode::InvalidArgument, "HTTP " + std::to_string(res->status) + ": " + res->body);
    }
    try {
      return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::MalformedOutput, e.what());
    }
  }

  HttpBackendConfig cfg_;
  std::string origin_;
  std::string base_path_;
  std::string api_key_;
  detail::Gate gate_;
  std::unique_ptr<TokenBucket> bucket_;
  std::atomic<std::uint64_t> attempts_{0};
};

}  // namespace rrm
