#pragma once

// SPDX-License-Identifier: Apache-2.0

/**
 * @file backend.hpp
 * @brief Inference interface used by every pipeline stage.
 *
 * Implementations: MockBackend (deterministic, table driven) and
 * HttpBackend (chat-completions-style wire client with token logprobs).
 */

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "rrm/errors.hpp"
#include "rrm/hash.hpp"
#include "rrm/types.hpp"

namespace rrm {

struct SamplingParams {
  double temperature = 0.7;
  double top_p = 0.95;
  std::size_t max_tokens = 4096;
  std::size_t n_samples = 1;
  std::optional<std::int64_t> seed;

  void validate() const {
    if (!(temperature >= 0.0) || !std::isfinite(temperature))
      throw Error(ErrorCode::InvalidArgument, "temperature must be >= 0");
    if (!(top_p > 0.0 && top_p <= 1.0)) throw Error(ErrorCode::InvalidArgument, "top_p must be in (0, 1]");
    if (n_samples < 1) throw Error(ErrorCode::InvalidArgument, "n_samples must be >= 1");
    if (max_tokens < 1) throw Error(ErrorCode::InvalidArgument, "max_tokens must be >= 1");
  }
};

/// Greedy single-sample parameters.
inline SamplingParams greedy(std::optional<std::int64_t> seed = std::nullopt) {
  return {0.0, 1.0, 4096, 1, seed};
}

enum class FinishReason { stop, length, error };

struct TokenLogprob {
  std::string token;
  double logprob = 0.0;
};

struct Completion {
  std::string text;
  std::vector<TokenLogprob> token_logprobs;
  FinishReason finish_reason = FinishReason::stop;
};

inline double sum_logprobs(const Completion& c) {
  double total = 0.0;
  for (const auto& t : c.token_logprobs) total += t.logprob;
  return total;
}

class Backend {
 public:
  virtual ~Backend() = default;

  /// Exactly params.n_samples completions.
  virtual std::vector<Completion> generate(const PromptContext& prompt, const SamplingParams& params) = 0;

  /// Sum of continuation token logprobs under teacher forcing; finite and <= 0.
  virtual double score_sequence(std::string_view prefix, std::string_view continuation) = 0;

  /// Distribution over the two label tokens at the answer position, optionally
  /// conditioned on a rationale already written by the model.
  virtual LabelDistribution label_logprobs(const PromptContext& prompt,
                                           const std::optional<std::string>& rationale_prefix) = 0;

  virtual std::size_t count_tokens(std::string_view text) const = 0;

  /// Fixed prefix standing in for "no context" when scoring unconditional likelihood.
  virtual std::string neutral_prefix() const { return {}; }

  /// Short identifier recorded in config digests.
  virtual std::string describe() const = 0;
};

/// Per-sample seed derived from a run seed and stable keys.
inline std::int64_t derive_seed(std::int64_t run_seed, std::string_view key, std::uint64_t index) {
  auto h = hash_combine({static_cast<std::uint64_t>(run_seed), fnv1a64(key), index});
  return static_cast<std::int64_t>(h >> 1);
}

struct RetryPolicy {
  int max_attempts = 5;
  std::chrono::milliseconds initial_backoff{200};
  std::chrono::milliseconds max_backoff{5000};
};

/// Runs `fn`, retrying retryable rrm::Error with capped exponential backoff.
/// `attempts` (if given) accumulates every attempt made.
template <typename Fn>
auto with_retry(const RetryPolicy& policy, Fn&& fn, std::atomic<std::uint64_t>* attempts = nullptr,
                const std::function<void(std::chrono::milliseconds)>& sleep = {}) -> decltype(fn()) {
  auto backoff = policy.initial_backoff;
  for (int attempt = 1;; ++attempt) {
    if (attempts) attempts->fetch_add(1, std::memory_order_relaxed);
    try {
      return fn();
    } catch (const Error& e) {
      if (!e.retryable() || attempt >= policy.max_attempts) throw;
    }
    if (sleep)
      sleep(backoff);
    else
      std::this_thread::sleep_for(backoff);
    backoff = std::min(policy.max_backoff, backoff * 2);
  }
}

/// Token-bucket rate limiter; `acquire` blocks until a token is available.
class TokenBucket {
 public:
  using Clock = std::chrono::steady_clock;

  TokenBucket(double rate_per_second, double burst)
      : rate_(rate_per_second), burst_(burst), tokens_(burst), last_(Clock::now()) {}

  void acquire() {
    while (true) {
      std::chrono::duration<double> wait{0.0};
      {
        std::lock_guard lock(mu_);
        refill();
        if (tokens_ >= 1.0) {
          tokens_ -= 1.0;
          return;
        }
        wait = std::chrono::duration<double>((1.0 - tokens_) / rate_);
      }
      std::this_thread::sleep_for(wait);
    }
  }

  bool try_acquire() {
    std::lock_guard lock(mu_);
    refill();
    if (tokens_ < 1.0) return false;
    tokens_ -= 1.0;
    return true;
  }

 private:
  void refill() {
    auto now = Clock::now();
    tokens_ = std::min(burst_, tokens_ + rate_ * std::chrono::duration<double>(now - last_).count());
    last_ = now;
  }

  std::mutex mu_;
  double rate_;
  double burst_;
  double tokens_;
  Clock::time_point last_;
};

}  // namespace rrm
