#pragma once

// SPDX-License-Identifier: Apache-2.0

/**
 * @file reward.hpp
 * @brief Scalar rewards for RL consumers.
 *
 * reference_reward puts the sampled response in slot A and a reference
 * response in slot B, and returns P(A). RunningNormalizer standardizes
 * rewards against the most recent `window` values.
 */

#include <cmath>
#include <cstddef>
#include <deque>
#include <optional>
#include <string_view>

#include "rrm/backend.hpp"
#include "rrm/rationale.hpp"
#include "rrm/templates.hpp"

namespace rrm {

struct RewardConfig {
  /// Generate the rationale first and read P(A) after it.
  bool with_reasoning = true;
  SamplingParams params{0.7, 0.95, 4096, 1, std::nullopt};
};

inline double reference_reward(Backend& backend, std::string_view x, std::string_view y_sampled,
                               std::string_view y_ref, const RewardConfig& cfg = {},
                               const TemplateSet& templates = default_templates()) {
  const auto prompt = render_reward_prompt(x, y_sampled, y_ref, cfg.with_reasoning, templates);
  std::optional<std::string> prefix;
  if (cfg.with_reasoning) {
    auto params = cfg.params;
    params.n_samples = 1;
    const auto out = backend.generate(prompt, params).at(0).text;
    prefix = scan_rationale(out).think_prefix;
  }
  return backend.label_logprobs(prompt, prefix).prob_a;
}

inline double scaled_reward(double r, double gamma = 10.0) {
  if (!(r >= 0.0 && r <= 1.0)) throw Error(ErrorCode::InvalidArgument, "reward must be in [0, 1]");
  return gamma * r;
}

/// Standardizes values against a sliding window of recent values. Sums are
/// kept incrementally over values centered on a reference point and fully
/// recomputed every `window` pushes to bound drift. Not thread-safe.
class RunningNormalizer {
 public:
  explicit RunningNormalizer(std::size_t window = 1000) : window_(window) {
    if (window_ == 0) throw Error(ErrorCode::InvalidArgument, "window must be >= 1");
  }

  std::size_t window() const { return window_; }
  std::size_t size() const { return buf_.size(); }
  const std::deque<double>& buffer() const { return buf_; }

  void push(double r) {
    if (buf_.empty()) {
      ref_ = r;
      sum_ = sum_sq_ = 0.0;
    }
    buf_.push_back(r);
    add(r, 1.0);
    if (buf_.size() > window_) {
      add(buf_.front(), -1.0);
      buf_.pop_front();
    }
    if (++since_recompute_ >= window_) recompute();
  }

  double mean() const { return buf_.empty() ? 0.0 : ref_ + sum_ / n(); }

  /// Population variance.
  double variance() const {
    if (buf_.size() < 2) return 0.0;
    const double m = sum_ / n();
    return std::max(0.0, sum_sq_ / n() - m * m);
  }

  double stddev() const { return std::sqrt(variance()); }

  /// (r - mean) / std over the current buffer; 0 when std is 0 or the buffer
  /// has fewer than two values.
  double standardize(double r) const {
    const double s = stddev();
    if (buf_.size() < 2 || s == 0.0) return 0.0;
    return (r - mean()) / s;
  }

  double push_and_standardize(double r) {
    push(r);
    return standardize(r);
  }

 private:
  double n() const { return static_cast<double>(buf_.size()); }

  void add(double r, double sign) {
    const double d = r - ref_;
    sum_ += sign * d;
    sum_sq_ += sign * d * d;
  }

  void recompute() {
    since_recompute_ = 0;
    if (buf_.empty()) return;
    double total = 0.0;
    for (double v : buf_) total += v;
    ref_ = total / n();
    sum_ = sum_sq_ = 0.0;
    for (double v : buf_) add(v, 1.0);
  }

  std::size_t window_;
  std::deque<double> buf_;
  double ref_ = 0.0;
  double sum_ = 0.0;
  double sum_sq_ = 0.0;
  std::size_t since_recompute_ = 0;
};

}  // namespace rrm
