#pragma once

// SPDX-License-Identifier: Apache-2.0

/**
 * @file ranking.hpp
 * @brief Pairwise judging and the list-wise selectors built on it:
 *        voting@k, linear best-of-n, a single-elimination tournament, and
 *        full ranking by repeated selection.
 */

#include <cstddef>
#include <exception>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "rrm/backend.hpp"
#include "rrm/parallel.hpp"
#include "rrm/rationale.hpp"
#include "rrm/templates.hpp"
#include "rrm/text.hpp"
#include "rrm/types.hpp"

namespace rrm {

struct Comparison {
  Label label = Label::A;
  /// Absent when the judge answered without the tagged reasoning block.
  std::optional<RationaleBlock> rationale;
  LabelDistribution dist;
};

struct JudgeConfig {
  bool with_reasoning = true;
  SamplingParams params{0.7, 0.95, 4096, 1, std::nullopt};
  /// Judge each pair in both orders; disagreement falls back to summed probabilities.
  bool position_debias = false;
  std::size_t max_workers = 8;
};

/// Reward model used as a pairwise judge.
class Judge {
 public:
  Judge(Backend& backend, JudgeConfig cfg = {}, const TemplateSet& templates = default_templates())
      : backend_(backend), cfg_(cfg), templates_(templates) {}

  Backend& backend() const { return backend_; }
  const JudgeConfig& config() const { return cfg_; }

  /// One judgment of (y_a, y_b). An unparseable output is retried once with
  /// a different seed, then reported as MalformedOutput.
  Comparison compare(std::string_view x, std::string_view y_a, std::string_view y_b,
                     std::optional<std::int64_t> seed = std::nullopt) const {
    if (!cfg_.position_debias) return compare_once(x, y_a, y_b, seed);
    const Comparison fwd = compare_once(x, y_a, y_b, seed);
    const Comparison rev = compare_once(x, y_b, y_a, seed);
    if (other(rev.label) == fwd.label) return fwd;
    const double pa = fwd.dist.prob_a + rev.dist.prob_b;
    const double pb = fwd.dist.prob_b + rev.dist.prob_a;
    Comparison out = fwd;
    out.label = pa >= pb ? Label::A : Label::B;
    out.dist = {pa / (pa + pb), pb / (pa + pb)};
    if (out.label != fwd.label) out.rationale.reset();
    return out;
  }

 private:
  Comparison compare_once(std::string_view x, std::string_view y_a, std::string_view y_b,
                          std::optional<std::int64_t> seed) const {
    const auto prompt = render_reward_prompt(x, y_a, y_b, cfg_.with_reasoning, templates_);
    for (std::uint64_t attempt = 0; attempt < 2; ++attempt) {
      auto params = cfg_.params;
      params.n_samples = 1;
      if (attempt > 0) params.seed = derive_seed(seed.value_or(0), "retry", attempt);
      else params.seed = seed;
      const auto text = backend_.generate(prompt, params).at(0).text;
      auto scan = scan_rationale(text);
      std::optional<Label> label = scan.block ? std::optional<Label>(scan.block->answer) : extract_answer(text);
      if (!label) continue;
      Comparison c;
      c.label = *label;
      c.rationale = scan.block;
      c.dist = backend_.label_logprobs(prompt, scan.think_prefix);
      return c;
    }
    throw Error(ErrorCode::MalformedOutput, "judge output unparseable after retry");
  }

  Backend& backend_;
  JudgeConfig cfg_;
  const TemplateSet& templates_;
};

/// Tie chain: strict majority, then the larger summed probability, then A.
inline Label resolve_vote(std::size_t votes_a, std::size_t votes_b, double summed_prob_a, double summed_prob_b) {
  if (votes_a != votes_b) return votes_a > votes_b ? Label::A : Label::B;
  if (summed_prob_a != summed_prob_b) return summed_prob_a > summed_prob_b ? Label::A : Label::B;
  return Label::A;
}

/// k judge runs with seeds base_seed + j. Failed runs are skipped; if every
/// run fails, the last error propagates.
inline Label vote_at_k(const Judge& judge, std::string_view x, std::string_view y_a, std::string_view y_b,
                       std::size_t k, std::int64_t base_seed = 0) {
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
  std::vector<std::optional<Comparison>> runs(k);
  std::vector<std::exception_ptr> errors(k);
  parallel_for(k, judge.config().max_workers, [&](std::size_t j) {
    try {
      runs[j] = judge.compare(x, y_a, y_b, base_seed + static_cast<std::int64_t>(j));
    } catch (const Error&) {
      errors[j] = std::current_exception();
    }
  });
  std::size_t va = 0, vb = 0;
  double pa = 0.0, pb = 0.0;
  std::exception_ptr last;
  for (std::size_t j = 0; j < k; ++j) {
    if (!runs[j]) {
      last = errors[j];
      continue;
    }
    (runs[j]->label == Label::A ? va : vb) += 1;
    pa += runs[j]->dist.prob_a;
    pb += runs[j]->dist.prob_b;
  }
  if (va + vb == 0) std::rethrow_exception(last);
  return resolve_vote(va, vb, pa, pb);
}

/// Decides one pair; returns which of the two is preferred.
using PairwiseFn = std::function<Label(std::string_view x, std::string_view y_a, std::string_view y_b)>;

inline PairwiseFn make_pairwise(const Judge& judge, std::size_t vote_k = 1, std::int64_t seed = 0) {
  if (vote_k <= 1)
    return [&judge, seed](std::string_view x, std::string_view a, std::string_view b) {
      return judge.compare(x, a, b, seed).label;
    };
  return [&judge, vote_k, seed](std::string_view x, std::string_view a, std::string_view b) {
    return vote_at_k(judge, x, a, b, vote_k, seed);
  };
}

/// Linear scan: keep the incumbent unless the challenger wins. n-1 comparisons.
inline std::size_t best_of_n_linear(const PairwiseFn& pairwise, std::string_view x,
                                    const std::vector<std::string>& candidates) {
  if (candidates.empty()) throw Error(ErrorCode::EmptyCandidates);
  std::size_t best = 0;
  for (std::size_t i = 1; i < candidates.size(); ++i)
    if (pairwise(x, candidates[best], candidates[i]) == Label::B) best = i;
  return best;
}

/// Single-elimination tournament over adjacent pairs; an odd last entrant
/// gets a bye. Each round's matches run concurrently. n-1 comparisons.
inline std::size_t best_of_n_dnc(const PairwiseFn& pairwise, std::string_view x,
                                 const std::vector<std::string>& candidates, std::size_t max_workers = 8) {
  if (candidates.empty()) throw Error(ErrorCode::EmptyCandidates);
  std::vector<std::size_t> alive(candidates.size());
  std::iota(alive.begin(), alive.end(), std::size_t{0});
  while (alive.size() > 1) {
    const std::size_t matches = alive.size() / 2;
    std::vector<std::size_t> next(matches + alive.size() % 2);
    parallel_for(matches, max_workers, [&](std::size_t m) {
      const std::size_t a = alive[2 * m], b = alive[2 * m + 1];
      next[m] = pairwise(x, candidates[a], candidates[b]) == Label::A ? a : b;
    });
    if (alive.size() % 2) next.back() = alive.back();
    alive = std::move(next);
  }
  return alive.front();
}

enum class SelectorMode { linear, dnc };

/// Indices best first, by repeatedly selecting from the remaining set.
inline std::vector<std::size_t> full_ranking(const PairwiseFn& pairwise, std::string_view x,
                                             const std::vector<std::string>& candidates,
                                             SelectorMode mode = SelectorMode::linear, std::size_t max_workers = 8) {
  if (candidates.empty()) throw Error(ErrorCode::EmptyCandidates);
  std::vector<std::size_t> remaining(candidates.size());
  std::iota(remaining.begin(), remaining.end(), std::size_t{0});
  std::vector<std::size_t> order;
  while (!remaining.empty()) {
    std::vector<std::string> pool;
    for (auto i : remaining) pool.push_back(candidates[i]);
    const std::size_t w = mode == SelectorMode::linear ? best_of_n_linear(pairwise, x, pool)
                                                       : best_of_n_dnc(pairwise, x, pool, max_workers);
    order.push_back(remaining[w]);
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(w));
  }
  return order;
}

}  // namespace rrm
