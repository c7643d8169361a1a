#pragma once

// SPDX-License-Identifier: Apache-2.0

/**
 * @file denoise.hpp
 * @brief Filters for pseudo-labeled data: rule checks on the model's
 *        rationales, majority vote over repeated runs, a confidence
 *        threshold, and optional top-N confidence selection.
 *
 * Stage order in denoise_batch: rule filter -> vote -> threshold -> top-N.
 * Every input lands in exactly one bucket, so
 *   n_input == format + vote + confidence (incl. top-N) + kept.
 */

#include <algorithm>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rrm/errors.hpp"
#include "rrm/rationale.hpp"
#include "rrm/types.hpp"

namespace rrm {

struct DenoiseConfig {
  std::size_t vote_runs = 1;
  /// Required; there is no sensible default threshold.
  std::optional<double> confidence_threshold;
  RuleConfig rule_config;
  std::optional<std::size_t> top_n;

  double tau() const {
    validate();
    return *confidence_threshold;
  }

  void validate() const {
    if (vote_runs < 1) throw Error(ErrorCode::InvalidArgument, "vote_runs must be >= 1");
    if (!confidence_threshold) throw Error(ErrorCode::InvalidArgument, "confidence threshold is required");
    if (!(*confidence_threshold >= 0.0 && *confidence_threshold <= 1.0))
      throw Error(ErrorCode::InvalidArgument, "confidence threshold must be in [0, 1]");
  }
};

/// Strict-majority label; nullopt (abstain) on an exact tie.
inline std::optional<Label> majority_vote(std::span<const Label> labels) {
  if (labels.empty()) throw Error(ErrorCode::EmptyList, "majority_vote");
  const auto a = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), Label::A));
  const auto b = labels.size() - a;
  if (a == b) return std::nullopt;
  return a > b ? Label::A : Label::B;
}

/// Mean probability of `winner` across runs.
inline double aggregate_confidence(std::span<const LabelDistribution> dists, Label winner) {
  if (dists.empty()) throw Error(ErrorCode::EmptyList, "aggregate_confidence");
  double sum = 0.0;
  for (const auto& d : dists) sum += d.prob(winner);
  return std::clamp(sum / static_cast<double>(dists.size()), 0.0, 1.0);
}

inline bool confidence_filter(double confidence, double tau) { return confidence >= tau; }

struct ScoredRecord {
  PreferenceRecord record;
  Label label = Label::A;
  double confidence = 0.0;
};

/// The n most confident records, highest first; ties broken by id.
inline std::vector<ScoredRecord> select_top_confident(std::vector<ScoredRecord> records, std::size_t n) {
  std::stable_sort(records.begin(), records.end(), [](const ScoredRecord& x, const ScoredRecord& y) {
    if (x.confidence != y.confidence) return x.confidence > y.confidence;
    return x.record.id < y.record.id;
  });
  if (records.size() > n) records.resize(n);
  return records;
}

/// One judge run on an unlabeled record.
struct RunOutcome {
  std::optional<Label> label;  // absent when the output was malformed
  std::optional<LabelDistribution> dist;
  std::vector<RuleViolation> violations;
};

struct PseudoLabeled {
  PreferenceRecord record;
  std::vector<RunOutcome> runs;
  /// Set when the backend failed for this record.
  std::optional<std::string> error;
};

struct DenoiseCounts {
  std::size_t n_input = 0;
  std::size_t n_format_rejected = 0;
  std::size_t n_vote_rejected = 0;
  std::size_t n_confidence_rejected = 0;  // includes n_topn_rejected
  std::size_t n_kept = 0;
  std::size_t n_topn_rejected = 0;
  std::size_t n_backend_errors = 0;  // included in n_format_rejected

  bool conserved() const {
    return n_input == n_format_rejected + n_vote_rejected + n_confidence_rejected + n_kept;
  }
  bool operator==(const DenoiseCounts&) const = default;
};

struct DenoiseResult {
  std::vector<ScoredRecord> kept;
  DenoiseCounts counts;
};

inline bool passes_rule_filter(const PseudoLabeled& p) {
  if (p.error || p.runs.empty()) return false;
  return std::all_of(p.runs.begin(), p.runs.end(),
                     [](const RunOutcome& r) { return r.label && r.dist && r.violations.empty(); });
}

inline DenoiseResult denoise_batch(std::span<const PseudoLabeled> batch, const DenoiseConfig& cfg) {
  const double tau = cfg.tau();
  DenoiseResult out;
  out.counts.n_input = batch.size();

  std::vector<ScoredRecord> survivors;
  for (const auto& p : batch) {
    if (!passes_rule_filter(p)) {
      ++out.counts.n_format_rejected;
      if (p.error) ++out.counts.n_backend_errors;
      continue;
    }
    std::vector<Label> labels;
    std::vector<LabelDistribution> dists;
    for (const auto& r : p.runs) {
      labels.push_back(*r.label);
      dists.push_back(*r.dist);
    }
    auto winner = majority_vote(labels);
    if (!winner) {
      ++out.counts.n_vote_rejected;
      continue;
    }
    const double conf = aggregate_confidence(dists, *winner);
    if (!confidence_filter(conf, tau)) {
      ++out.counts.n_confidence_rejected;
      continue;
    }
    ScoredRecord s{p.record, *winner, conf};
    s.record.label = *winner;
    s.record.source = Source::pseudo_labeled;
    survivors.push_back(std::move(s));
  }

  if (cfg.top_n) {
    const std::size_t before = survivors.size();
    survivors = select_top_confident(std::move(survivors), *cfg.top_n);
    out.counts.n_topn_rejected = before - survivors.size();
    out.counts.n_confidence_rejected += out.counts.n_topn_rejected;
  }
  out.counts.n_kept = survivors.size();
  out.kept = std::move(survivors);
  return out;
}

}  // namespace rrm
