#pragma once

// SPDX-License-Identifier: Apache-2.0

/**
 * @file types.hpp
 * @brief Domain data model shared by every pipeline stage.
 *
 * A PreferenceRecord is one pairwise comparison (input, two responses) with
 * an optional label, an optional structured rationale, and an optional proof.
 * Labeled rationale-free, rationale-annotated, unlabeled and pseudo-labeled
 * datasets are all collections of records tagged by Source.
 */

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "rrm/errors.hpp"
#include "rrm/hash.hpp"
#include "rrm/text.hpp"

namespace rrm {

enum class Label { A, B };

constexpr char to_char(Label l) { return l == Label::A ? 'A' : 'B'; }
inline std::string to_string(Label l) { return std::string(1, to_char(l)); }
constexpr Label other(Label l) { return l == Label::A ? Label::B : Label::A; }

/// Accepts exactly "A" or "B" (surrounding whitespace ignored).
inline std::optional<Label> parse_label(std::string_view s) {
  s = text::trim(s);
  if (s == "A") return Label::A;
  if (s == "B") return Label::B;
  return std::nullopt;
}

enum class Source { labeled_rationale_free, labeled_with_rationale, unlabeled, pseudo_labeled };

constexpr std::string_view to_string(Source s) {
  switch (s) {
    case Source::labeled_rationale_free: return "labeled_rationale_free";
    case Source::labeled_with_rationale: return "labeled_with_rationale";
    case Source::unlabeled: return "unlabeled";
    case Source::pseudo_labeled: return "pseudo_labeled";
  }
  return "unlabeled";
}

inline std::optional<Source> parse_source(std::string_view s) {
  for (auto v : {Source::labeled_rationale_free, Source::labeled_with_rationale, Source::unlabeled,
                 Source::pseudo_labeled})
    if (to_string(v) == s) return v;
  return std::nullopt;
}

/// Structured reward reasoning: the three <think> sections plus the answer label.
struct RationaleBlock {
  std::string feedback;
  std::string comparison;
  std::string conclusion;
  Label answer = Label::A;

  bool operator==(const RationaleBlock&) const = default;
};

struct PreferenceRecord {
  std::string id;
  std::string input_text;
  std::string response_a;
  std::string response_b;
  std::optional<Label> label;
  std::optional<RationaleBlock> rationale;
  std::optional<std::string> proof;
  Source source = Source::unlabeled;
  /// Free-form grouping key (benchmark subset); used for per-tag accuracy.
  std::optional<std::string> tag;

  bool operator==(const PreferenceRecord&) const = default;
};

/// Stable content id of a comparison, used when the caller supplies none.
inline std::string content_id(std::string_view input, std::string_view a, std::string_view b) {
  return to_hex(hash_fields({input, a, b}));
}

/// A sampled proof with its likelihoods under the prover.
/// score = -(conditional / unconditional); both logprobs are negative in practice.
struct ProofCandidate {
  std::string text;
  double conditional_logprob = 0.0;
  double unconditional_logprob = 0.0;
  double score = -std::numeric_limits<double>::infinity();
  bool scored = false;
};

/// Normalized probabilities of the two label tokens.
struct LabelDistribution {
  double prob_a = 0.5;
  double prob_b = 0.5;

  double prob(Label l) const { return l == Label::A ? prob_a : prob_b; }

  /// Softmax restricted to {A, B}. Invariant to adding a constant to both.
  /// -inf is allowed for at most one side.
  static LabelDistribution from_logprobs(double logprob_a, double logprob_b) {
    if (std::isnan(logprob_a) || std::isnan(logprob_b) ||
        (std::isinf(logprob_a) && std::isinf(logprob_b) && logprob_a < 0 && logprob_b < 0))
      throw Error(ErrorCode::LabelTokensUnavailable, "no finite label logprob");
    const double m = std::max(logprob_a, logprob_b);
    const double ea = std::exp(logprob_a - m);
    const double eb = std::exp(logprob_b - m);
    const double pa = ea / (ea + eb);
    return {pa, 1.0 - pa};
  }
};

/// Fully rendered prompt s = [c, x, y_a, y_b].
struct PromptContext {
  std::string prompt_text;
  /// Lint findings (e.g. a response contains a template marker); never fatal.
  std::vector<std::string> warnings;
};

/// Audit record of one self-training iteration.
struct IterationManifest {
  std::uint64_t iteration_index = 0;
  std::uint64_t n_input = 0;
  std::uint64_t n_format_rejected = 0;
  std::uint64_t n_vote_rejected = 0;
  std::uint64_t n_confidence_rejected = 0;
  std::uint64_t n_kept = 0;
  std::string config_digest;
  std::int64_t seed = 0;
  /// Extension counters that are folded into the main buckets above.
  std::uint64_t n_topn_rejected = 0;     // part of n_confidence_rejected
  std::uint64_t n_synth_failed = 0;      // part of n_format_rejected
  std::uint64_t n_backend_errors = 0;    // part of n_format_rejected
  std::string retrain_hook;

  bool conserved() const {
    return n_input == n_format_rejected + n_vote_rejected + n_confidence_rejected + n_kept;
  }

  bool operator==(const IterationManifest&) const = default;
};

enum class Violation {
  EmptyId,
  EmptyInput,
  EmptyResponse,
  UnlabeledHasLabel,
  UnlabeledHasRationale,
  MissingLabel,
  MissingRationale,
  AnswerLabelMismatch,
  EmptyRationaleSection,
  DuplicateId,
};

constexpr std::string_view to_string(Violation v) {
  switch (v) {
    case Violation::EmptyId: return "EmptyId";
    case Violation::EmptyInput: return "EmptyInput";
    case Violation::EmptyResponse: return "EmptyResponse";
    case Violation::UnlabeledHasLabel: return "UnlabeledHasLabel";
    case Violation::UnlabeledHasRationale: return "UnlabeledHasRationale";
    case Violation::MissingLabel: return "MissingLabel";
    case Violation::MissingRationale: return "MissingRationale";
    case Violation::AnswerLabelMismatch: return "AnswerLabelMismatch";
    case Violation::EmptyRationaleSection: return "EmptyRationaleSection";
    case Violation::DuplicateId: return "DuplicateId";
  }
  return "Unknown";
}

using ValidationReport = std::vector<Violation>;

/// Every violated record invariant, in a fixed order. Never throws.
inline ValidationReport validate_record(const PreferenceRecord& rec) {
  ValidationReport out;
  if (rec.id.empty()) out.push_back(Violation::EmptyId);
  if (text::is_blank(rec.input_text)) out.push_back(Violation::EmptyInput);
  if (text::is_blank(rec.response_a) || text::is_blank(rec.response_b))
    out.push_back(Violation::EmptyResponse);

  switch (rec.source) {
    case Source::unlabeled:
      if (rec.label) out.push_back(Violation::UnlabeledHasLabel);
      if (rec.rationale) out.push_back(Violation::UnlabeledHasRationale);
      break;
    case Source::labeled_with_rationale:
      if (!rec.label) out.push_back(Violation::MissingLabel);
      if (!rec.rationale) out.push_back(Violation::MissingRationale);
      break;
    case Source::labeled_rationale_free:
    case Source::pseudo_labeled:
      if (!rec.label) out.push_back(Violation::MissingLabel);
      break;
  }
  if (rec.rationale) {
    if (rec.label && rec.rationale->answer != *rec.label)
      out.push_back(Violation::AnswerLabelMismatch);
    const auto& r = *rec.rationale;
    if (text::is_blank(r.feedback) || text::is_blank(r.comparison) || text::is_blank(r.conclusion))
      out.push_back(Violation::EmptyRationaleSection);
  }
  return out;
}

/// Dataset-level check: per-record reports plus id uniqueness.
/// Returns (index, violation) pairs.
inline std::vector<std::pair<std::size_t, Violation>> validate_dataset(
    const std::vector<PreferenceRecord>& records) {
  std::vector<std::pair<std::size_t, Violation>> out;
  std::set<std::string_view> seen;
  for (std::size_t i = 0; i < records.size(); ++i) {
    for (auto v : validate_record(records[i])) out.emplace_back(i, v);
    if (!seen.insert(records[i].id).second) out.emplace_back(i, Violation::DuplicateId);
  }
  return out;
}

/// Same comparison with responses swapped; label and rationale answer flip.
/// Rationale texts still name the original positions, so rationale/proof are dropped.
inline PreferenceRecord swapped(const PreferenceRecord& rec) {
  PreferenceRecord out = rec;
  std::swap(out.response_a, out.response_b);
  if (out.label) out.label = other(*out.label);
  out.rationale.reset();
  out.proof.reset();
  if (out.source == Source::labeled_with_rationale) out.source = Source::labeled_rationale_free;
  return out;
}

}  // namespace rrm
