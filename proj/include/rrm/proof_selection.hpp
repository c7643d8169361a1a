#pragma once

// SPDX-License-Identifier: Apache-2.0

/**
 * @file proof_selection.hpp
 * @brief Sample k candidate proofs for a labeled comparison and keep the one
 *        most specific to its context.
 *
 * Each candidate z is scored as
 *
 *     score(z) = -log p(z | s, l) / log p(z)
 *
 * where p(z | s, l) is the prover's likelihood given the rendered prompt with
 * the label disclosed, and p(z) its likelihood after a neutral prefix. Both
 * logprobs are negative, so scores lie in (-inf, 0]; a proof that is likely in
 * context but unlikely in isolation scores closer to 0.
 */

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "rrm/backend.hpp"
#include "rrm/parallel.hpp"
#include "rrm/rationale.hpp"
#include "rrm/templates.hpp"
#include "rrm/types.hpp"

namespace rrm {

struct ProofSelectionConfig {
  std::size_t k = 4;
  double temperature = 0.7;
  double top_p = 0.95;
  std::size_t max_tokens = 4096;
  /// Unconditional logprobs above -epsilon make the ratio blow up.
  double epsilon = 1e-6;
  std::size_t max_workers = 8;

  SamplingParams sampling(std::optional<std::int64_t> seed) const {
    return {temperature, top_p, max_tokens, k, seed};
  }
};

inline double proof_score(double conditional_logprob, double unconditional_logprob, double epsilon = 1e-6) {
  if (!(unconditional_logprob <= -epsilon))
    throw Error(ErrorCode::DegenerateUnconditional,
                "unconditional logprob " + std::to_string(unconditional_logprob));
  return -(conditional_logprob / unconditional_logprob);
}

/// Draws k proofs from the prover for (rec, rec.label). Scores are left unset.
inline std::vector<ProofCandidate> sample_proofs(Backend& backend, const PreferenceRecord& rec, std::size_t k,
                                                 SamplingParams params,
                                                 const TemplateSet& templates = default_templates()) {
  if (!rec.label) throw Error(ErrorCode::MissingLabel, rec.id);
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
  params.n_samples = k;
  const auto prompt = render_prover_prompt(rec.input_text, rec.response_a, rec.response_b, *rec.label, templates);
  std::vector<ProofCandidate> out;
  for (auto& c : backend.generate(prompt, params)) out.push_back(ProofCandidate{std::move(c.text)});
  return out;
}

inline ProofCandidate score_proof(Backend& backend, const PreferenceRecord& rec, const std::string& candidate_text,
                                  double epsilon = 1e-6, const TemplateSet& templates = default_templates()) {
  if (!rec.label) throw Error(ErrorCode::MissingLabel, rec.id);
  if (candidate_text.empty()) throw Error(ErrorCode::EmptyContinuation, "empty proof");
  const auto prompt = render_prover_prompt(rec.input_text, rec.response_a, rec.response_b, *rec.label, templates);
  ProofCandidate c{candidate_text};
  c.conditional_logprob = backend.score_sequence(prompt.prompt_text, candidate_text);
  c.unconditional_logprob = backend.score_sequence(backend.neutral_prefix(), candidate_text);
  c.score = proof_score(c.conditional_logprob, c.unconditional_logprob, epsilon);
  c.scored = true;
  return c;
}

struct ProofSelection {
  ProofCandidate winner;
  std::size_t index = 0;
};

/// Argmax by score; ties go to the lowest index.
inline ProofSelection select_best_proof(std::span<const ProofCandidate> candidates) {
  if (candidates.empty()) throw Error(ErrorCode::EmptyCandidates);
  std::size_t best = 0;
  for (std::size_t i = 1; i < candidates.size(); ++i)
    if (candidates[i].score > candidates[best].score) best = i;
  return {candidates[best], best};
}

/// Everything synthesize_rationale decided, for auditing.
struct SynthesisTrace {
  PreferenceRecord record;
  std::vector<ProofCandidate> candidates;
  std::vector<bool> parseable;
  std::vector<bool> degenerate;
  std::size_t winner_index = 0;
  bool scoring_degraded = false;
};

/// sample -> drop unparseable -> score -> argmax -> reform into a rationale.
/// The rationale's answer is always rec.label: the proof is reformed with the
/// conditioning label, never re-predicted.
inline SynthesisTrace synthesize_rationale_traced(Backend& backend, const PreferenceRecord& rec,
                                                  const ProofSelectionConfig& cfg,
                                                  std::optional<std::int64_t> seed = std::nullopt,
                                                  const TemplateSet& templates = default_templates()) {
  if (!rec.label) throw Error(ErrorCode::MissingLabel, rec.id);
  const Label label = *rec.label;

  SynthesisTrace trace;
  trace.candidates = sample_proofs(backend, rec, cfg.k, cfg.sampling(seed), templates);
  const std::size_t n = trace.candidates.size();
  trace.parseable.assign(n, false);
  trace.degenerate.assign(n, false);

  std::vector<std::optional<RationaleBlock>> reformed(n);
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < n; ++i) {
    try {
      reformed[i] = proof_to_rationale(trace.candidates[i].text, label);
      trace.parseable[i] = true;
      usable.push_back(i);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::UnparseableProof) throw;
    }
  }
  if (usable.empty()) throw Error(ErrorCode::AllCandidatesUnparseable, rec.id);

  std::optional<std::size_t> chosen;
  try {
    std::vector<std::optional<ProofCandidate>> scored(usable.size());
    parallel_for(usable.size(), cfg.max_workers, [&](std::size_t j) {
      try {
        scored[j] = score_proof(backend, rec, trace.candidates[usable[j]].text, cfg.epsilon, templates);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::DegenerateUnconditional) throw;
      }
    });
    std::vector<ProofCandidate> survivors;
    std::vector<std::size_t> survivor_index;
    for (std::size_t j = 0; j < usable.size(); ++j) {
      if (scored[j]) {
        trace.candidates[usable[j]] = *scored[j];
        survivors.push_back(*scored[j]);
        survivor_index.push_back(usable[j]);
      } else {
        trace.degenerate[usable[j]] = true;
      }
    }
    if (survivors.empty()) throw Error(ErrorCode::AllCandidatesUnparseable, rec.id + ": all candidates degenerate");
    chosen = survivor_index[select_best_proof(survivors).index];
  } catch (const Error& e) {
    if (e.code() != ErrorCode::ScoringUnsupported) throw;
    spdlog::warn("backend cannot score sequences; using first parseable proof for {}", rec.id);
    trace.scoring_degraded = true;
    chosen = usable.front();
  }

  trace.winner_index = *chosen;
  trace.record = rec;
  trace.record.rationale = *reformed[*chosen];
  trace.record.proof = trace.candidates[*chosen].text;
  if (trace.record.source == Source::labeled_rationale_free || trace.record.source == Source::labeled_with_rationale)
    trace.record.source = Source::labeled_with_rationale;
  return trace;
}

inline PreferenceRecord synthesize_rationale(Backend& backend, const PreferenceRecord& rec,
                                             const ProofSelectionConfig& cfg,
                                             std::optional<std::int64_t> seed = std::nullopt,
                                             const TemplateSet& templates = default_templates()) {
  return synthesize_rationale_traced(backend, rec, cfg, seed, templates).record;
}

}  // namespace rrm
