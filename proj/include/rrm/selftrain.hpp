#pragma once

// SPDX-License-Identifier: Apache-2.0

/**
 * @file selftrain.hpp
 * @brief One self-training iteration over a batch of unlabeled comparisons.
 *
 *   pseudo_label (m judge runs per record)
 *     -> denoise_batch (rules, vote, threshold, top-N)
 *     -> synthesize_rationale for survivors (prover + proof selection)
 *     -> merge into the accumulated set (dedup by id, newest wins)
 *     -> emit training files and append a manifest
 *
 * Retraining happens outside this process. An optional hook command is run
 * with the emitted reward training file as its argument.
 *
 * State directory layout:
 *   state.json           iteration index, run seed, accumulated set path
 *   accumulated.jsonl    merged synthesized records
 *   manifests.jsonl      one IterationManifest per completed iteration
 *   iter_NNNN/           kept.jsonl, accumulated.jsonl (snapshot after the
 *                        iteration), reward_sft.jsonl [, prover_sft.jsonl]
 *
 * The last completed iteration can be rerun from its starting snapshot; with
 * the same seed and inputs it rewrites byte-identical files.
 */

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "rrm/backend.hpp"
#include "rrm/denoise.hpp"
#include "rrm/parallel.hpp"
#include "rrm/proof_selection.hpp"
#include "rrm/rationale.hpp"
#include "rrm/records_io.hpp"
#include "rrm/templates.hpp"

namespace rrm {

namespace fs = std::filesystem;

enum class TrainingFormat { reward_sft, prover_sft };

constexpr std::string_view to_string(TrainingFormat f) {
  return f == TrainingFormat::reward_sft ? "reward_sft" : "prover_sft";
}

/// Writes one {prompt, target} line per record; returns the number written.
/// reward_sft: judge prompt -> tagged rationale and answer.
/// prover_sft: prover prompt with disclosed label -> proof text.
inline std::size_t emit_training_file(const std::vector<PreferenceRecord>& records, const fs::path& path,
                                      TrainingFormat format, const TemplateSet& templates = default_templates()) {
  std::vector<std::string> lines;
  lines.reserve(records.size());
  for (const auto& r : records) {
    if (!r.rationale || !r.label) throw Error(ErrorCode::MissingRationale, r.id);
    json j = {{"schema_version", kSchemaVersion}, {"id", r.id}, {"format", std::string(to_string(format))}};
    if (format == TrainingFormat::reward_sft) {
      j["prompt"] = render_reward_prompt(r.input_text, r.response_a, r.response_b, true, templates).prompt_text;
      j["target"] = serialize_rationale(*r.rationale);
    } else {
      j["prompt"] =
          render_prover_prompt(r.input_text, r.response_a, r.response_b, *r.label, templates).prompt_text;
      j["target"] = r.proof ? *r.proof : rationale_to_proof(*r.rationale);
    }
    lines.push_back(j.dump());
  }
  write_lines_atomic(path, lines);
  return lines.size();
}

struct PseudoLabelConfig {
  std::size_t runs = 1;
  SamplingParams params{0.7, 0.95, 4096, 1, std::nullopt};
  RuleConfig rules;
  std::int64_t seed = 0;
  std::size_t max_workers = 8;
};

/// Runs the judge `cfg.runs` times per record. Every run carries its rule
/// violations; a run with no readable answer has no label. Backend failures
/// mark the whole record with an error instead of aborting the batch.
inline std::vector<PseudoLabeled> pseudo_label(Backend& backend, const std::vector<PreferenceRecord>& batch,
                                               const PseudoLabelConfig& cfg,
                                               const TemplateSet& templates = default_templates()) {
  if (cfg.runs < 1) throw Error(ErrorCode::InvalidArgument, "runs must be >= 1");
  for (const auto& r : batch)
    if (r.label || r.rationale || r.source != Source::unlabeled)
      throw Error(ErrorCode::InvalidRecord, "pseudo_label expects unlabeled records: " + r.id);

  std::vector<PseudoLabeled> out(batch.size());
  parallel_for(batch.size(), cfg.max_workers, [&](std::size_t i) {
    const auto& rec = batch[i];
    auto& slot = out[i];
    slot.record = rec;
    try {
      const auto prompt = render_reward_prompt(rec.input_text, rec.response_a, rec.response_b, true, templates);
      const std::size_t prompt_tokens = backend.count_tokens(prompt.prompt_text);
      for (std::size_t run = 0; run < cfg.runs; ++run) {
        auto params = cfg.params;
        params.n_samples = 1;
        params.seed = derive_seed(cfg.seed, rec.id, run);
        const auto completion = backend.generate(prompt, params).at(0);
        RunOutcome outcome;
        auto scan = scan_rationale(completion.text);
        outcome.violations = validate_rationale_rules(
            completion.text, std::nullopt, prompt_tokens + backend.count_tokens(completion.text), cfg.rules);
        outcome.label = scan.block ? std::optional<Label>(scan.block->answer) : extract_answer(completion.text);
        if (outcome.label) outcome.dist = backend.label_logprobs(prompt, scan.think_prefix);
        slot.runs.push_back(std::move(outcome));
      }
    } catch (const Error& e) {
      slot.runs.clear();
      slot.error = e.what();
    }
  });
  return out;
}

struct SelfTrainConfig {
  DenoiseConfig denoise;
  ProofSelectionConfig proof;
  /// Judge sampling for the voting runs.
  double judge_temperature = 0.7;
  double judge_top_p = 0.95;
  std::size_t judge_max_tokens = 4096;
  std::int64_t seed = 0;
  std::size_t max_workers = 8;
  /// Randomly swap A/B (and flip the label) before proof synthesis.
  bool randomize_order = false;
  bool emit_prover_file = false;
  std::string retrain_hook;
};

/// Digest of every setting that affects outputs, plus the backend identity.
inline std::string config_digest(const SelfTrainConfig& cfg, const Backend& backend,
                                 const TemplateSet& templates = default_templates()) {
  json j = {{"votes", cfg.denoise.vote_runs},
            {"tau", cfg.denoise.confidence_threshold ? json(*cfg.denoise.confidence_threshold) : json(nullptr)},
            {"max_tokens_rule", cfg.denoise.rule_config.max_tokens},
            {"top_n", cfg.denoise.top_n ? json(*cfg.denoise.top_n) : json(nullptr)},
            {"k", cfg.proof.k},
            {"proof_temperature", cfg.proof.temperature},
            {"proof_top_p", cfg.proof.top_p},
            {"proof_max_tokens", cfg.proof.max_tokens},
            {"epsilon", cfg.proof.epsilon},
            {"judge_temperature", cfg.judge_temperature},
            {"judge_top_p", cfg.judge_top_p},
            {"judge_max_tokens", cfg.judge_max_tokens},
            {"seed", cfg.seed},
            {"randomize_order", cfg.randomize_order},
            {"backend", backend.describe()}};
  std::string text = j.dump();
  for (auto k : {TemplateKind::reward_with_reasoning, TemplateKind::prover}) text += templates.get(k);
  return digest(text);
}

struct SelfTrainState {
  std::uint64_t iteration_index = 0;
  fs::path accumulated_records_path;
  std::vector<IterationManifest> manifests;
  std::int64_t rng_seed = 0;
};

inline fs::path state_file(const fs::path& dir) { return dir / "state.json"; }
inline fs::path manifests_file(const fs::path& dir) { return dir / "manifests.jsonl"; }

/// Loads the state in `dir`; a directory without state.json is a fresh run.
inline SelfTrainState load_state(const fs::path& dir, std::int64_t seed_for_fresh = 0) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::StatePathMissing, dir.string());
  SelfTrainState st;
  if (!fs::exists(state_file(dir))) {
    st.accumulated_records_path = dir / "accumulated.jsonl";
    st.rng_seed = seed_for_fresh;
    return st;
  }
  std::ifstream in(state_file(dir));
  json j;
  try {
    in >> j;
    st.iteration_index = j.at("iteration_index").get<std::uint64_t>();
    st.accumulated_records_path = dir / j.at("accumulated_records").get<std::string>();
    st.rng_seed = j.at("rng_seed").get<std::int64_t>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseFailure, state_file(dir).string() + ": " + e.what());
  }
  if (fs::exists(manifests_file(dir)))
    for_each_line(manifests_file(dir), [&](std::size_t, const std::string& line) {
      st.manifests.push_back(manifest_from_json(json::parse(line)));
    });
  if (st.iteration_index != st.manifests.size())
    throw Error(ErrorCode::ParseFailure, "state iteration_index does not match manifest count");
  if (st.iteration_index > 0 && !fs::exists(st.accumulated_records_path))
    throw Error(ErrorCode::StatePathMissing, st.accumulated_records_path.string());
  return st;
}

inline void save_state(const fs::path& dir, const SelfTrainState& st) {
  std::vector<std::string> manifest_lines;
  for (const auto& m : st.manifests) manifest_lines.push_back(to_json(m).dump());
  write_lines_atomic(manifests_file(dir), manifest_lines);
  json j = {{"schema_version", kSchemaVersion},
            {"iteration_index", st.iteration_index},
            {"accumulated_records", st.accumulated_records_path.filename().string()},
            {"rng_seed", st.rng_seed}};
  write_lines_atomic(state_file(dir), {j.dump()});
}

/// Appends `fresh` to `existing`; a fresh record replaces an existing one
/// with the same id in place.
inline std::vector<PreferenceRecord> merge_records(std::vector<PreferenceRecord> existing,
                                                   const std::vector<PreferenceRecord>& fresh) {
  std::map<std::string, std::size_t> at;
  for (std::size_t i = 0; i < existing.size(); ++i) at[existing[i].id] = i;
  for (const auto& r : fresh) {
    if (auto it = at.find(r.id); it != at.end()) {
      existing[it->second] = r;
    } else {
      at[r.id] = existing.size();
      existing.push_back(r);
    }
  }
  return existing;
}

struct IterationResult {
  SelfTrainState state;
  IterationManifest manifest;
  std::vector<fs::path> emitted;
};

inline std::string quote_shell_arg(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'')
      out += "'\\''";
    else
      out.push_back(c);
  }
  out.push_back('\'');
  return out;
}

inline fs::path iteration_dir(const fs::path& state_dir, std::uint64_t iteration) {
  char name[32];
  std::snprintf(name, sizeof name, "iter_%04llu", static_cast<unsigned long long>(iteration));
  return state_dir / name;
}

enum class IterationMode { next, rerun_last };

inline IterationResult run_iteration(Backend& backend, const fs::path& state_dir,
                                     const std::vector<PreferenceRecord>& batch, const SelfTrainConfig& cfg,
                                     const TemplateSet& templates = default_templates(),
                                     IterationMode mode = IterationMode::next) {
  cfg.denoise.validate();
  SelfTrainState st = load_state(state_dir, cfg.seed);
  if (mode == IterationMode::rerun_last) {
    if (st.iteration_index == 0) throw Error(ErrorCode::InvalidArgument, "no completed iteration to rerun");
    --st.iteration_index;
    st.manifests.pop_back();
  }
  const std::uint64_t iteration = st.iteration_index;
  const std::int64_t iter_seed = derive_seed(cfg.seed, "iteration", iteration);

  PseudoLabelConfig pl;
  pl.runs = cfg.denoise.vote_runs;
  pl.params = {cfg.judge_temperature, cfg.judge_top_p, cfg.judge_max_tokens, 1, std::nullopt};
  pl.rules = cfg.denoise.rule_config;
  pl.seed = iter_seed;
  pl.max_workers = cfg.max_workers;
  const auto pseudo = pseudo_label(backend, batch, pl, templates);
  auto denoised = denoise_batch(pseudo, cfg.denoise);

  IterationManifest m;
  m.iteration_index = iteration;
  m.n_input = denoised.counts.n_input;
  m.n_format_rejected = denoised.counts.n_format_rejected;
  m.n_vote_rejected = denoised.counts.n_vote_rejected;
  m.n_confidence_rejected = denoised.counts.n_confidence_rejected;
  m.n_topn_rejected = denoised.counts.n_topn_rejected;
  m.n_backend_errors = denoised.counts.n_backend_errors;
  m.config_digest = config_digest(cfg, backend, templates);
  m.seed = cfg.seed;
  m.retrain_hook = cfg.retrain_hook;

  std::vector<std::optional<PreferenceRecord>> synthesized(denoised.kept.size());
  parallel_for(denoised.kept.size(), cfg.max_workers, [&](std::size_t i) {
    PreferenceRecord rec = denoised.kept[i].record;
    if (cfg.randomize_order && (hash_combine({static_cast<std::uint64_t>(iter_seed), fnv1a64(rec.id)}) & 1U))
      rec = swapped(rec);
    try {
      synthesized[i] = synthesize_rationale(backend, rec, cfg.proof, derive_seed(iter_seed, rec.id, 1u << 20),
                                            templates);
    } catch (const Error& e) {
      spdlog::warn("rationale synthesis failed for {}: {}", rec.id, e.what());
    }
  });
  std::vector<PreferenceRecord> fresh;
  for (auto& s : synthesized) {
    if (s)
      fresh.push_back(std::move(*s));
    else
      ++m.n_synth_failed;
  }
  m.n_format_rejected += m.n_synth_failed;
  m.n_kept = fresh.size();

  std::vector<PreferenceRecord> accumulated;
  if (iteration > 0) {
    const auto base = iteration_dir(state_dir, iteration - 1) / "accumulated.jsonl";
    accumulated = read_records(fs::exists(base) ? base : st.accumulated_records_path);
  }
  accumulated = merge_records(std::move(accumulated), fresh);

  const fs::path iter_dir = iteration_dir(state_dir, iteration);
  std::error_code ec;
  fs::create_directories(iter_dir, ec);
  if (ec) throw Error(ErrorCode::WriteFailure, iter_dir.string() + ": " + ec.message());

  IterationResult result;
  write_records(iter_dir / "kept.jsonl", fresh);
  result.emitted.push_back(iter_dir / "kept.jsonl");
  emit_training_file(accumulated, iter_dir / "reward_sft.jsonl", TrainingFormat::reward_sft, templates);
  result.emitted.push_back(iter_dir / "reward_sft.jsonl");
  if (cfg.emit_prover_file) {
    emit_training_file(accumulated, iter_dir / "prover_sft.jsonl", TrainingFormat::prover_sft, templates);
    result.emitted.push_back(iter_dir / "prover_sft.jsonl");
  }
  write_records(iter_dir / "accumulated.jsonl", accumulated);
  write_records(st.accumulated_records_path, accumulated);

  st.manifests.push_back(m);
  st.iteration_index = iteration + 1;
  save_state(state_dir, st);

  if (!cfg.retrain_hook.empty()) {
    const std::string cmd = cfg.retrain_hook + " " + quote_shell_arg((iter_dir / "reward_sft.jsonl").string());
    if (int rc = std::system(cmd.c_str()); rc != 0) spdlog::warn("retrain hook exited with status {}", rc);
  }

  result.state = std::move(st);
  result.manifest = std::move(m);
  return result;
}

/// Outcome of synthesizing rationales for a labeled dataset.
struct SynthesisBatch {
  std::vector<PreferenceRecord> records;              // successes, input order
  std::vector<std::pair<std::string, std::string>> failures;  // (id, error)
};

inline SynthesisBatch synthesize_batch(Backend& backend, const std::vector<PreferenceRecord>& records,
                                       const ProofSelectionConfig& cfg, std::int64_t seed,
                                       std::size_t max_workers = 8,
                                       const TemplateSet& templates = default_templates()) {
  std::vector<std::optional<PreferenceRecord>> done(records.size());
  std::vector<std::optional<std::string>> errors(records.size());
  parallel_for(records.size(), max_workers, [&](std::size_t i) {
    try {
      done[i] = synthesize_rationale(backend, records[i], cfg, derive_seed(seed, records[i].id, 0), templates);
    } catch (const Error& e) {
      errors[i] = e.what();
    }
  });
  SynthesisBatch out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (done[i])
      out.records.push_back(std::move(*done[i]));
    else
      out.failures.emplace_back(records[i].id, *errors[i]);
  }
  return out;
}

}  // namespace rrm
