// SPDX-License-Identifier: Apache-2.0
//
// rrm: command-line front end, one subcommand per pipeline stage.
//
// Exit codes:
//   0  success
//   1  unexpected internal error
//   2  bad arguments (including empty candidate lists and empty datasets)
//   3  file or record IO failure
//   4  backend failure
//   5  completed, but some records failed (count on stderr)
//
// stdout carries data; logs go to stderr.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "rrm/http_backend.hpp"
#include "rrm/rrm.hpp"

namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kInternal = 1, kUsage = 2, kIo = 3, kBackend = 4, kPartial = 5 };

int exit_code_for(rrm::ErrorCode c) {
  using rrm::ErrorCode;
  switch (c) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::EmptyField:
    case ErrorCode::EmptyCandidates:
    case ErrorCode::EmptyDataset:
    case ErrorCode::EmptyList:
      return kUsage;
    case ErrorCode::ReadFailure:
    case ErrorCode::WriteFailure:
    case ErrorCode::ParseFailure:
    case ErrorCode::StatePathMissing:
    case ErrorCode::InvalidRecord:
    case ErrorCode::MissingLabel:
    case ErrorCode::MissingRationale:
      return kIo;
    default:
      return kBackend;
  }
}

struct Globals {
  std::string backend = "mock";
  std::optional<std::string> config_path;
  std::optional<std::size_t> max_concurrency;
  std::vector<std::string> template_overrides;
  std::string log_level = "warn";
};

struct Context {
  rrm::Config config;
  rrm::TemplateSet templates;
  std::unique_ptr<rrm::Backend> backend;
  std::size_t max_workers = 8;
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw rrm::Error(rrm::ErrorCode::ReadFailure, p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

template <typename T>
T pick(const std::optional<T>& flag, const rrm::Config& cfg, const std::string& key, T fallback) {
  if (flag) return *flag;
  return cfg.number_or<T>(key, fallback);
}

Context make_context(const Globals& g) {
  Context ctx;
  if (g.config_path) ctx.config = rrm::Config::load(*g.config_path);
  if (g.max_concurrency) ctx.config.set("backend.max_concurrency", std::to_string(*g.max_concurrency));
  ctx.max_workers = ctx.config.number_or<std::size_t>("backend.max_concurrency", 8);
  if (ctx.max_workers == 0) throw rrm::Error(rrm::ErrorCode::InvalidArgument, "max concurrency must be >= 1");

  for (const auto& spec : g.template_overrides) {
    const auto eq = spec.find('=');
    auto kind = eq == std::string::npos ? std::nullopt : rrm::parse_template_kind(spec.substr(0, eq));
    if (!kind) throw rrm::Error(rrm::ErrorCode::InvalidArgument, "--template-override expects kind=path: " + spec);
    ctx.templates.load_override(*kind, spec.substr(eq + 1));
  }

  if (g.backend == "mock") {
    ctx.backend = std::make_unique<rrm::MockBackend>();
  } else if (g.backend.rfind("mock:", 0) == 0) {
    const auto path = g.backend.substr(5);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_file(path));
      ctx.backend = std::make_unique<rrm::MockBackend>(rrm::MockSpec::from_json(j));
    } catch (const nlohmann::json::exception& e) {
      throw rrm::Error(rrm::ErrorCode::ParseFailure, path + ": " + e.what());
    }
  } else if (g.backend == "http") {
    rrm::HttpBackendConfig h;
    h.url = ctx.config.get_or("backend.url", h.url);
    h.model = ctx.config.get_or("backend.model", h.model);
    h.api_key_env = ctx.config.get_or("backend.api_key_env", h.api_key_env);
    h.max_concurrency = ctx.max_workers;
    h.timeout_ms = ctx.config.number_or<long>("backend.timeout_ms", h.timeout_ms);
    h.rate_per_second = ctx.config.number_or<double>("backend.rate_per_second", 0.0);
    h.neutral_prefix = ctx.config.get_or("backend.neutral_prefix", "");
    ctx.backend = std::make_unique<rrm::HttpBackend>(h);
  } else {
    throw rrm::Error(rrm::ErrorCode::InvalidArgument, "--backend must be mock, mock:<file> or http");
  }
  spdlog::info("config digest {}", ctx.config.digest_hex());
  return ctx;
}

void print_json(const nlohmann::json& j) { std::cout << j.dump() << '\n'; }

// ---- synth-rationales -------------------------------------------------------

struct SynthArgs {
  std::string in, out;
  std::optional<std::size_t> k, max_tokens;
  std::optional<double> temperature, top_p;
  std::optional<std::int64_t> seed;
};

int run_synth(const Globals& g, const SynthArgs& a) {
  auto ctx = make_context(g);
  if (!fs::exists(a.in)) throw rrm::Error(rrm::ErrorCode::ReadFailure, a.in);
  const auto records = rrm::read_records(a.in);
  for (const auto& r : records)
    if (!r.label) throw rrm::Error(rrm::ErrorCode::MissingLabel, r.id);

  rrm::ProofSelectionConfig cfg;
  cfg.k = pick(a.k, ctx.config, "proof.k", cfg.k);
  cfg.temperature = pick(a.temperature, ctx.config, "proof.temperature", cfg.temperature);
  cfg.top_p = pick(a.top_p, ctx.config, "proof.top_p", cfg.top_p);
  cfg.max_tokens = pick(a.max_tokens, ctx.config, "proof.max_tokens", cfg.max_tokens);
  cfg.max_workers = ctx.max_workers;
  const auto seed = pick(a.seed, ctx.config, "seed", std::int64_t{0});

  auto batch = rrm::synthesize_batch(*ctx.backend, records, cfg, seed, ctx.max_workers, ctx.templates);
  rrm::write_records(a.out, batch.records);
  for (const auto& [id, err] : batch.failures) spdlog::error("{}: {}", id, err);
  print_json({{"n_input", records.size()}, {"n_written", batch.records.size()}, {"n_failed", batch.failures.size()}});
  if (batch.failures.empty()) return kOk;
  std::cerr << batch.failures.size() << " record(s) failed\n";
  return batch.records.empty() ? kBackend : kPartial;
}

// ---- self-train -------------------------------------------------------------

struct SelfTrainArgs {
  std::string state_dir, batch;
  std::optional<double> tau;
  std::optional<std::size_t> votes, top_n, k, max_tokens_rule;
  std::optional<std::int64_t> seed;
  std::optional<std::string> retrain_hook;
  bool randomize_order = false;
  bool emit_prover = false;
  bool rerun_last = false;
};

int run_selftrain(const Globals& g, const SelfTrainArgs& a, const std::string& usage) {
  auto ctx = make_context(g);
  rrm::SelfTrainConfig cfg;
  if (a.tau)
    cfg.denoise.confidence_threshold = a.tau;
  else if (ctx.config.has("selftrain.tau"))
    cfg.denoise.confidence_threshold = ctx.config.number_or<double>("selftrain.tau", 0.0);
  if (!cfg.denoise.confidence_threshold) {
    std::cerr << "--tau is required (no default confidence threshold)\n" << usage;
    return kUsage;
  }
  cfg.denoise.vote_runs = pick(a.votes, ctx.config, "selftrain.votes", cfg.denoise.vote_runs);
  cfg.denoise.rule_config.max_tokens =
      pick(a.max_tokens_rule, ctx.config, "selftrain.max_tokens", cfg.denoise.rule_config.max_tokens);
  if (a.top_n)
    cfg.denoise.top_n = a.top_n;
  else if (ctx.config.has("selftrain.top_n"))
    cfg.denoise.top_n = ctx.config.number_or<std::size_t>("selftrain.top_n", 0);
  cfg.proof.k = pick(a.k, ctx.config, "proof.k", cfg.proof.k);
  cfg.proof.temperature = ctx.config.number_or<double>("proof.temperature", cfg.proof.temperature);
  cfg.proof.top_p = ctx.config.number_or<double>("proof.top_p", cfg.proof.top_p);
  cfg.proof.max_workers = ctx.max_workers;
  cfg.judge_temperature = ctx.config.number_or<double>("judge.temperature", cfg.judge_temperature);
  cfg.judge_top_p = ctx.config.number_or<double>("judge.top_p", cfg.judge_top_p);
  cfg.seed = pick(a.seed, ctx.config, "seed", std::int64_t{0});
  cfg.max_workers = ctx.max_workers;
  cfg.randomize_order = a.randomize_order || ctx.config.bool_or("selftrain.randomize_order", false);
  cfg.emit_prover_file = a.emit_prover || ctx.config.bool_or("selftrain.emit_prover", false);
  cfg.retrain_hook = a.retrain_hook ? *a.retrain_hook : ctx.config.get_or("selftrain.retrain_hook", "");
  cfg.denoise.validate();

  std::error_code ec;
  fs::create_directories(a.state_dir, ec);
  if (ec) throw rrm::Error(rrm::ErrorCode::WriteFailure, a.state_dir + ": " + ec.message());
  const auto batch = rrm::read_records(a.batch);
  const auto result = rrm::run_iteration(*ctx.backend, a.state_dir, batch, cfg, ctx.templates,
                                           a.rerun_last ? rrm::IterationMode::rerun_last : rrm::IterationMode::next);
  const auto& m = result.manifest;
  print_json(rrm::to_json(m));
  std::fprintf(stderr, "iteration %llu: input %llu, format %llu, vote %llu, confidence %llu, kept %llu\n",
               static_cast<unsigned long long>(m.iteration_index), static_cast<unsigned long long>(m.n_input),
               static_cast<unsigned long long>(m.n_format_rejected),
               static_cast<unsigned long long>(m.n_vote_rejected),
               static_cast<unsigned long long>(m.n_confidence_rejected), static_cast<unsigned long long>(m.n_kept));
  return kOk;
}

// ---- rank -------------------------------------------------------------------

struct RankArgs {
  std::optional<std::string> input, input_file;
  std::string candidates;
  std::string mode = "linear";
  std::size_t vote_k = 1;
  std::optional<std::int64_t> seed;
  bool no_reasoning = false;
};

std::vector<std::string> read_candidates(const fs::path& p) {
  std::vector<std::string> out;
  rrm::for_each_line(p, [&](std::size_t n, const std::string& line) {
    try {
      auto j = nlohmann::json::parse(line);
      if (j.is_string())
        out.push_back(j.get<std::string>());
      else
        out.push_back(j.at("response").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw rrm::Error(rrm::ErrorCode::ParseFailure, p.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  });
  return out;
}

int run_rank(const Globals& g, const RankArgs& a) {
  auto ctx = make_context(g);
  std::string x;
  if (a.input) {
    x = *a.input;
  } else {
    x = read_file(*a.input_file);
    while (!x.empty() && (x.back() == '\n' || x.back() == '\r')) x.pop_back();
  }
  const auto candidates = read_candidates(a.candidates);
  if (candidates.empty()) {
    std::cerr << "no candidates\n";
    return kUsage;
  }
  rrm::JudgeConfig jc;
  jc.with_reasoning = !a.no_reasoning;
  jc.max_workers = ctx.max_workers;
  rrm::Judge judge(*ctx.backend, jc, ctx.templates);
  const auto pairwise = rrm::make_pairwise(judge, a.vote_k, pick(a.seed, ctx.config, "seed", std::int64_t{0}));
  if (a.mode == "full") {
    for (auto i : rrm::full_ranking(pairwise, x, candidates)) std::cout << i << '\n';
  } else if (a.mode == "dnc") {
    std::cout << rrm::best_of_n_dnc(pairwise, x, candidates, ctx.max_workers) << '\n';
  } else {
    std::cout << rrm::best_of_n_linear(pairwise, x, candidates) << '\n';
  }
  return kOk;
}

// ---- eval -------------------------------------------------------------------

struct EvalArgs {
  std::string dataset;
  std::size_t vote_k = 1;
  std::optional<std::int64_t> seed;
  std::optional<std::string> report;
  bool no_reasoning = false;
};

int run_eval(const Globals& g, const EvalArgs& a) {
  auto ctx = make_context(g);
  const auto seed = pick(a.seed, ctx.config, "seed", std::int64_t{0});
  const auto data = rrm::read_eval_dataset(a.dataset, seed);
  rrm::JudgeConfig jc;
  jc.with_reasoning = !a.no_reasoning;
  jc.max_workers = ctx.max_workers;
  rrm::Judge judge(*ctx.backend, jc, ctx.templates);
  const auto rep = rrm::pairwise_accuracy(data, rrm::judge_evaluator(judge, a.vote_k, seed), ctx.max_workers);
  const auto lines = rrm::report_lines(rep);
  if (a.report) rrm::write_lines_atomic(*a.report, lines);
  std::cout << lines.back() << '\n';
  rrm::print_summary(std::cout, rep);
  return kOk;
}

// ---- reward -----------------------------------------------------------------

struct RewardArgs {
  std::string input, response, reference;
  std::optional<double> gamma;
  std::optional<std::string> history;
  std::optional<std::size_t> window;
  std::optional<std::int64_t> seed;
  bool no_reasoning = false;
};

int run_reward(const Globals& g, const RewardArgs& a) {
  auto ctx = make_context(g);
  rrm::RewardConfig rc;
  rc.with_reasoning = !a.no_reasoning;
  rc.params.seed = pick(a.seed, ctx.config, "seed", std::int64_t{0});
  const double raw = rrm::reference_reward(*ctx.backend, a.input, a.response, a.reference, rc, ctx.templates);
  const double gamma = pick(a.gamma, ctx.config, "reward.gamma", 10.0);
  nlohmann::json out = {{"raw", raw}, {"scaled", rrm::scaled_reward(raw, gamma)}};
  if (a.history) {
    rrm::RunningNormalizer nz(pick(a.window, ctx.config, "reward.window", std::size_t{1000}));
    rrm::for_each_line(*a.history, [&](std::size_t n, const std::string& line) {
      try {
        nz.push(std::stod(line));
      } catch (const std::exception&) {
        throw rrm::Error(rrm::ErrorCode::ParseFailure, *a.history + ":" + std::to_string(n) + ": not a number");
      }
    });
    out["normalized"] = nz.push_and_standardize(raw);
  }
  print_json(out);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  auto logger = spdlog::stderr_color_mt("rrm");
  spdlog::set_default_logger(logger);

  CLI::App app{"Generative reward-model pipeline: rationale synthesis, self-training, ranking, evaluation, reward"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--backend", g.backend, "mock | mock:<spec.json> | http")->capture_default_str();
  app.add_option("--config", g.config_path, "key = value configuration file");
  app.add_option("--max-concurrency", g.max_concurrency, "cap on concurrent backend calls");
  app.add_option("--template-override", g.template_overrides, "kind=path (reward_with_reasoning, reward_plain, "
                                                              "prover, merge_feedback)");
  app.add_option("--log-level", g.log_level, "trace|debug|info|warn|error|off")->capture_default_str();

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth-rationales", "add selected-proof rationales to labeled records");
  synth->add_option("in-file", sa.in)->required();
  synth->add_option("out-file", sa.out)->required();
  synth->add_option("--k", sa.k, "candidate proofs per record (default 4)");
  synth->add_option("--temperature", sa.temperature, "default 0.7");
  synth->add_option("--top-p", sa.top_p, "default 0.95");
  synth->add_option("--max-tokens", sa.max_tokens, "default 4096");
  synth->add_option("--seed", sa.seed);

  SelfTrainArgs ta;
  auto* st = app.add_subcommand("self-train", "run one self-training iteration on an unlabeled batch");
  st->add_option("state-dir", ta.state_dir)->required();
  st->add_option("batch-file", ta.batch)->required();
  st->add_option("--tau", ta.tau, "confidence threshold in [0, 1] (required)");
  st->add_option("--votes", ta.votes, "judge runs per record (default 1)");
  st->add_option("--top-n", ta.top_n, "keep only the N most confident survivors");
  st->add_option("--k", ta.k, "candidate proofs per record (default 4)");
  st->add_option("--max-tokens", ta.max_tokens_rule, "rule filter token limit (default 4096)");
  st->add_option("--seed", ta.seed);
  st->add_option("--retrain-hook", ta.retrain_hook, "command run with the emitted training file");
  st->add_flag("--randomize-order", ta.randomize_order, "swap A/B at random before proof synthesis");
  st->add_flag("--emit-prover", ta.emit_prover, "also emit prover_sft.jsonl");
  st->add_flag("--rerun-last", ta.rerun_last, "redo the last completed iteration instead of starting a new one");

  RankArgs ra;
  auto* rank = app.add_subcommand("rank", "best-of-n selection or full ranking of candidate responses");
  auto* in_opt = rank->add_option("--input", ra.input, "input text");
  auto* in_file_opt = rank->add_option("--input-file", ra.input_file, "file holding the input text");
  in_opt->excludes(in_file_opt);
  rank->add_option("candidates-file", ra.candidates, "one JSON string (or {\"response\": ...}) per line")
      ->required();
  rank->add_option("--mode", ra.mode)->check(CLI::IsMember({"linear", "dnc", "full"}))->capture_default_str();
  rank->add_option("--vote-k", ra.vote_k)->check(CLI::PositiveNumber)->capture_default_str();
  rank->add_option("--seed", ra.seed);
  rank->add_flag("--no-reasoning", ra.no_reasoning, "use the label-only template");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "pairwise accuracy against gold labels");
  ev->add_option("dataset-file", ea.dataset)->required();
  ev->add_option("--vote-k", ea.vote_k)->check(CLI::PositiveNumber)->capture_default_str();
  ev->add_option("--seed", ea.seed);
  ev->add_option("--report", ea.report, "write per-record report lines here");
  ev->add_flag("--no-reasoning", ea.no_reasoning, "use the label-only template");

  RewardArgs wa;
  auto* rw = app.add_subcommand("reward", "reference-based reward for one sampled response");
  rw->add_option("--input", wa.input)->required();
  rw->add_option("--response", wa.response)->required();
  rw->add_option("--reference", wa.reference)->required();
  rw->add_option("--gamma", wa.gamma, "scaling factor (default 10)");
  rw->add_option("--history", wa.history, "previous raw rewards, one per line, for normalization");
  rw->add_option("--window", wa.window, "normalizer window (default 1000)");
  rw->add_option("--seed", wa.seed);
  rw->add_flag("--no-reasoning", wa.no_reasoning, "read P(A) without generating a rationale first");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }
  if (rank->parsed() && !ra.input && !ra.input_file) {
    std::cerr << "rank: one of --input or --input-file is required\n" << rank->help();
    return kUsage;
  }

  spdlog::set_level(spdlog::level::from_str(g.log_level));
  try {
    if (synth->parsed()) return run_synth(g, sa);
    if (st->parsed()) return run_selftrain(g, ta, st->help());
    if (rank->parsed()) return run_rank(g, ra);
    if (ev->parsed()) return run_eval(g, ea);
    if (rw->parsed()) return run_reward(g, wa);
  } catch (const rrm::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kInternal;
  }
  return kUsage;
}
