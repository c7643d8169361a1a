// SPDX-License-Identifier: Apache-2.0
//
// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails. The live-backend check prints SKIP
// unless RRM_LIVE_BACKEND_URL is set.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include "../support.hpp"
#include "rrm/http_backend.hpp"

using namespace rrm;
using rrm::testing::slurp;
using rrm::testing::temp_dir;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool ok = true;
  std::string detail;

  void require(bool cond, const std::string& what) {
    if (!cond && ok) {
      ok = false;
      detail = what;
    }
  }
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt_seconds(double s) {
  std::ostringstream os;
  os.precision(3);
  os << std::fixed << s << " s";
  return os.str();
}

Outcome proof_score_arithmetic() {
  Outcome o;
  const auto t0 = Clock::now();
  const auto rec = [] {
    auto r = rrm::testing::unlabeled_record("acc", "x", "a", "b");
    r.label = Label::A;
    r.source = Source::labeled_rationale_free;
    return r;
  }();
  const auto prompt = render_prover_prompt("x", "a", "b", Label::A).prompt_text;
  const double fixtures[3][3] = {{-50, -50, -1.0}, {-10, -100, -0.1}, {-90, -30, -3.0}};
  for (const auto& f : fixtures) {
    MockSpec spec;
    spec.set_sequence_logprob(prompt, "proof", f[0]);
    spec.set_sequence_logprob("", "proof", f[1]);
    MockBackend mock(spec);
    const auto c = score_proof(mock, rec, "proof");
    o.require(c.score == f[2], "score_proof(" + std::to_string(f[0]) + ", " + std::to_string(f[1]) + ")");
  }
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> len(1, 32), grid(-40, -1);
  for (int t = 0; t < 1000; ++t) {
    std::vector<ProofCandidate> cands;
    std::vector<double> scores;
    for (int i = 0, n = len(rng); i < n; ++i) {
      const double c = grid(rng), u = grid(rng);
      cands.push_back({"p", c, u, proof_score(c, u), true});
      scores.push_back(cands.back().score);
    }
    // Brute force: first index whose score is >= every other score.
    std::size_t expect = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      bool top = true;
      for (double s : scores) top = top && scores[i] >= s;
      if (top) {
        expect = i;
        break;
      }
    }
    o.require(select_best_proof(cands).index == expect, "argmax instance " + std::to_string(t));
  }
  const double s = seconds_since(t0);
  o.require(s < 1.0, "runtime " + fmt_seconds(s));
  if (o.ok) o.detail = fmt_seconds(s);
  return o;
}

Outcome rationale_round_trip() {
  Outcome o;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2);
  for (int i = 0; i < 1000; ++i) {
    const auto r = rrm::testing::random_rationale(rng);
    const auto back = proof_to_rationale(rationale_to_proof(r), r.answer);
    o.require(normalized(back) == normalized(r), "sample " + std::to_string(i));
  }
  const double s = seconds_since(t0);
  o.require(s < 1.0, "runtime " + fmt_seconds(s));
  if (o.ok) o.detail = fmt_seconds(s);
  return o;
}

std::vector<rrm::testing::TotalOrder> instances() {
  std::mt19937_64 rng(3);
  std::vector<rrm::testing::TotalOrder> out;
  for (int t = 0; t < 1000; ++t) out.push_back(rrm::testing::random_total_order(rng, 1 + rng() % 32));
  return out;
}

Outcome linear_fidelity(const std::vector<rrm::testing::TotalOrder>& all) {
  Outcome o;
  for (std::size_t t = 0; t < all.size(); ++t) {
    const auto& inst = all[t];
    MockBackend mock(inst.spec);
    Judge judge(mock);
    const auto brute = rrm::testing::brute_force_max(mock, inst);
    mock.reset_counters();
    const auto got = best_of_n_linear(make_pairwise(judge, 1, static_cast<std::int64_t>(t)), inst.input, inst.candidates);
    o.require(got == brute, "instance " + std::to_string(t) + " index");
    o.require(mock.comparison_calls() == inst.candidates.size() - 1, "instance " + std::to_string(t) + " compare count");
  }
  return o;
}

Outcome dnc_equivalence(const std::vector<rrm::testing::TotalOrder>& all) {
  Outcome o;
  for (std::size_t t = 0; t < all.size(); ++t) {
    const auto& inst = all[t];
    MockBackend mock(inst.spec);
    Judge judge(mock);
    const auto pw = make_pairwise(judge, 1, static_cast<std::int64_t>(t));
    const auto linear = best_of_n_linear(pw, inst.input, inst.candidates);
    mock.reset_counters();
    const auto dnc = best_of_n_dnc(pw, inst.input, inst.candidates, 8);
    o.require(dnc == linear, "instance " + std::to_string(t) + " index");
    o.require(mock.comparison_calls() == inst.candidates.size() - 1, "instance " + std::to_string(t) + " compare count");
  }
  return o;
}

Outcome denoise_fixture_and_sweep() {
  Outcome o;
  DenoiseConfig cfg;
  cfg.vote_runs = 2;
  cfg.confidence_threshold = 0.8;
  const auto res = denoise_batch(rrm::testing::denoise_fixture(), cfg);
  const auto& c = res.counts;
  o.require(c.n_format_rejected == 2 && c.n_vote_rejected == 1 && c.n_confidence_rejected == 3 && c.n_kept == 4,
            "fixture counts");

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<PseudoLabeled> batch;
    for (int i = 0; i < 50; ++i) {
      PseudoLabeled p{rrm::testing::unlabeled_record("s" + std::to_string(i), "x", "a", "b"), {}, {}};
      for (int r = 0; r < 3; ++r) {
        const double pa = u(rng);
        std::vector<RuleViolation> v;
        if (u(rng) < 0.1) v.push_back({RuleCode::TooLong, std::nullopt});
        p.runs.push_back(rrm::testing::run(u(rng) < pa ? Label::A : Label::B, pa, v));
      }
      batch.push_back(std::move(p));
    }
    std::set<std::string> prev;
    for (int step = 0; step <= 20; ++step) {
      DenoiseConfig sweep;
      sweep.vote_runs = 3;
      sweep.confidence_threshold = step / 20.0;
      const auto r = denoise_batch(batch, sweep);
      std::set<std::string> kept;
      for (const auto& k : r.kept) kept.insert(k.record.id);
      if (step > 0)
        o.require(std::includes(prev.begin(), prev.end(), kept.begin(), kept.end()),
                  "trial " + std::to_string(trial) + " tau " + std::to_string(step / 20.0));
      o.require(r.counts.conserved(), "conservation in sweep");
      prev = std::move(kept);
    }
  }
  return o;
}

SelfTrainConfig toy_config() {
  SelfTrainConfig cfg;
  cfg.denoise.confidence_threshold = 0.8;
  cfg.denoise.vote_runs = 3;
  cfg.proof.k = 2;
  cfg.seed = 20240611;
  return cfg;
}

Outcome selftrain_determinism() {
  Outcome o;
  const auto batch = rrm::testing::toy_batch(50, 50);
  std::string files[2], manifests[2];
  for (int rep = 0; rep < 2; ++rep) {
    MockBackend mock;
    const auto dir = temp_dir("acc_det");
    run_iteration(mock, dir, batch, toy_config());
    files[rep] = slurp(iteration_dir(dir, 0) / "reward_sft.jsonl");
    manifests[rep] = slurp(manifests_file(dir));
    std::filesystem::remove_all(dir);
  }
  o.require(!files[0].empty(), "training file is empty");
  o.require(files[0] == files[1], "training file differs");
  o.require(manifests[0] == manifests[1], "manifest differs");

  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    auto b = rrm::testing::toy_batch(rng() % 16, 1000 + static_cast<std::uint64_t>(t));
    MockSpec spec;
    spec.default_logit_noise_seed = static_cast<std::int64_t>(rng() >> 1);
    for (const auto& r : b) {
      const double roll = u(rng);
      if (roll < 0.1) {
        spec.failing_prompts.insert(digest(render_reward_prompt(r.input_text, r.response_a, r.response_b, true).prompt_text));
      } else if (roll < 0.2) {
        for (Label l : {Label::A, Label::B})
          spec.set_canned(render_prover_prompt(r.input_text, r.response_a, r.response_b, l), {"unparseable"});
      } else if (roll < 0.3) {
        spec.set_canned(render_reward_prompt(r.input_text, r.response_a, r.response_b, true), {"<answer>A</answer>"});
      }
    }
    MockBackend mock(spec);
    SelfTrainConfig cfg;
    cfg.denoise.confidence_threshold = u(rng);
    cfg.denoise.vote_runs = 1 + rng() % 4;
    if (rng() % 3 == 0) cfg.denoise.top_n = rng() % 6;
    cfg.proof.k = 1 + rng() % 3;
    cfg.seed = static_cast<std::int64_t>(rng() >> 1);
    cfg.randomize_order = rng() & 1;
    const auto dir = temp_dir("acc_cons");
    const auto res = run_iteration(mock, dir, b, cfg);
    o.require(res.manifest.n_input == b.size(), "batch " + std::to_string(t) + " n_input");
    o.require(res.manifest.conserved(), "batch " + std::to_string(t) + " conservation");
    std::filesystem::remove_all(dir);
  }
  return o;
}

Outcome reward_contract() {
  Outcome o;
  std::mt19937_64 rng(7);
  for (int i = 0; i < 1000; ++i) {
    MockSpec spec;
    spec.default_logit_noise_seed = static_cast<std::int64_t>(rng() >> 1);
    const auto x = rrm::testing::random_sentence(rng);
    const auto y = rrm::testing::random_sentence(rng);
    const auto ref = rrm::testing::random_sentence(rng);
    if (i % 4 == 1) spec.label_prob_table[triple_key(x, y, ref)] = static_cast<double>(rng() % 1001) / 1000.0;
    if (i % 4 == 2) spec.label_triple_table[triple_key(x, y, ref)] = {-static_cast<double>(rng() % 50), -static_cast<double>(rng() % 50)};
    MockBackend mock(spec);
    RewardConfig cfg;
    cfg.with_reasoning = i % 2 == 0;
    cfg.params.seed = i;
    const double r = reference_reward(mock, x, y, ref, cfg);
    o.require(r >= 0.0 && r <= 1.0, "reward out of range at " + std::to_string(i));
    const auto d = mock.label_logprobs(render_reward_prompt(x, y, ref, cfg.with_reasoning), std::nullopt);
    o.require(std::abs(d.prob_a + d.prob_b - 1.0) <= 1e-9, "distribution not normalized at " + std::to_string(i));
  }
  o.require(scaled_reward(0.73, 10) == 7.3, "scaled_reward(0.73, 10) != 7.3");
  return o;
}

Outcome normalizer_oracle() {
  Outcome o;
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(0.4, 0.25);
  const std::size_t window = 1000;
  RunningNormalizer nz(window), shifted(window);
  std::vector<double> all;
  double worst = 0.0, worst_shift = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double r = g(rng);
    all.push_back(r);
    const double z = nz.push_and_standardize(r);
    const double zs = shifted.push_and_standardize(r + 37.5);
    const std::size_t lo = all.size() > window ? all.size() - window : 0;
    const double n = static_cast<double>(all.size() - lo);
    double m = 0.0, v = 0.0;
    for (std::size_t j = lo; j < all.size(); ++j) m += all[j];
    m /= n;
    for (std::size_t j = lo; j < all.size(); ++j) v += (all[j] - m) * (all[j] - m);
    v /= n;
    const double expect = all.size() < 2 || v == 0.0 ? 0.0 : (r - m) / std::sqrt(v);
    worst = std::max(worst, std::abs(z - expect));
    worst_shift = std::max(worst_shift, std::abs(z - zs));
  }
  o.require(worst <= 1e-9, "max deviation from brute force " + std::to_string(worst));
  o.require(worst_shift <= 1e-9, "shift deviation " + std::to_string(worst_shift));
  return o;
}

Outcome golden_template() {
  Outcome o;
  const auto golden = slurp(RRM_GOLDEN_DIR "/reward_prompt.txt");
  const auto p = render_reward_prompt("What is the capital of France?", "The capital of France is Paris.",
                                      "France's capital city is Lyon.", true);
  o.require(!golden.empty(), "golden file missing");
  o.require(p.prompt_text == golden, "rendered prompt differs from golden file");
  using namespace markers;
  for (auto m : {kUserQuestion, kStartA, kEndA, kStartB, kEndB})
    o.require(count_occurrences(p.prompt_text, m) == 1, std::string(m) + " count");
  for (const char* tag : {"<think>", "</think>", "<answer>", "</answer>"})
    o.require(count_occurrences(p.prompt_text, tag) == 1, std::string(tag) + " count");
  return o;
}

Outcome eval_oracle() {
  Outcome o;
  std::mt19937_64 rng(10);
  const char* tags[] = {"chat", "math", "code", "safety"};
  for (int trial = 0; trial < 20; ++trial) {
    MockSpec spec;
    spec.default_logit_noise_seed = trial;
    std::vector<PreferenceRecord> ds;
    for (std::size_t i = 0, n = 1 + rng() % 40; i < n; ++i) {
      auto r = rrm::testing::unlabeled_record("t" + std::to_string(trial) + "_" + std::to_string(i),
                                              rrm::testing::random_sentence(rng), rrm::testing::random_sentence(rng),
                                              rrm::testing::random_sentence(rng));
      r.label = rng() & 1 ? Label::A : Label::B;
      r.source = Source::labeled_rationale_free;
      if (rng() % 4) r.tag = tags[rng() % 4];
      spec.set_preference(r.input_text, r.response_a, r.response_b, *r.label);
      ds.push_back(std::move(r));
    }
    MockBackend mock(spec);
    Judge judge(mock);
    const auto rep = pairwise_accuracy(ds, judge_evaluator(judge, 1 + trial % 3, trial));
    o.require(rep.accuracy == 1.0, "echo oracle accuracy " + std::to_string(rep.accuracy));
    double recomposed = 0.0;
    for (const auto& [name, t] : rep.per_tag)
      recomposed += t.accuracy() * static_cast<double>(t.n) / static_cast<double>(rep.n);
    o.require(std::abs(recomposed - rep.accuracy) <= 1e-12, "per-tag recomposition");
  }
  // A lossy evaluator exercises recomposition away from 1.0.
  std::vector<PreferenceRecord> ds;
  for (int i = 0; i < 101; ++i) {
    auto r = rrm::testing::unlabeled_record("l" + std::to_string(i), "x", "a", "b");
    r.label = i % 2 ? Label::A : Label::B;
    r.source = Source::labeled_rationale_free;
    r.tag = tags[i % 3];
    ds.push_back(r);
  }
  const auto rep = pairwise_accuracy(ds, [](const PreferenceRecord& r) {
    if (r.id.back() == '7') throw Error(ErrorCode::MalformedOutput);
    return r.id.size() % 2 ? Label::A : *r.label;
  });
  double recomposed = 0.0;
  for (const auto& [name, t] : rep.per_tag)
    recomposed += t.accuracy() * static_cast<double>(t.n) / static_cast<double>(rep.n);
  o.require(std::abs(recomposed - rep.accuracy) <= 1e-12, "per-tag recomposition (lossy evaluator)");
  return o;
}

/// nullopt when the gate variable is unset.
std::optional<Outcome> live_smoke() {
  const char* url = std::getenv("RRM_LIVE_BACKEND_URL");
  if (!url || !*url) return std::nullopt;
  Outcome o;
  HttpBackendConfig cfg;
  cfg.url = url;
  if (const char* model = std::getenv("RRM_LIVE_BACKEND_MODEL")) cfg.model = model;
  HttpBackend backend(cfg);
  std::vector<PreferenceRecord> recs;
  const char* rows[3][3] = {
      {"What is the capital of France?", "Paris.", "Lyon."},
      {"What is 12 times 12?", "144.", "124."},
      {"Name a primary color.", "Blue.", "Green is a primary pigment in paint."}};
  for (int i = 0; i < 3; ++i) {
    auto r = rrm::testing::unlabeled_record("live" + std::to_string(i), rows[i][0], rows[i][1], rows[i][2]);
    r.label = Label::A;
    r.source = Source::labeled_rationale_free;
    recs.push_back(r);
  }
  ProofSelectionConfig pcfg;
  pcfg.max_tokens = 1024;
  const auto out = synthesize_batch(backend, recs, pcfg, 0, 3);
  o.detail = std::to_string(out.records.size()) + " of 3 synthesized";
  o.require(!out.records.empty(), "no parseable rationale (" + o.detail + ")");
  return o;
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::err);
  int failures = 0;
  auto report = [&](const std::string& name, const std::function<Outcome()>& fn) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.ok = false;
      o.detail = std::string("exception: ") + e.what();
    }
    if (!o.ok) ++failures;
    std::cout << (o.ok ? "PASS" : "FAIL") << "  " << name;
    if (!o.detail.empty()) std::cout << "  (" << o.detail << ")";
    std::cout << std::endl;
  };

  const auto orders = instances();
  report("proof score arithmetic and argmax oracle", proof_score_arithmetic);
  report("rationale/proof round trip", rationale_round_trip);
  report("linear best-of-n equals brute force with n-1 comparisons", [&] { return linear_fidelity(orders); });
  report("tournament best-of-n equals linear with n-1 comparisons", [&] { return dnc_equivalence(orders); });
  report("denoise fixture counts and tau monotonicity", denoise_fixture_and_sweep);
  report("self-training determinism and conservation", selftrain_determinism);
  report("reward contract", reward_contract);
  report("running normalizer oracle and shift equivariance", normalizer_oracle);
  report("reward prompt golden file", golden_template);
  report("evaluation echo oracle and per-tag recomposition", eval_oracle);
  try {
    if (auto live = live_smoke()) {
      if (!live->ok) ++failures;
      std::cout << (live->ok ? "PASS" : "FAIL") << "  live backend smoke test  (" << live->detail << ")" << std::endl;
    } else {
      std::cout << "SKIP  live backend smoke test  (RRM_LIVE_BACKEND_URL not set)" << std::endl;
    }
  } catch (const std::exception& e) {
    ++failures;
    std::cout << "FAIL  live backend smoke test  (exception: " << e.what() << ")" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
