#pragma once

// SPDX-License-Identifier: Apache-2.0
//
// Fixtures shared by the unit tests and the acceptance binary.

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "rrm/rrm.hpp"

namespace rrm::testing {

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Fresh, empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& tag) {
  static std::atomic<int> counter{0};
  auto p = std::filesystem::temp_directory_path() /
           ("rrm_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline std::string random_sentence(std::mt19937_64& rng, std::size_t min_words = 3, std::size_t max_words = 12) {
  static const std::vector<std::string> words = {
      "response", "clear",   "accurate", "misses", "the",   "point",  "detail", "helpful", "code",
      "answer",   "example", "correct",  "step",   "user",  "asked",  "for",    "but",     "and",
      "because",  "it",      "is",       "more",   "less",  "concise", "safe",  "format",  "A",
      "B",        "first",   "then",     "thus",   "Then,", "Thus,",  "First,", "42",      "x=1"};
  std::uniform_int_distribution<std::size_t> len(min_words, max_words), pick(0, words.size() - 1);
  std::string s;
  const std::size_t n = len(rng);
  for (std::size_t i = 0; i < n; ++i) {
    if (i) s += ' ';
    s += words[pick(rng)];
  }
  return s + ".";
}

/// Random section text: one to three sentences, sometimes split over lines,
/// never with a line that starts with "Then," or "Thus,".
inline std::string random_section(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> sentences(1, 3), coin(0, 3);
  std::string s;
  const int n = sentences(rng);
  for (int i = 0; i < n; ++i) {
    std::string sent = random_sentence(rng);
    while (sent.rfind("Then,", 0) == 0 || sent.rfind("Thus,", 0) == 0) sent = "So " + sent;
    if (i) s += coin(rng) == 0 ? "\n" : " ";
    s += sent;
  }
  return s;
}

inline RationaleBlock random_rationale(std::mt19937_64& rng) {
  const Label l = rng() & 1 ? Label::A : Label::B;
  return {random_section(rng), random_section(rng), canonical_conclusion(l), l};
}

/// Candidates with distinct random scores; the mock ranks by score.
struct TotalOrder {
  std::string input;
  std::vector<std::string> candidates;
  std::vector<double> scores;
  MockSpec spec;

  std::size_t best() const {
    return static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin());
  }
};

inline TotalOrder random_total_order(std::mt19937_64& rng, std::size_t n) {
  TotalOrder t;
  t.input = "Prompt " + std::to_string(rng() % 100000);
  std::vector<double> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = static_cast<double>(i);
  std::shuffle(pool.begin(), pool.end(), rng);
  for (std::size_t i = 0; i < n; ++i) {
    t.candidates.push_back("candidate " + std::to_string(i) + " " + random_sentence(rng, 2, 5));
    t.scores.push_back(pool[i]);
    t.spec.response_scores[t.candidates.back()] = pool[i];
  }
  return t;
}

/// Brute force: the candidate preferred to every other by the mock's pairwise order.
inline std::size_t brute_force_max(const MockBackend& mock, const TotalOrder& t) {
  for (std::size_t i = 0; i < t.candidates.size(); ++i) {
    bool beats_all = true;
    for (std::size_t j = 0; j < t.candidates.size() && beats_all; ++j) {
      if (i == j) continue;
      PromptSections s{t.input, t.candidates[i], t.candidates[j], std::nullopt, true};
      beats_all = mock.preference(s, 0) == Label::A;
    }
    if (beats_all) return i;
  }
  return t.candidates.size();
}

inline PreferenceRecord unlabeled_record(const std::string& id, const std::string& x, const std::string& a,
                                         const std::string& b) {
  PreferenceRecord r;
  r.id = id;
  r.input_text = x;
  r.response_a = a;
  r.response_b = b;
  r.source = Source::unlabeled;
  return r;
}

inline std::vector<PreferenceRecord> toy_batch(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<PreferenceRecord> out;
  for (std::size_t i = 0; i < n; ++i)
    out.push_back(unlabeled_record("u" + std::to_string(seed) + "_" + std::to_string(i), random_sentence(rng),
                                   random_sentence(rng), random_sentence(rng)));
  return out;
}

inline RunOutcome run(Label l, double prob_a, std::vector<RuleViolation> v = {}) {
  return RunOutcome{l, LabelDistribution{prob_a, 1.0 - prob_a}, std::move(v)};
}

/// Ten pseudo-labeled records, two runs each, tau = 0.8:
///   r0, r1  rule-rejected (TooLong; malformed second run)
///   r2      vote tie
///   r3..r5  winner confidence 0.75, 0.5, 0.79 (below tau)
///   r6..r9  kept with confidence 0.9, 0.85, 0.8 (equal to tau), 0.95
inline std::vector<PseudoLabeled> denoise_fixture() {
  auto rec = [](int i) {
    return unlabeled_record("r" + std::to_string(i), "x" + std::to_string(i), "a" + std::to_string(i),
                            "b" + std::to_string(i));
  };
  std::vector<PseudoLabeled> v;
  v.push_back({rec(0), {run(Label::A, 0.9), run(Label::A, 0.9, {{RuleCode::TooLong, std::nullopt}})}, {}});
  v.push_back({rec(1), {run(Label::B, 0.1), RunOutcome{std::nullopt, std::nullopt, {{RuleCode::MissingAnswer, std::nullopt}}}}, {}});
  v.push_back({rec(2), {run(Label::A, 0.9), run(Label::B, 0.1)}, {}});
  v.push_back({rec(3), {run(Label::A, 0.7), run(Label::A, 0.8)}, {}});
  v.push_back({rec(4), {run(Label::B, 0.5), run(Label::B, 0.5)}, {}});
  v.push_back({rec(5), {run(Label::B, 0.22), run(Label::B, 0.2)}, {}});
  v.push_back({rec(6), {run(Label::A, 0.9), run(Label::A, 0.9)}, {}});
  v.push_back({rec(7), {run(Label::B, 0.1), run(Label::B, 0.2)}, {}});
  v.push_back({rec(8), {run(Label::A, 0.8), run(Label::A, 0.8)}, {}});
  v.push_back({rec(9), {run(Label::B, 0.05), run(Label::B, 0.05)}, {}});
  return v;
}

}  // namespace rrm::testing
