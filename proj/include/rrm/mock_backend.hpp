#pragma once

// SPDX-License-Identifier: Apache-2.0

/**
 * @file mock_backend.hpp
 * @brief Deterministic, table-driven Backend for tests and offline runs.
 *
 * Every method is a pure function of (MockSpec, inputs, seed). Lookups fall
 * back to seeded hashing, so the mock never fails on unseen inputs.
 *
 * Preference resolution for a comparison (x, y_a, y_b), in order:
 *  1. preference_table entry
 *  2. response_scores (higher score wins) when both responses are scored
 *  3. a latent per-comparison probability p_A drawn from the noise seed;
 *     each sample then votes A with probability p_A
 *
 * score_sequence without a table entry uses a causal byte model: every byte
 * costs k/64 nats (k in 1..16, hashed from the byte and its predecessor) and
 * every completed word costs 1/4 if it already occurred in the context, 2
 * otherwise. Values are dyadic, so sums are exact and the model is additive:
 * score(p, c1 + c2) == score(p, c1) + score(p + c1, c2).
 */

#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "rrm/backend.hpp"
#include "rrm/rationale.hpp"
#include "rrm/templates.hpp"

namespace rrm {

/// Key for (x, y_a, y_b) lookups.
inline std::string triple_key(std::string_view x, std::string_view a, std::string_view b) {
  return to_hex(hash_fields({x, a, b}));
}

struct MockSpec {
  std::map<std::string, Label> preference_table;                      // triple_key -> label
  std::map<std::string, double> response_scores;                       // response text -> quality
  std::map<std::string, std::pair<double, double>> label_logit_table;  // digest(prompt) -> (a, b)
  std::map<std::string, std::pair<double, double>> label_triple_table; // triple_key -> (a, b)
  std::map<std::string, double> label_prob_table;                      // digest(prompt) or triple_key -> P(A)
  std::map<std::pair<std::string, std::string>, double> sequence_logprob_table;  // (digest, digest)
  std::map<std::string, std::vector<std::string>> canned_generations;  // digest(prompt) -> outputs
  std::set<std::string> failing_prompts;                               // digest(prompt) -> BackendUnavailable
  std::int64_t default_logit_noise_seed = 0;
  bool scoring_supported = true;

  void set_preference(std::string_view x, std::string_view a, std::string_view b, Label l) {
    preference_table[triple_key(x, a, b)] = l;
  }
  void set_label_logits(const PromptContext& p, double a, double b) {
    label_logit_table[digest(p.prompt_text)] = {a, b};
  }
  void set_canned(const PromptContext& p, std::vector<std::string> outputs) {
    canned_generations[digest(p.prompt_text)] = std::move(outputs);
  }
  void set_sequence_logprob(std::string_view prefix, std::string_view continuation, double v) {
    sequence_logprob_table[{digest(prefix), digest(continuation)}] = v;
  }

  /// JSON form used by `--backend mock:<file>`. All keys optional:
  ///   preference_table: [{input, response_a, response_b, label}]
  ///   response_scores: {text: score}
  ///   label_logits: [{input, response_a, response_b, logits: [a, b]} | {prompt, logits}
  ///                  | {..., prob_a}]   (null logit = -inf)
  ///   canned_generations: [{prompt, outputs: [...]}]
  ///   sequence_logprobs: [{prefix, continuation, logprob}]
  ///   noise_seed: int, scoring_supported: bool
  static MockSpec from_json(const nlohmann::json& j) {
    MockSpec spec;
    auto logit = [](const nlohmann::json& v) {
      return v.is_null() ? -std::numeric_limits<double>::infinity() : v.get<double>();
    };
    auto label_of = [](const nlohmann::json& v) {
      auto l = parse_label(v.get<std::string>());
      if (!l) throw Error(ErrorCode::ParseFailure, "mock spec label must be A or B");
      return *l;
    };
    for (const auto& e : j.value("preference_table", nlohmann::json::array()))
      spec.set_preference(e.at("input").get<std::string>(), e.at("response_a").get<std::string>(),
                          e.at("response_b").get<std::string>(), label_of(e.at("label")));
    const auto scores = j.value("response_scores", nlohmann::json::object());
    for (const auto& [k, v] : scores.items()) spec.response_scores[k] = v.get<double>();
    for (const auto& e : j.value("label_logits", nlohmann::json::array())) {
      const std::string key = e.contains("prompt") ? digest(e.at("prompt").get<std::string>())
                                                   : triple_key(e.at("input").get<std::string>(),
                                                                e.at("response_a").get<std::string>(),
                                                                e.at("response_b").get<std::string>());
      if (e.contains("prob_a")) {
        const double pa = e.at("prob_a").get<double>();
        if (!(pa >= 0.0 && pa <= 1.0)) throw Error(ErrorCode::ParseFailure, "prob_a must be in [0, 1]");
        spec.label_prob_table[key] = pa;
        continue;
      }
      const std::pair<double, double> ab{logit(e.at("logits").at(0)), logit(e.at("logits").at(1))};
      if (e.contains("prompt"))
        spec.label_logit_table[digest(e.at("prompt").get<std::string>())] = ab;
      else
        spec.label_triple_table[triple_key(e.at("input").get<std::string>(),
                                           e.at("response_a").get<std::string>(),
                                           e.at("response_b").get<std::string>())] = ab;
    }
    for (const auto& e : j.value("canned_generations", nlohmann::json::array()))
      spec.canned_generations[digest(e.at("prompt").get<std::string>())] =
          e.at("outputs").get<std::vector<std::string>>();
    for (const auto& e : j.value("sequence_logprobs", nlohmann::json::array()))
      spec.set_sequence_logprob(e.at("prefix").get<std::string>(), e.at("continuation").get<std::string>(),
                                e.at("logprob").get<double>());
    spec.default_logit_noise_seed = j.value("noise_seed", std::int64_t{0});
    spec.scoring_supported = j.value("scoring_supported", true);
    return spec;
  }
};

class MockBackend final : public Backend {
 public:
  explicit MockBackend(MockSpec spec = {}) : spec_(std::move(spec)) {}

  const MockSpec& spec() const { return spec_; }

  std::vector<Completion> generate(const PromptContext& prompt, const SamplingParams& params) override {
    params.validate();
    generate_calls_.fetch_add(1, std::memory_order_relaxed);
    const std::string key = digest(prompt.prompt_text);
    if (spec_.failing_prompts.count(key)) throw Error(ErrorCode::BackendUnavailable, "mock failure");

    const auto sections = extract_sections(prompt.prompt_text);
    if (sections && !sections->disclosed_label) comparisons_.fetch_add(1, std::memory_order_relaxed);

    std::vector<Completion> out;
    out.reserve(params.n_samples);
    const std::uint64_t seed = static_cast<std::uint64_t>(params.seed.value_or(0));
    for (std::size_t i = 0; i < params.n_samples; ++i) {
      // Greedy decoding collapses all samples onto one output.
      const std::uint64_t sample = params.temperature == 0.0 ? 0 : i;
      std::string text;
      if (auto it = spec_.canned_generations.find(key); it != spec_.canned_generations.end() &&
                                                        !it->second.empty()) {
        const auto& list = it->second;
        const std::uint64_t at = params.seed ? seed + sample : sample;
        text = list[static_cast<std::size_t>(at % list.size())];
      } else {
        const std::uint64_t h = hash_combine({fnv1a64(key), seed, sample});
        text = synthesize(sections, h);
      }
      out.push_back(make_completion(std::move(text)));
    }
    return out;
  }

  double score_sequence(std::string_view prefix, std::string_view continuation) override {
    score_calls_.fetch_add(1, std::memory_order_relaxed);
    if (continuation.empty()) throw Error(ErrorCode::EmptyContinuation);
    if (!spec_.scoring_supported) throw Error(ErrorCode::ScoringUnsupported, "mock configured without scoring");
    if (auto it = spec_.sequence_logprob_table.find({digest(prefix), digest(continuation)});
        it != spec_.sequence_logprob_table.end())
      return it->second;
    return byte_model_logprob(prefix, continuation);
  }

  LabelDistribution label_logprobs(const PromptContext& prompt,
                                   const std::optional<std::string>& rationale_prefix) override {
    label_calls_.fetch_add(1, std::memory_order_relaxed);
    const std::string key = digest(prompt.prompt_text);
    if (spec_.failing_prompts.count(key)) throw Error(ErrorCode::BackendUnavailable, "mock failure");
    if (rationale_prefix) {
      if (auto it = spec_.label_logit_table.find(digest(prompt.prompt_text + "\x1f" + *rationale_prefix));
          it != spec_.label_logit_table.end())
        return LabelDistribution::from_logprobs(it->second.first, it->second.second);
    }
    if (auto it = spec_.label_logit_table.find(key); it != spec_.label_logit_table.end())
      return LabelDistribution::from_logprobs(it->second.first, it->second.second);
    if (auto it = spec_.label_prob_table.find(key); it != spec_.label_prob_table.end())
      return {it->second, 1.0 - it->second};

    const auto sections = extract_sections(prompt.prompt_text);
    if (!sections) {
      const double pa = unit_interval(hash_combine({fnv1a64(key), noise_seed()}));
      return {pa, 1.0 - pa};
    }
    if (auto it = spec_.label_triple_table.find(
            triple_key(sections->input, sections->response_a, sections->response_b));
        it != spec_.label_triple_table.end())
      return LabelDistribution::from_logprobs(it->second.first, it->second.second);
    if (auto it = spec_.label_prob_table.find(triple_key(sections->input, sections->response_a, sections->response_b));
        it != spec_.label_prob_table.end())
      return {it->second, 1.0 - it->second};

    double pa = latent_prob_a(*sections);
    if (rationale_prefix) {
      // Lean toward the verdict the rationale already reached.
      auto scan = scan_rationale(*rationale_prefix + "<answer>A</answer>");
      if (scan.block) {
        const auto& c = scan.block->conclusion;
        const bool says_a = c.find("Response A") != std::string::npos;
        const bool says_b = c.find("Response B") != std::string::npos;
        if (says_a != says_b) pa = 0.5 * pa + (says_a ? 0.5 : 0.0);
      }
    }
    return {pa, 1.0 - pa};
  }

  std::size_t count_tokens(std::string_view s) const override { return text::count_words(s); }

  std::string describe() const override { return "mock:" + to_hex(spec_fingerprint()); }

  /// Preferred label for a comparison; `sample_hash` drives the noisy fallback.
  Label preference(const PromptSections& s, std::uint64_t sample_hash) const {
    if (auto it = spec_.preference_table.find(triple_key(s.input, s.response_a, s.response_b));
        it != spec_.preference_table.end())
      return it->second;
    if (auto strict = score_order(s)) return *strict;
    return unit_interval(splitmix64(sample_hash)) < latent_prob_a(s) ? Label::A : Label::B;
  }

  std::uint64_t generate_calls() const { return generate_calls_.load(); }
  std::uint64_t comparison_calls() const { return comparisons_.load(); }
  std::uint64_t score_calls() const { return score_calls_.load(); }
  std::uint64_t label_calls() const { return label_calls_.load(); }
  void reset_counters() {
    generate_calls_ = 0;
    comparisons_ = 0;
    score_calls_ = 0;
    label_calls_ = 0;
  }

  static double byte_model_logprob(std::string_view prefix, std::string_view continuation) {
    std::unordered_set<std::string> seen;
    std::string word;
    double total = 0.0;
    unsigned char prev = 0;
    const std::size_t n = prefix.size() + continuation.size();
    for (std::size_t i = 0; i < n; ++i) {
      const char c = i < prefix.size() ? prefix[i] : continuation[i - prefix.size()];
      const bool scored = i >= prefix.size();
      const auto uc = static_cast<unsigned char>(c);
      if (scored) {
        const auto k = 1 + (splitmix64((static_cast<std::uint64_t>(prev) << 8) | uc) & 0xfU);
        total -= static_cast<double>(k) / 64.0;
      }
      if (text::is_space(c)) {
        if (!word.empty()) {
          const bool novel = seen.insert(word).second;
          if (scored) total -= novel ? 2.0 : 0.25;
          word.clear();
        }
      } else {
        word.push_back(text::lower(c));
      }
      prev = uc;
    }
    return total;
  }

 private:
  std::uint64_t noise_seed() const { return static_cast<std::uint64_t>(spec_.default_logit_noise_seed); }

  std::uint64_t spec_fingerprint() const {
    std::uint64_t h = hash_combine({spec_.preference_table.size(), spec_.response_scores.size(),
                                    spec_.label_logit_table.size(), spec_.canned_generations.size(),
                                    noise_seed()});
    for (const auto& [k, v] : spec_.preference_table) h = hash_combine({h, fnv1a64(k), v == Label::A ? 1u : 2u});
    for (const auto& [k, v] : spec_.response_scores)
      h = hash_combine({h, fnv1a64(k), static_cast<std::uint64_t>(std::llround(v * 1e6))});
    return h;
  }

  std::optional<Label> score_order(const PromptSections& s) const {
    auto a = spec_.response_scores.find(s.response_a);
    auto b = spec_.response_scores.find(s.response_b);
    if (a == spec_.response_scores.end() || b == spec_.response_scores.end() || a->second == b->second)
      return std::nullopt;
    return a->second > b->second ? Label::A : Label::B;
  }

  /// Latent P(A) of a comparison. Deterministic preferences map to a
  /// confident (>= 0.6) distribution on the winner.
  double latent_prob_a(const PromptSections& s) const {
    const auto h = hash_combine({hash_fields({s.input, s.response_a, s.response_b}), noise_seed()});
    std::optional<Label> fixed;
    if (auto it = spec_.preference_table.find(triple_key(s.input, s.response_a, s.response_b));
        it != spec_.preference_table.end())
      fixed = it->second;
    else
      fixed = score_order(s);
    const double u = unit_interval(h);
    if (fixed) return *fixed == Label::A ? 0.6 + 0.4 * u : 0.4 - 0.4 * u;
    return 0.05 + 0.9 * u;
  }

  static std::string_view pick(std::uint64_t h, std::initializer_list<std::string_view> options) {
    return *(options.begin() + static_cast<std::ptrdiff_t>(h % options.size()));
  }

  /// A few words quoted from `s`, chosen by `h`.
  static std::string quote_words(std::string_view s, std::uint64_t h, std::size_t count) {
    std::vector<std::string_view> words;
    std::size_t i = 0;
    while (i < s.size()) {
      while (i < s.size() && text::is_space(s[i])) ++i;
      std::size_t j = i;
      while (j < s.size() && !text::is_space(s[j])) ++j;
      if (j > i) words.push_back(s.substr(i, j - i));
      i = j;
    }
    if (words.empty()) return {};
    std::string out;
    const std::size_t start = static_cast<std::size_t>(h % words.size());
    for (std::size_t k = 0; k < count && start + k < words.size(); ++k) {
      if (!out.empty()) out.push_back(' ');
      out.append(words[start + k]);
    }
    return out;
  }

  std::string synthesize(const std::optional<PromptSections>& sections, std::uint64_t h) const {
    if (!sections) {
      return std::string("Generated text ") + to_hex(h).substr(0, 8) + ".";
    }
    if (sections->disclosed_label) return synthesize_proof(*sections, *sections->disclosed_label, h);
    const Label winner = preference(*sections, h);
    if (!sections->asks_for_reasoning) return to_string(winner);
    return synthesize_rationale(*sections, winner, h);
  }

  static std::string synthesize_rationale(const PromptSections& s, Label winner, std::uint64_t h) {
    const char w = to_char(winner);
    const char l = to_char(other(winner));
    const auto q_w = quote_words(winner == Label::A ? s.response_a : s.response_b, splitmix64(h + 1), 3);
    std::string out = "<think>\nFeedback:\nResponse ";
    out.push_back(w);
    out.append(" is ").append(pick(h, {"mostly helpful", "highly helpful", "accurate and complete"}));
    out.append(". Response ");
    out.push_back(l);
    out.append(" is ").append(pick(h >> 8, {"partially helpful", "less precise", "missing key details"}));
    out.append(".\n\nComparison:\nResponse ");
    out.push_back(w);
    out.append(" is better than Response ");
    out.push_back(l);
    out.append(" because it says \"").append(q_w).append("\".\n\nConclusion:\nResponse ");
    out.push_back(w);
    out.append(" is better.\n</think>\n\n<answer>\n");
    out.push_back(w);
    out.append("\n</answer>");
    return out;
  }

  /// Proofs come in two flavours: generic boilerplate, or one that quotes the
  /// responses (more likely given the prompt, hence higher selection score).
  static std::string synthesize_proof(const PromptSections& s, Label l, std::uint64_t h) {
    const char w = to_char(l);
    const char o = to_char(other(l));
    std::string out(kProofPreamble);
    out.append("\n\nFirst, ");
    if (h % 2 == 0) {
      out.append("Response ").push_back(w);
      out.append(" is helpful and well organized. Response ").push_back(o);
      out.append(" is less helpful overall.");
    } else {
      out.append("Response ").push_back(w);
      out.append(" addresses \"").append(quote_words(s.input, splitmix64(h), 4));
      out.append("\" by saying \"").append(quote_words(l == Label::A ? s.response_a : s.response_b,
                                                         splitmix64(h + 7), 4));
      out.append("\". Response ").push_back(o);
      out.append(" says \"").append(quote_words(l == Label::A ? s.response_b : s.response_a,
                                                splitmix64(h + 9), 4));
      out.append("\", which is less precise.");
    }
    out.append("\n\nThen, Response ").push_back(w);
    out.append(" is better than Response ").push_back(o);
    out.append(". ").append(pick(h >> 16, {"It follows the instruction more closely.",
                                           "It is more accurate.", "It is clearer and more complete."}));
    out.append("\n\nThus, Response ").push_back(w);
    out.append(" is better.");
    return out;
  }

  static Completion make_completion(std::string text) {
    Completion c;
    std::size_t i = 0;
    while (i < text.size()) {
      std::size_t j = i;
      while (j < text.size() && text::is_space(text[j])) ++j;
      while (j < text.size() && !text::is_space(text[j])) ++j;
      auto tok = text.substr(i, j - i);
      c.token_logprobs.push_back({tok, -static_cast<double>(1 + (fnv1a64(tok) & 7U)) / 16.0});
      i = j;
    }
    c.text = std::move(text);
    c.finish_reason = FinishReason::stop;
    return c;
  }

  MockSpec spec_;
  std::atomic<std::uint64_t> generate_calls_{0};
  std::atomic<std::uint64_t> comparisons_{0};
  std::atomic<std::uint64_t> score_calls_{0};
  std::atomic<std::uint64_t> label_calls_{0};
};

}  // namespace rrm
