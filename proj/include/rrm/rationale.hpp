#pragma once

// SPDX-License-Identifier: Apache-2.0

/**
 * @file rationale.hpp
 * @brief Rationale parsing, structural rule checks, and the reversible
 *        rationale <-> proof transformation.
 *
 * Rationale form (reward model output):
 *
 *   <think>
 *   Feedback: ...
 *   Comparison: ...
 *   Conclusion: ...
 *   </think>
 *   <answer>A</answer>
 *
 * Proof form (prover output):
 *
 *   Here is my justification for why the selected response is the better one.
 *
 *   First, <feedback>
 *
 *   Then, <comparison>
 *
 *   Thus, Response <label> is better.
 *
 * Section headers match case-insensitively, with optional colon and markdown
 * emphasis; "Comparision" (the spelling the judge template asks for) is accepted.
 */

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rrm/errors.hpp"
#include "rrm/text.hpp"
#include "rrm/types.hpp"

namespace rrm {

enum class Section { Feedback, Comparison, Conclusion };

constexpr std::string_view to_string(Section s) {
  switch (s) {
    case Section::Feedback: return "Feedback";
    case Section::Comparison: return "Comparison";
    case Section::Conclusion: return "Conclusion";
  }
  return "Feedback";
}

enum class RuleCode { TooLong, MissingThink, MissingAnswer, BadAnswerToken, MissingSection };

struct RuleViolation {
  RuleCode code;
  std::optional<Section> section;  // set for MissingSection

  bool operator==(const RuleViolation&) const = default;
};

inline std::string to_string(const RuleViolation& v) {
  switch (v.code) {
    case RuleCode::TooLong: return "TooLong";
    case RuleCode::MissingThink: return "MissingThink";
    case RuleCode::MissingAnswer: return "MissingAnswer";
    case RuleCode::BadAnswerToken: return "BadAnswerToken";
    case RuleCode::MissingSection:
      return "MissingSection(" + std::string(to_string(v.section.value_or(Section::Feedback))) + ")";
  }
  return "Unknown";
}

struct RuleConfig {
  std::size_t max_tokens = 4096;
};

inline constexpr std::string_view kProofPreamble =
    "Here is my justification for why the selected response is the better one.";

namespace detail {

struct HeaderMatch {
  Section section;
  std::size_t line_begin;     // offset of the header line
  std::size_t content_begin;  // offset just past the header (and colon)
};

/// Recognizes "  **Feedback:** text", "Comparison", "conclusion: ..." etc. at line start.
inline std::optional<HeaderMatch> match_header(std::string_view body, std::size_t line_begin,
                                               std::size_t line_end) {
  std::size_t i = line_begin;
  auto skip = [&](auto pred) {
    while (i < line_end && pred(body[i])) ++i;
  };
  skip([](char c) { return c == ' ' || c == '\t'; });
  skip([](char c) { return c == '*' || c == '#'; });
  skip([](char c) { return c == ' ' || c == '\t'; });

  static constexpr std::array<std::pair<std::string_view, Section>, 4> kNames = {{
      {"feedback", Section::Feedback},
      {"comparison", Section::Comparison},
      {"comparision", Section::Comparison},
      {"conclusion", Section::Conclusion},
  }};
  for (auto [name, section] : kNames) {
    if (i + name.size() > line_end || !text::iequals(body.substr(i, name.size()), name)) continue;
    std::size_t j = i + name.size();
    auto skip_emph = [&] {
      while (j < line_end && body[j] == '*') ++j;
    };
    skip_emph();
    bool colon = false;
    if (j < line_end && body[j] == ':') {
      colon = true;
      ++j;
      skip_emph();
    }
    // Without a colon the header must stand alone on its line.
    if (!colon && !text::trim(body.substr(j, line_end - j)).empty()) continue;
    return HeaderMatch{section, line_begin, j};
  }
  return std::nullopt;
}

}  // namespace detail

/// Structural scan of a reward-model output: the parsed block when well formed
/// and every structural problem found, in report order (think, answer, sections).
struct RationaleScan {
  std::optional<RationaleBlock> block;
  std::vector<RuleViolation> issues;
  /// Text up to and including "</think>", usable as a rationale prefix.
  std::optional<std::string> think_prefix;
};

inline RationaleScan scan_rationale(std::string_view raw) {
  RationaleScan scan;
  std::string_view body;
  bool have_think = false;
  std::size_t after_think = 0;

  auto open = text::ifind(raw, "<think>");
  if (open != std::string_view::npos) {
    auto close = text::ifind(raw, "</think>", open);
    if (close != std::string_view::npos) {
      have_think = true;
      body = raw.substr(open + 7, close - open - 7);
      after_think = close + 8;
      scan.think_prefix = std::string(raw.substr(0, after_think));
    }
  }
  if (!have_think) scan.issues.push_back({RuleCode::MissingThink, std::nullopt});

  std::optional<Label> answer;
  auto aopen = text::ifind(raw, "<answer>", after_think);
  auto aclose = aopen == std::string_view::npos ? std::string_view::npos
                                                : text::ifind(raw, "</answer>", aopen);
  if (aopen == std::string_view::npos || aclose == std::string_view::npos) {
    scan.issues.push_back({RuleCode::MissingAnswer, std::nullopt});
  } else {
    answer = parse_label(raw.substr(aopen + 8, aclose - aopen - 8));
    if (!answer) scan.issues.push_back({RuleCode::BadAnswerToken, std::nullopt});
  }

  std::array<std::optional<detail::HeaderMatch>, 3> headers;
  std::vector<std::size_t> boundaries;  // line starts of accepted headers
  if (have_think) {
    std::size_t line_begin = 0;
    while (line_begin <= body.size()) {
      auto nl = body.find('\n', line_begin);
      std::size_t line_end = nl == std::string_view::npos ? body.size() : nl;
      if (auto m = detail::match_header(body, line_begin, line_end)) {
        auto& slot = headers[static_cast<std::size_t>(m->section)];
        if (!slot) {
          slot = m;
          boundaries.push_back(line_begin);
        }
      }
      if (nl == std::string_view::npos) break;
      line_begin = nl + 1;
    }
  }

  std::array<std::string, 3> contents;
  for (std::size_t s = 0; s < 3; ++s) {
    if (headers[s]) {
      std::size_t end = body.size();
      for (auto b : boundaries)
        if (b > headers[s]->line_begin && b < end) end = b;
      contents[s] = std::string(
          text::trim(body.substr(headers[s]->content_begin, end - headers[s]->content_begin)));
    }
    if (contents[s].empty())
      scan.issues.push_back({RuleCode::MissingSection, static_cast<Section>(s)});
  }

  if (scan.issues.empty())
    scan.block = RationaleBlock{std::move(contents[0]), std::move(contents[1]), std::move(contents[2]),
                                *answer};
  return scan;
}

/// Strict parse; throws the first structural problem.
inline RationaleBlock parse_rationale(std::string_view raw) {
  auto scan = scan_rationale(raw);
  if (scan.block) return *scan.block;
  const auto& first = scan.issues.front();
  switch (first.code) {
    case RuleCode::MissingThink: throw Error(ErrorCode::MissingThink);
    case RuleCode::MissingAnswer: throw Error(ErrorCode::MissingAnswer);
    case RuleCode::BadAnswerToken: throw Error(ErrorCode::BadAnswerToken);
    case RuleCode::MissingSection:
    case RuleCode::TooLong:
      break;
  }
  throw Error(ErrorCode::MissingSection, std::string(to_string(first.section.value_or(Section::Feedback))));
}

/// Label from a judge output: the <answer> tag, or the whole output when it
/// is a bare "A"/"B".
inline std::optional<Label> extract_answer(std::string_view raw) {
  auto open = text::ifind(raw, "<answer>");
  if (open != std::string_view::npos) {
    auto close = text::ifind(raw, "</answer>", open);
    if (close == std::string_view::npos) return std::nullopt;
    return parse_label(text::trim(raw.substr(open + 8, close - open - 8)));
  }
  return parse_label(text::trim(raw));
}

/// Format filter applied to pseudo-labeled samples. An empty report means the
/// sample survives. `token_count` is measured by the active backend.
inline std::vector<RuleViolation> validate_rationale_rules(std::string_view raw,
                                                           const std::optional<RationaleBlock>& rb,
                                                           std::size_t token_count,
                                                           const RuleConfig& cfg = {}) {
  std::vector<RuleViolation> out;
  if (token_count > cfg.max_tokens) out.push_back({RuleCode::TooLong, std::nullopt});
  if (!raw.empty() || !rb) {
    auto scan = scan_rationale(raw);
    out.insert(out.end(), scan.issues.begin(), scan.issues.end());
    return out;
  }
  if (text::is_blank(rb->feedback)) out.push_back({RuleCode::MissingSection, Section::Feedback});
  if (text::is_blank(rb->comparison)) out.push_back({RuleCode::MissingSection, Section::Comparison});
  if (text::is_blank(rb->conclusion)) out.push_back({RuleCode::MissingSection, Section::Conclusion});
  return out;
}

/// Tagged form used as the reward model's training target.
inline std::string serialize_rationale(const RationaleBlock& r) {
  std::string out = "<think>Feedback: ";
  out.append(r.feedback)
      .append("\nComparison: ")
      .append(r.comparison)
      .append("\nConclusion: ")
      .append(r.conclusion)
      .append("</think><answer>");
  out.push_back(to_char(r.answer));
  out.append("</answer>");
  return out;
}

inline std::string canonical_conclusion(Label l) {
  return std::string("Response ") + to_char(l) + " is better.";
}

inline std::string rationale_to_proof(const RationaleBlock& r) {
  std::string out(kProofPreamble);
  out.append("\n\nFirst, ")
      .append(r.feedback)
      .append("\n\nThen, ")
      .append(r.comparison)
      .append("\n\nThus, ")
      .append(canonical_conclusion(r.answer));
  return out;
}

namespace detail {

inline bool at_word_start(std::string_view s, std::size_t pos) {
  return pos == 0 || text::is_space(s[pos - 1]);
}

inline bool at_line_start(std::string_view s, std::size_t pos) {
  while (pos > 0 && (s[pos - 1] == ' ' || s[pos - 1] == '\t')) --pos;
  return pos == 0 || s[pos - 1] == '\n';
}

/// Occurrences of `marker` (case-insensitive) beginning a word, from `from` on.
inline std::vector<std::size_t> marker_positions(std::string_view s, std::string_view marker,
                                                 std::size_t from) {
  std::vector<std::size_t> out;
  for (auto at = text::ifind(s, marker, from); at != std::string_view::npos;
       at = text::ifind(s, marker, at + 1))
    if (at_word_start(s, at)) out.push_back(at);
  return out;
}

/// Earliest (or latest) occurrence, preferring those at a line start.
inline std::optional<std::size_t> pick_marker(std::string_view s, std::string_view marker, std::size_t from,
                                              bool last) {
  auto all = marker_positions(s, marker, from);
  if (all.empty()) return std::nullopt;
  std::vector<std::size_t> line_starts;
  for (auto p : all)
    if (at_line_start(s, p)) line_starts.push_back(p);
  const auto& pool = line_starts.empty() ? all : line_starts;
  return last ? pool.back() : pool.front();
}

}  // namespace detail

/// Recovers the rationale from a proof. Feedback is the "First," span,
/// comparison the "Then," span (up to "Thus," when present); the conclusion
/// is regenerated from `l`.
///
/// A feedback paragraph that itself starts a line with "Then," makes the
/// split ambiguous; such proofs are read with the first line-start "Then,".
inline RationaleBlock proof_to_rationale(std::string_view proof, Label l) {
  auto first = detail::pick_marker(proof, "First,", 0, false);
  if (!first) throw Error(ErrorCode::UnparseableProof, "missing \"First,\"");
  const std::size_t feedback_begin = *first + 6;
  auto then = detail::pick_marker(proof, "Then,", feedback_begin, false);
  if (!then) throw Error(ErrorCode::UnparseableProof, "missing \"Then,\" after \"First,\"");
  const std::size_t comparison_begin = *then + 5;
  auto thus = detail::pick_marker(proof, "Thus,", comparison_begin, true);
  const std::size_t comparison_end = thus ? *thus : proof.size();

  RationaleBlock r;
  r.feedback = text::normalize_whitespace(proof.substr(feedback_begin, *then - feedback_begin));
  r.comparison = text::normalize_whitespace(proof.substr(comparison_begin, comparison_end - comparison_begin));
  if (r.feedback.empty() || r.comparison.empty())
    throw Error(ErrorCode::UnparseableProof, "empty feedback or comparison span");
  r.conclusion = canonical_conclusion(l);
  r.answer = l;
  return r;
}

/// Whitespace-normalized copy, the equality used by round-trip checks.
inline RationaleBlock normalized(const RationaleBlock& r) {
  return {text::normalize_whitespace(r.feedback), text::normalize_whitespace(r.comparison),
          text::normalize_whitespace(r.conclusion), r.answer};
}

}  // namespace rrm
