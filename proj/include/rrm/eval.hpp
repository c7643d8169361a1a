#pragma once

// SPDX-License-Identifier: Apache-2.0

/**
 * @file eval.hpp
 * @brief Pairwise accuracy of a judge against gold labels.
 *
 * Records whose evaluation fails count as incorrect and are tallied in
 * n_errors. Records with a tag also contribute to a per-tag breakdown;
 * untagged records are grouped under "(untagged)".
 */

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "rrm/hash.hpp"
#include "rrm/parallel.hpp"
#include "rrm/ranking.hpp"
#include "rrm/records_io.hpp"

namespace rrm {

inline constexpr std::string_view kUntagged = "(untagged)";

struct EvalPrediction {
  std::string id;
  Label gold = Label::A;
  std::optional<Label> predicted;
  std::optional<std::string> error;
  bool correct() const { return predicted && *predicted == gold; }
};

struct TagStats {
  std::size_t n = 0;
  std::size_t n_correct = 0;
  std::size_t n_errors = 0;
  double accuracy() const { return n == 0 ? 0.0 : static_cast<double>(n_correct) / static_cast<double>(n); }
};

struct EvalReport {
  double accuracy = 0.0;
  std::size_t n = 0;
  std::size_t n_correct = 0;
  std::size_t n_errors = 0;
  std::map<std::string, TagStats> per_tag;
  std::vector<EvalPrediction> predictions;
};

using RecordEvaluator = std::function<Label(const PreferenceRecord&)>;

inline EvalReport pairwise_accuracy(const std::vector<PreferenceRecord>& dataset, const RecordEvaluator& evaluate,
                                    std::size_t max_workers = 8) {
  if (dataset.empty()) throw Error(ErrorCode::EmptyDataset);
  for (const auto& r : dataset)
    if (!r.label) throw Error(ErrorCode::MissingLabel, r.id);

  EvalReport rep;
  rep.predictions.resize(dataset.size());
  parallel_for(dataset.size(), max_workers, [&](std::size_t i) {
    auto& p = rep.predictions[i];
    p.id = dataset[i].id;
    p.gold = *dataset[i].label;
    try {
      p.predicted = evaluate(dataset[i]);
    } catch (const Error& e) {
      p.error = e.what();
    }
  });

  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& p = rep.predictions[i];
    auto& tag = rep.per_tag[dataset[i].tag ? *dataset[i].tag : std::string(kUntagged)];
    ++rep.n;
    ++tag.n;
    if (p.error) {
      ++rep.n_errors;
      ++tag.n_errors;
    }
    if (p.correct()) {
      ++rep.n_correct;
      ++tag.n_correct;
    }
  }
  rep.accuracy = static_cast<double>(rep.n_correct) / static_cast<double>(rep.n);
  return rep;
}

/// Evaluator backed by a judge: a single comparison, or voting@k when k > 1.
/// Each record gets its own seed derived from `seed` and the record id.
inline RecordEvaluator judge_evaluator(const Judge& judge, std::size_t vote_k = 1, std::int64_t seed = 0) {
  return [&judge, vote_k, seed](const PreferenceRecord& r) {
    const auto s = derive_seed(seed, r.id, 0);
    if (vote_k <= 1) return judge.compare(r.input_text, r.response_a, r.response_b, s).label;
    return vote_at_k(judge, r.input_text, r.response_a, r.response_b, vote_k, s);
  };
}

/// Converts a {prompt, chosen, rejected} object into a labeled record. The
/// chosen response goes to slot A unless a seeded coin swaps the pair.
inline PreferenceRecord record_from_pair_json(const json& j, std::int64_t seed) {
  try {
    const auto prompt = j.at("prompt").get<std::string>();
    const auto chosen = j.at("chosen").get<std::string>();
    const auto rejected = j.at("rejected").get<std::string>();
    PreferenceRecord r;
    r.input_text = prompt;
    const auto id = j.contains("id") ? j.at("id").get<std::string>() : content_id(prompt, chosen, rejected);
    const bool swap = hash_combine({static_cast<std::uint64_t>(seed), fnv1a64(id)}) & 1U;
    r.id = id;
    r.response_a = swap ? rejected : chosen;
    r.response_b = swap ? chosen : rejected;
    r.label = swap ? Label::B : Label::A;
    r.source = Source::labeled_rationale_free;
    if (j.contains("tag") && j.at("tag").is_string()) r.tag = j.at("tag").get<std::string>();
    else if (j.contains("subset") && j.at("subset").is_string()) r.tag = j.at("subset").get<std::string>();
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseFailure, e.what());
  }
}

/// Reads an evaluation file in either the native record schema or the
/// {prompt, chosen, rejected} schema (detected per line).
inline std::vector<PreferenceRecord> read_eval_dataset(const std::filesystem::path& path, std::int64_t seed) {
  std::vector<PreferenceRecord> out;
  for_each_line(path, [&](std::size_t n, const std::string& line) {
    try {
      json j;
      try {
        j = json::parse(line);
      } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseFailure, e.what());
      }
      out.push_back(j.is_object() && j.contains("chosen") ? record_from_pair_json(j, seed) : record_from_json(j));
    } catch (const Error& e) {
      throw Error(ErrorCode::ParseFailure, path.string() + ":" + std::to_string(n) + ": " + e.detail());
    }
  });
  return out;
}

/// One JSON line per record, then a summary line.
inline std::vector<std::string> report_lines(const EvalReport& rep) {
  std::vector<std::string> lines;
  for (const auto& p : rep.predictions) {
    json j = {{"id", p.id}, {"gold", to_string(p.gold)}, {"correct", p.correct()}};
    j["predicted"] = p.predicted ? json(to_string(*p.predicted)) : json(nullptr);
    if (p.error) j["error"] = *p.error;
    lines.push_back(j.dump());
  }
  json tags = json::object();
  for (const auto& [name, t] : rep.per_tag)
    tags[name] = {{"n", t.n}, {"n_correct", t.n_correct}, {"n_errors", t.n_errors}, {"accuracy", t.accuracy()}};
  lines.push_back(json{{"summary", true},
                       {"accuracy", rep.accuracy},
                       {"n", rep.n},
                       {"n_correct", rep.n_correct},
                       {"n_errors", rep.n_errors},
                       {"per_tag", tags}}
                      .dump());
  return lines;
}

inline void print_summary(std::ostream& os, const EvalReport& rep) {
  char buf[160];
  os << "# errored evaluations are counted as incorrect\n";
  std::snprintf(buf, sizeof buf, "accuracy %.4f  (%zu/%zu correct, %zu errors)\n", rep.accuracy, rep.n_correct,
                rep.n, rep.n_errors);
  os << buf;
  for (const auto& [name, t] : rep.per_tag) {
    std::snprintf(buf, sizeof buf, "  %-20s %.4f  (%zu/%zu, %zu errors)\n", name.c_str(), t.accuracy(), t.n_correct,
                  t.n, t.n_errors);
    os << buf;
  }
}

}  // namespace rrm
