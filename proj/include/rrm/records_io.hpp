#pragma once

// SPDX-License-Identifier: Apache-2.0

/**
 * @file records_io.hpp
 * @brief JSON encoding of records and manifests, and line-delimited file IO.
 *
 * Every dataset line is one JSON object carrying "schema_version". Keys are
 * emitted in sorted order, so encoding is byte-stable.
 */

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rrm/errors.hpp"
#include "rrm/types.hpp"

namespace rrm {

inline constexpr int kSchemaVersion = 1;

using json = nlohmann::json;

inline json to_json(const RationaleBlock& r) {
  return {{"feedback", r.feedback},
          {"comparison", r.comparison},
          {"conclusion", r.conclusion},
          {"answer", to_string(r.answer)}};
}

inline Label label_from_json(const json& j, const char* what) {
  if (!j.is_string()) throw Error(ErrorCode::ParseFailure, std::string(what) + " must be a string");
  auto l = parse_label(j.get<std::string>());
  if (!l) throw Error(ErrorCode::ParseFailure, std::string(what) + " must be \"A\" or \"B\"");
  return *l;
}

inline RationaleBlock rationale_from_json(const json& j) {
  try {
    return {j.at("feedback").get<std::string>(), j.at("comparison").get<std::string>(),
            j.at("conclusion").get<std::string>(), label_from_json(j.at("answer"), "rationale.answer")};
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseFailure, e.what());
  }
}

inline json to_json(const PreferenceRecord& r) {
  json j = {{"schema_version", kSchemaVersion},
            {"id", r.id},
            {"input", r.input_text},
            {"response_a", r.response_a},
            {"response_b", r.response_b},
            {"source", std::string(to_string(r.source))}};
  if (r.label) j["label"] = to_string(*r.label);
  if (r.rationale) j["rationale"] = to_json(*r.rationale);
  if (r.proof) j["proof"] = *r.proof;
  if (r.tag) j["tag"] = *r.tag;
  return j;
}

/// Decodes a record. A missing id is derived from the content; a missing
/// source is inferred from which of label/rationale are present.
inline PreferenceRecord record_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::ParseFailure, "record must be a JSON object");
  try {
    if (auto v = j.value("schema_version", kSchemaVersion); v != kSchemaVersion)
      throw Error(ErrorCode::ParseFailure, "unsupported schema_version " + std::to_string(v));
    PreferenceRecord r;
    r.input_text = j.at("input").get<std::string>();
    r.response_a = j.at("response_a").get<std::string>();
    r.response_b = j.at("response_b").get<std::string>();
    r.id = j.contains("id") ? j.at("id").get<std::string>() : content_id(r.input_text, r.response_a, r.response_b);
    if (j.contains("label") && !j.at("label").is_null()) r.label = label_from_json(j.at("label"), "label");
    if (j.contains("rationale") && !j.at("rationale").is_null()) r.rationale = rationale_from_json(j.at("rationale"));
    if (j.contains("proof") && !j.at("proof").is_null()) r.proof = j.at("proof").get<std::string>();
    if (j.contains("tag") && !j.at("tag").is_null()) r.tag = j.at("tag").get<std::string>();
    if (j.contains("source")) {
      auto s = parse_source(j.at("source").get<std::string>());
      if (!s) throw Error(ErrorCode::ParseFailure, "unknown source " + j.at("source").dump());
      r.source = *s;
    } else {
      r.source = !r.label      ? Source::unlabeled
                 : r.rationale ? Source::labeled_with_rationale
                               : Source::labeled_rationale_free;
    }
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseFailure, e.what());
  }
}

inline std::string encode_record(const PreferenceRecord& r) { return to_json(r).dump(); }

inline PreferenceRecord decode_record(std::string_view line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseFailure, e.what());
  }
  return record_from_json(j);
}

inline json to_json(const IterationManifest& m) {
  return {{"schema_version", kSchemaVersion},
          {"iteration_index", m.iteration_index},
          {"n_input", m.n_input},
          {"n_format_rejected", m.n_format_rejected},
          {"n_vote_rejected", m.n_vote_rejected},
          {"n_confidence_rejected", m.n_confidence_rejected},
          {"n_kept", m.n_kept},
          {"config_digest", m.config_digest},
          {"seed", m.seed},
          {"extensions",
           {{"n_topn_rejected", m.n_topn_rejected},
            {"n_synth_failed", m.n_synth_failed},
            {"n_backend_errors", m.n_backend_errors},
            {"retrain_hook", m.retrain_hook}}}};
}

inline IterationManifest manifest_from_json(const json& j) {
  try {
    IterationManifest m;
    m.iteration_index = j.at("iteration_index").get<std::uint64_t>();
    m.n_input = j.at("n_input").get<std::uint64_t>();
    m.n_format_rejected = j.at("n_format_rejected").get<std::uint64_t>();
    m.n_vote_rejected = j.at("n_vote_rejected").get<std::uint64_t>();
    m.n_confidence_rejected = j.at("n_confidence_rejected").get<std::uint64_t>();
    m.n_kept = j.at("n_kept").get<std::uint64_t>();
    m.config_digest = j.at("config_digest").get<std::string>();
    m.seed = j.at("seed").get<std::int64_t>();
    if (j.contains("extensions")) {
      const auto& e = j.at("extensions");
      m.n_topn_rejected = e.value("n_topn_rejected", std::uint64_t{0});
      m.n_synth_failed = e.value("n_synth_failed", std::uint64_t{0});
      m.n_backend_errors = e.value("n_backend_errors", std::uint64_t{0});
      m.retrain_hook = e.value("retrain_hook", std::string{});
    }
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseFailure, e.what());
  }
}

/// Calls `on_line(line_number, text)` for each non-blank line.
inline void for_each_line(const std::filesystem::path& path,
                          const std::function<void(std::size_t, const std::string&)>& on_line) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ReadFailure, path.string());
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::is_blank(line)) continue;
    on_line(n, line);
  }
  if (in.bad()) throw Error(ErrorCode::ReadFailure, path.string());
}

inline std::vector<PreferenceRecord> read_records(const std::filesystem::path& path) {
  std::vector<PreferenceRecord> out;
  for_each_line(path, [&](std::size_t n, const std::string& line) {
    try {
      out.push_back(decode_record(line));
    } catch (const Error& e) {
      throw Error(ErrorCode::ParseFailure, path.string() + ":" + std::to_string(n) + ": " + e.detail());
    }
  });
  return out;
}

/// Writes `lines` to `path` via a temporary file and rename, so readers never
/// observe a partial file.
inline void write_lines_atomic(const std::filesystem::path& path, const std::vector<std::string>& lines) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::WriteFailure, tmp.string());
    for (const auto& l : lines) out << l << '\n';
    out.flush();
    if (!out) throw Error(ErrorCode::WriteFailure, tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::WriteFailure, path.string() + ": " + ec.message());
}

inline void write_records(const std::filesystem::path& path, const std::vector<PreferenceRecord>& records) {
  std::vector<std::string> lines;
  lines.reserve(records.size());
  for (const auto& r : records) lines.push_back(encode_record(r));
  write_lines_atomic(path, lines);
}

}  // namespace rrm
