#pragma once

// SPDX-License-Identifier: Apache-2.0

#include <stdexcept>
#include <string>
#include <string_view>

namespace rrm {

enum class ErrorCode {
  EmptyField,
  InvalidArgument,
  InvalidRecord,
  // rationale codec
  MissingThink,
  MissingAnswer,
  BadAnswerToken,
  MissingSection,
  UnparseableProof,
  // backend
  BackendUnavailable,
  RateLimited,
  ContextOverflow,
  EmptyContinuation,
  ScoringUnsupported,
  LabelTokensUnavailable,
  // proof selection
  MissingLabel,
  DegenerateUnconditional,
  EmptyCandidates,
  AllCandidatesUnparseable,
  // denoise / orchestration
  EmptyList,
  StatePathMissing,
  WriteFailure,
  ReadFailure,
  ParseFailure,
  MissingRationale,
  // ranking / eval
  MalformedOutput,
  EmptyDataset,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyField: return "EmptyField";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvalidRecord: return "InvalidRecord";
    case ErrorCode::MissingThink: return "MissingThink";
    case ErrorCode::MissingAnswer: return "MissingAnswer";
    case ErrorCode::BadAnswerToken: return "BadAnswerToken";
    case ErrorCode::MissingSection: return "MissingSection";
    case ErrorCode::UnparseableProof: return "UnparseableProof";
    case ErrorCode::BackendUnavailable: return "BackendUnavailable";
    case ErrorCode::RateLimited: return "RateLimited";
    case ErrorCode::ContextOverflow: return "ContextOverflow";
    case ErrorCode::EmptyContinuation: return "EmptyContinuation";
    case ErrorCode::ScoringUnsupported: return "ScoringUnsupported";
    case ErrorCode::LabelTokensUnavailable: return "LabelTokensUnavailable";
    case ErrorCode::MissingLabel: return "MissingLabel";
    case ErrorCode::DegenerateUnconditional: return "DegenerateUnconditional";
    case ErrorCode::EmptyCandidates: return "EmptyCandidates";
    case ErrorCode::AllCandidatesUnparseable: return "AllCandidatesUnparseable";
    case ErrorCode::EmptyList: return "EmptyList";
    case ErrorCode::StatePathMissing: return "StatePathMissing";
    case ErrorCode::WriteFailure: return "WriteFailure";
    case ErrorCode::ReadFailure: return "ReadFailure";
    case ErrorCode::ParseFailure: return "ParseFailure";
    case ErrorCode::MissingRationale: return "MissingRationale";
    case ErrorCode::MalformedOutput: return "MalformedOutput";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
  }
  return "Unknown";
}

/// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail = {})
      : std::runtime_error(detail.empty() ? std::string(to_string(code))
                                          : std::string(to_string(code)) + ": " + detail),
        code_(code),
        detail_(detail) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

  /// Backend errors worth another attempt.
  bool retryable() const noexcept {
    return code_ == ErrorCode::RateLimited || code_ == ErrorCode::BackendUnavailable;
  }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace rrm
