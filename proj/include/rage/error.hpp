#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include "json.hpp"

namespace rage {

enum class ErrorCode {
  kInvalidArgument,
  kDuplicateId,
  kEmptyCorpus,
  kEmptyQuery,
  kNoResults,
  kAllZeroScores,
  kContextTooLarge,
  kOracleUnavailable,
  kOracleMalformedResponse,
  kUnsupportedCapability,
  kUnknownOracle,
  kKTooLarge,
  kLengthMismatch,
  kUndefined,
  kNonSquareMatrix,
  kNonFiniteEntry,
  kBudgetExhausted,
  kNotFound,
  kParseError,
  kIoError,
  kInternal,
};

// Stable wire name, e.g. "DuplicateId".
std::string_view ErrorCodeName(ErrorCode code);

// All failures surfaced by the library carry a code, a message and optional
// structured details; the service maps them 1:1 onto {code, message, details}.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message,
        nlohmann::json details = nlohmann::json::object())
      : std::runtime_error(message), code_(code), details_(std::move(details)) {}

  ErrorCode code() const { return code_; }
  const nlohmann::json& details() const { return details_; }

  nlohmann::json ToJson() const;

 private:
  ErrorCode code_;
  nlohmann::json details_;
};

}  // namespace rage
