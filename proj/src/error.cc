#include "rage/error.hpp"

namespace rage {

std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kDuplicateId: return "DuplicateId";
    case ErrorCode::kEmptyCorpus: return "EmptyCorpus";
    case ErrorCode::kEmptyQuery: return "EmptyQuery";
    case ErrorCode::kNoResults: return "NoResults";
    case ErrorCode::kAllZeroScores: return "AllZeroScores";
    case ErrorCode::kContextTooLarge: return "ContextTooLarge";
    case ErrorCode::kOracleUnavailable: return "OracleUnavailable";
    case ErrorCode::kOracleMalformedResponse: return "OracleMalformedResponse";
    case ErrorCode::kUnsupportedCapability: return "UnsupportedCapability";
    case ErrorCode::kUnknownOracle: return "UnknownOracle";
    case ErrorCode::kKTooLarge: return "KTooLarge";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kUndefined: return "Undefined";
    case ErrorCode::kNonSquareMatrix: return "NonSquareMatrix";
    case ErrorCode::kNonFiniteEntry: return "NonFiniteEntry";
    case ErrorCode::kBudgetExhausted: return "BudgetExhausted";
    case ErrorCode::kNotFound: return "NotFound";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kInternal: return "Internal";
  }
  return "Unknown";
}

nlohmann::json Error::ToJson() const {
  return {{"code", std::string(ErrorCodeName(code_))},
          {"message", what()},
          {"details", details_}};
}

}  // namespace rage
