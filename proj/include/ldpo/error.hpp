#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ldpo {

enum class Errc {
  EmptyVector,
  NegativeWeight,
  NotNormalized,
  IndexOutOfRange,
  InvalidConcentration,
  InvalidArgument,
  ParseError,
  MissingDimension,
  DuplicateCandidateId,
  TooFewCandidates,
  NonFiniteScore,
  DimensionMismatch,
  UnsupportedN,
  MissingParameter,
  NonFiniteLogRatio,
  InvalidTarget,
  EmptyCandidates,
  DivergenceDetected,
  IoError,
};

inline std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::EmptyVector: return "EmptyVector";
    case Errc::NegativeWeight: return "NegativeWeight";
    case Errc::NotNormalized: return "NotNormalized";
    case Errc::IndexOutOfRange: return "IndexOutOfRange";
    case Errc::InvalidConcentration: return "InvalidConcentration";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::ParseError: return "ParseError";
    case Errc::MissingDimension: return "MissingDimension";
    case Errc::DuplicateCandidateId: return "DuplicateCandidateId";
    case Errc::TooFewCandidates: return "TooFewCandidates";
    case Errc::NonFiniteScore: return "NonFiniteScore";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::UnsupportedN: return "UnsupportedN";
    case Errc::MissingParameter: return "MissingParameter";
    case Errc::NonFiniteLogRatio: return "NonFiniteLogRatio";
    case Errc::InvalidTarget: return "InvalidTarget";
    case Errc::EmptyCandidates: return "EmptyCandidates";
    case Errc::DivergenceDetected: return "DivergenceDetected";
    case Errc::IoError: return "IoError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace ldpo
