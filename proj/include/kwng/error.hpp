#ifndef KWNG_ERROR_HPP
#define KWNG_ERROR_HPP

#include <stdexcept>
#include <string>

namespace kwng {

enum class ErrorCode {
  NonFinite,
  NoConvergence,
  SingularSigma,
  DimensionMismatch,
  InvalidArgument,
  EmptySet,
  ZeroSpread,
  EmptyBatch,
  DegenerateLatent,
  DimensionUnsupported,
  EmptyWindow,
  OracleUnavailable,
  DivergenceDetected,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::SingularSigma: return "SingularSigma";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::EmptySet: return "EmptySet";
    case ErrorCode::ZeroSpread: return "ZeroSpread";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::DegenerateLatent: return "DegenerateLatent";
    case ErrorCode::DimensionUnsupported: return "DimensionUnsupported";
    case ErrorCode::EmptyWindow: return "EmptyWindow";
    case ErrorCode::OracleUnavailable: return "OracleUnavailable";
    case ErrorCode::DivergenceDetected: return "DivergenceDetected";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Throws unless cond holds.
inline void check(bool cond, ErrorCode code, const char* what) {
  if (!cond) throw Error(code, what);
}

}  // namespace kwng

#endif  // KWNG_ERROR_HPP
