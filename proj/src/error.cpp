#include "error.hpp"

#include <cmath>
#include "text_format.hpp"

namespace eqc {

std::string_view error_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::TauOutOfRange: return "TauOutOfRange";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::DuplicateCell: return "DuplicateCell";
    case ErrorCode::MissingCell: return "MissingCell";
    case ErrorCode::NonNumericField: return "NonNumericField";
    case ErrorCode::UnbalancedPanel: return "UnbalancedPanel";
    case ErrorCode::SingularDesign: return "SingularDesign";
    case ErrorCode::NotConverged: return "NotConverged";
    case ErrorCode::TooLarge: return "TooLarge";
    case ErrorCode::DegenerateSpacing: return "DegenerateSpacing";
    case ErrorCode::NonPositiveRho: return "NonPositiveRho";
    case ErrorCode::NonPositiveH: return "NonPositiveH";
    case ErrorCode::SingularQH: return "SingularQH";
    case ErrorCode::Io: return "IoError";
  }
  return "Unknown";
}

void fail(ErrorCode code, const std::string& message) {
  throw Error(code, std::string(error_name(code)) + ": " + message);
}

void require_tau(double tau) {
  if (!(tau > 0.0 && tau < 1.0))
    fail(ErrorCode::TauOutOfRange, "tau must lie in (0,1), got " + format_double(tau));
}

}  // namespace eqc
