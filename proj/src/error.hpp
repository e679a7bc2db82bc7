#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace eqc {

enum class ErrorCode {
  InvalidArgument,
  TauOutOfRange,
  NonFinite,
  DuplicateCell,
  MissingCell,
  NonNumericField,
  UnbalancedPanel,
  SingularDesign,
  NotConverged,
  TooLarge,
  DegenerateSpacing,
  NonPositiveRho,
  NonPositiveH,
  SingularQH,
  Io,
};

std::string_view error_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

// Throws TauOutOfRange unless 0 < tau < 1.
void require_tau(double tau);

}  // namespace eqc
