#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace hfdiff {

enum class ErrorCode {
  InvalidArgument,
  NonFiniteCoefficient,
  NonFiniteDerivative,
  PathExplosion,
  SingularDiffusion,
  DegenerateData,
  NonFinite,
  NoConvergence,
  SingularNormalEquations,
  SingularGamma,
  NonPDHessian,
  NonPositiveNh,
  AllCandidatesFailed,
  ParseError,
  ConfigError,
  IoError,
};

const char* to_string(ErrorCode code);

// Every failure raised by the library carries a code so callers (and the
// Python layer) can branch on it. `index` is the offending observation or
// row where that makes sense.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what, std::optional<std::size_t> index = std::nullopt);

  ErrorCode code() const noexcept { return code_; }
  std::optional<std::size_t> index() const noexcept { return index_; }

 private:
  ErrorCode code_;
  std::optional<std::size_t> index_;
};

}  // namespace hfdiff
