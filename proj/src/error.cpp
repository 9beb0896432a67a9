#include "hfdiff/error.hpp"

namespace hfdiff {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::NonFiniteCoefficient: return "NonFiniteCoefficient";
    case ErrorCode::NonFiniteDerivative: return "NonFiniteDerivative";
    case ErrorCode::PathExplosion: return "PathExplosion";
    case ErrorCode::SingularDiffusion: return "SingularDiffusion";
    case ErrorCode::DegenerateData: return "DegenerateData";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::SingularNormalEquations: return "SingularNormalEquations";
    case ErrorCode::SingularGamma: return "SingularGamma";
    case ErrorCode::NonPDHessian: return "NonPDHessian";
    case ErrorCode::NonPositiveNh: return "NonPositiveNh";
    case ErrorCode::AllCandidatesFailed: return "AllCandidatesFailed";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

namespace {

std::string decorate(ErrorCode code, const std::string& what, std::optional<std::size_t> index) {
  std::string msg = std::string(to_string(code)) + ": " + what;
  if (index) msg += " (index " + std::to_string(*index) + ")";
  return msg;
}

}  // namespace

Error::Error(ErrorCode code, const std::string& what, std::optional<std::size_t> index)
    : std::runtime_error(decorate(code, what, index)), code_(code), index_(index) {}

}  // namespace hfdiff
