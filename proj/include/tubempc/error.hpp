#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tubempc {

enum class ErrorKind {
  kValidation,
  kDimension,
  kEmptySet,
  kSolverFailure,
  kNonConvergence,
  kStability,
  kObservability,
  kRpiUnbounded,
  kExhaustedK,
  kExhaustedIterations,
  kDisturbanceTooLarge,
  kInfeasible,
  kInvariantViolation,
  kNonBoxSet,
};

std::string_view to_string(ErrorKind kind);

/// Exception type for every failure raised by the library. `stage()` is set
/// when the error escaped from a named step of controller synthesis.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message, std::string stage = {})
      : std::runtime_error(message), kind_(kind), stage_(std::move(stage)) {}

  ErrorKind kind() const { return kind_; }
  const std::string& stage() const { return stage_; }

 private:
  ErrorKind kind_;
  std::string stage_;
};

/// Default tolerance for containment and redundancy tests. Reads
/// TUBEMPC_SOLVER_TOL once; falls back to 1e-8.
double default_tolerance();

}  // namespace tubempc
