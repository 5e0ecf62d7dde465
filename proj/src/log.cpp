#include "tubempc/log.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>

#include "tubempc/error.hpp"

namespace tubempc {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kValidation: return "ValidationError";
    case ErrorKind::kDimension: return "DimensionError";
    case ErrorKind::kEmptySet: return "EmptySet";
    case ErrorKind::kSolverFailure: return "SolverFailure";
    case ErrorKind::kNonConvergence: return "NonConvergence";
    case ErrorKind::kStability: return "StabilityError";
    case ErrorKind::kObservability: return "ObservabilityError";
    case ErrorKind::kRpiUnbounded: return "Failure(Unbounded)";
    case ErrorKind::kExhaustedK: return "ExhaustedK";
    case ErrorKind::kExhaustedIterations: return "ExhaustedIterations";
    case ErrorKind::kDisturbanceTooLarge: return "DisturbanceTooLarge";
    case ErrorKind::kInfeasible: return "Infeasible";
    case ErrorKind::kInvariantViolation: return "InvariantViolation";
    case ErrorKind::kNonBoxSet: return "NonBoxSet";
  }
  return "Unknown";
}

double default_tolerance() {
  static const double tol = [] {
    if (const char* env = std::getenv("TUBEMPC_SOLVER_TOL")) {
      char* end = nullptr;
      const double v = std::strtod(env, &end);
      if (end != env && v > 0.0) return v;
    }
    return 1e-8;
  }();
  return tol;
}

namespace log {
namespace {
std::atomic<Level> g_level{Level::kWarning};
std::mutex g_mutex;
}  // namespace

void set_level(Level level) { g_level = level; }
Level level() { return g_level; }

void warn(std::string_view message) {
  if (g_level < Level::kWarning) return;
  std::lock_guard lock(g_mutex);
  std::cerr << "warning: " << message << '\n';
}

void info(std::string_view message) {
  if (g_level < Level::kInfo) return;
  std::lock_guard lock(g_mutex);
  std::cerr << message << '\n';
}

}  // namespace log
}  // namespace tubempc
