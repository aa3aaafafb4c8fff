#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ioncavity {

/// Machine-readable failure category. The numeric values double as CLI exit codes.
enum class ErrorClass : int {
  internal = 1,
  config = 2,
  solver = 3,
  fit = 4,
};

inline const char* to_string(ErrorClass c) {
  switch (c) {
    case ErrorClass::config: return "config_error";
    case ErrorClass::solver: return "solver_error";
    case ErrorClass::fit: return "fit_error";
    case ErrorClass::internal: break;
  }
  return "internal_error";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorClass cls, const std::string& what) : std::runtime_error(what), class_(cls) {}
  ErrorClass error_class() const noexcept { return class_; }

 private:
  ErrorClass class_;
};

/// Shape or space mismatch between operators. Names the offending subsystem when known.
class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what, std::string subsystem = {})
      : Error(ErrorClass::internal, what), subsystem_(std::move(subsystem)) {}
  const std::string& subsystem() const noexcept { return subsystem_; }

 private:
  std::string subsystem_;
};

/// Invalid argument to a physics function (malformed half-integer, unknown manifold, ...).
class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what) : Error(ErrorClass::internal, what) {}
};

/// Configuration problems. Carries every violation found, not only the first.
class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<std::string> violations)
      : Error(ErrorClass::config, join(violations)), violations_(std::move(violations)) {}
  explicit ConfigError(const std::string& violation)
      : ConfigError(std::vector<std::string>{violation}) {}
  const std::vector<std::string>& violations() const noexcept { return violations_; }

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string out = "invalid configuration:";
    for (const auto& s : v) out += "\n  - " + s;
    return out;
  }
  std::vector<std::string> violations_;
};

class SolverError : public Error {
 public:
  explicit SolverError(const std::string& what, std::optional<double> last_time_us = std::nullopt)
      : Error(ErrorClass::solver, what), last_time_(last_time_us) {}
  /// Last time (us) the integrator accepted a step, when the failure happened mid-integration.
  std::optional<double> last_good_time() const noexcept { return last_time_; }

 private:
  std::optional<double> last_time_;
};

/// Steady-state solve found a null space of dimension > 1.
class DegenerateSteadyState : public SolverError {
 public:
  explicit DegenerateSteadyState(std::size_t dimension)
      : SolverError("degenerate steady state: Liouvillian null space has dimension " +
                    std::to_string(dimension)),
        dimension_(dimension) {}
  std::size_t dimension() const noexcept { return dimension_; }

 private:
  std::size_t dimension_;
};

/// A scan point failed; wraps the underlying solver message with the detuning (MHz).
class ScanPointError : public SolverError {
 public:
  ScanPointError(double detuning_mhz, const std::string& what)
      : SolverError("scan point at detuning " + std::to_string(detuning_mhz) + " MHz: " + what),
        detuning_(detuning_mhz) {}
  double detuning_mhz() const noexcept { return detuning_; }

 private:
  double detuning_;
};

class FitError : public Error {
 public:
  enum class Reason { not_converged, flat_objective, insufficient_data, no_peaks, out_of_range };
  FitError(Reason r, const std::string& what) : Error(ErrorClass::fit, what), reason_(r) {}
  Reason reason() const noexcept { return reason_; }

 private:
  Reason reason_;
};

}  // namespace ioncavity
