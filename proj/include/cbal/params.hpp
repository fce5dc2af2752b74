#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace cbal {

/// Rejected input: bad parameter combination, malformed request, etc.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A run left the admissible region (non-finite or above the divergence guard).
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(double time, const std::string& what)
      : std::runtime_error(what), time_(time) {}
  double time() const noexcept { return time_; }

 private:
  double time_;
};

enum class ModelKind { single, coupled, nonlinear };

ModelKind parse_model_kind(std::string_view name);
std::string_view to_string(ModelKind kind);

/// Any state component above this magnitude ends the run as diverged.
inline constexpr double kDivergenceGuard = 1e12;

/// Gains at which the single and coupled models sit at lambda_1 = 5e-4.
inline constexpr double kCalibratedSingleBeta = 20.306;
inline constexpr double kCalibratedCoupledBeta = 21.032;

/// Coefficients of the balancing models plus integration settings.
///
/// gamma: damping (1/s), alpha: instability (1/s^2), beta: feedback gain
/// (1/s^2), nu: multiplicative noise strength, tau: feedback delay (s),
/// dt: Euler-Maruyama step (s).
struct ModelParams {
  double gamma = 50.0;
  double alpha = 22.0;
  double beta = kCalibratedSingleBeta;
  double nu = 0.6;
  double tau = 0.1;
  double dt = 1e-3;
  std::uint64_t seed = 1;

  /// Throws ValidationError unless gamma, tau, dt > 0, nu >= 0, tau/dt is an
  /// integer and dt <= tau/10.
  void validate() const;

  /// tau/dt as an integer. Only meaningful on validated parameters.
  std::size_t delay_steps() const;
};

bool operator==(const ModelParams& a, const ModelParams& b);

}  // namespace cbal
