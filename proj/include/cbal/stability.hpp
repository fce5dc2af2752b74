#pragma once

#include <complex>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cbal/params.hpp"

namespace cbal {

class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class LyapunovNorm {
  headline,      // (e, e') per stick
  with_history,  // headline plus the RMS of the stored delay history
};

struct LyapunovOptions {
  double horizon = 2e4;            // s, must be >= 100 tau
  std::size_t renorm_every = 100;  // integration steps between renormalizations
  std::size_t segments = 20;       // for the standard error
  LyapunovNorm norm = LyapunovNorm::headline;
};

struct LyapunovEstimate {
  double lambda1 = 0;
  double std_error = 0;
  double horizon = 0;
  double renorm_interval = 0;  // s
};

/// Largest Lyapunov exponent of the linear single or coupled model.
///
/// The homogeneous relative-form system is integrated from a unit-norm state
/// with a constant pre-history. Every `renorm_every` steps the log of the
/// state norm is accumulated and the whole state, history included, is
/// scaled back to unit norm. The estimate is the total log growth over the
/// horizon; the standard error comes from the spread of per-segment rates.
LyapunovEstimate largest_lyapunov(ModelKind kind, const ModelParams& params,
                                  const LyapunovOptions& options = {});

/// Distinct roots of z^2 + gamma z - alpha + beta exp(-z tau) = 0 reached by
/// Newton iteration from a grid over Re z in [-2 gamma, gamma],
/// Im z in [0, 4 pi / tau], sorted by decreasing real part.
std::vector<std::complex<double>> characteristic_roots(double gamma, double alpha, double beta,
                                                       double tau);

/// Real part of the rightmost characteristic root. Throws ConvergenceError
/// if Newton converges from no seed.
double characteristic_root(double gamma, double alpha, double beta, double tau);

struct CalibrationOptions {
  double target = 5e-4;
  double beta_lo = 18.0;
  double beta_hi = 24.0;
  std::size_t n_seeds = 8;
  LyapunovOptions lyapunov{};
  std::size_t max_iterations = 60;
  double min_width = 1e-3;
  unsigned jobs = 0;
};

struct CalibrationStep {
  double beta, lambda1, std_error;
};

struct BetaCalibration {
  double beta_star = 0;
  double target = 0;
  double bracket_lo = 0, bracket_hi = 0;
  double lambda1 = 0;
  double std_error = 0;
  std::vector<CalibrationStep> trace;
};

/// Seed-averaged lambda_1(beta): mean over seeds params.seed .. +n_seeds-1.
/// The error is the standard error of that mean (segment error when n = 1).
LyapunovEstimate mean_lyapunov(ModelKind kind, const ModelParams& params, std::size_t n_seeds,
                               const LyapunovOptions& options, unsigned jobs = 0);

/// Bisects beta until |lambda_1 - target| < max(2 stderr, 1e-4) or the
/// bracket is narrower than min_width. params.beta is ignored. The same
/// seeds are used at every beta.
BetaCalibration calibrate_beta(ModelKind kind, const ModelParams& params,
                               const CalibrationOptions& options = {});

struct SweepPoint {
  double beta = 0;
  double lambda1 = 0;
  double std_error = 0;
  std::optional<std::string> failure;
};

/// lambda_1 on n_points evenly spaced gains in [beta_lo, beta_hi]. A point
/// whose estimate fails is marked and the sweep continues.
std::vector<SweepPoint> lyapunov_sweep(ModelKind kind, const ModelParams& params, double beta_lo,
                                       double beta_hi, std::size_t n_points, std::size_t n_seeds,
                                       const LyapunovOptions& options = {}, unsigned jobs = 0);

}  // namespace cbal
