#include "cbal/stability.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cbal/model.hpp"
#include "cbal/noise.hpp"
#include "cbal/parallel.hpp"

namespace cbal {

namespace {

double history_mean_square(const DelayBuffer& h) {
  return h.sum_of_squares() / static_cast<double>(h.capacity());
}

double state_norm(const RelativeSingleState& s, LyapunovNorm norm) {
  double sq = s.error * s.error + s.rate * s.rate;
  if (norm == LyapunovNorm::with_history) sq += history_mean_square(s.history);
  return std::sqrt(sq);
}

double state_norm(const RelativeCoupledState& s, LyapunovNorm norm) {
  double sq = s.error1 * s.error1 + s.rate1 * s.rate1 + s.error2 * s.error2 + s.rate2 * s.rate2;
  if (norm == LyapunovNorm::with_history)
    sq += history_mean_square(s.history1) + history_mean_square(s.history2);
  return std::sqrt(sq);
}

void scale_state(RelativeSingleState& s, double c) {
  s.error *= c;
  s.rate *= c;
  s.history.scale(c);
}

void scale_state(RelativeCoupledState& s, double c) {
  s.error1 *= c;
  s.rate1 *= c;
  s.error2 *= c;
  s.rate2 *= c;
  s.history1.scale(c);
  s.history2.scale(c);
}

template <class State, class Step>
LyapunovEstimate renormalized_growth(State state, Step step, const ModelParams& p,
                                     const LyapunovOptions& opt) {
  const auto total_steps = static_cast<std::uint64_t>(std::llround(opt.horizon / p.dt));
  const std::uint64_t renorms = total_steps / opt.renorm_every;
  if (renorms < opt.segments)
    throw ValidationError("horizon too short for the requested renormalization and segments");

  const double interval = static_cast<double>(opt.renorm_every) * p.dt;
  const double initial = state_norm(state, opt.norm);
  scale_state(state, 1.0 / initial);

  std::vector<double> segment_log(opt.segments, 0.0);
  std::vector<std::uint64_t> segment_count(opt.segments, 0);
  double total_log = 0;
  for (std::uint64_t r = 0; r < renorms; ++r) {
    for (std::size_t k = 0; k < opt.renorm_every; ++k) step(state);
    const double n = state_norm(state, opt.norm);
    if (!(n > 0) || !(n < kDivergenceGuard))
      throw DivergenceError(static_cast<double>((r + 1) * opt.renorm_every) * p.dt,
                            "norm left the representable range between renormalizations; "
                            "reduce renorm_every");
    const double lg = std::log(n);
    total_log += lg;
    const std::size_t seg = static_cast<std::size_t>(r * opt.segments / renorms);
    segment_log[seg] += lg;
    ++segment_count[seg];
    scale_state(state, 1.0 / n);
  }

  const double used = static_cast<double>(renorms) * interval;
  double mean = 0;
  std::vector<double> rates(opt.segments);
  for (std::size_t s = 0; s < opt.segments; ++s) {
    rates[s] = segment_log[s] / (static_cast<double>(segment_count[s]) * interval);
    mean += rates[s];
  }
  mean /= static_cast<double>(opt.segments);
  double var = 0;
  for (double r : rates) var += (r - mean) * (r - mean);
  var /= static_cast<double>(opt.segments - 1);
  return LyapunovEstimate{total_log / used, std::sqrt(var / static_cast<double>(opt.segments)),
                          used, interval};
}

}  // namespace

LyapunovEstimate largest_lyapunov(ModelKind kind, const ModelParams& p,
                                  const LyapunovOptions& opt) {
  p.validate();
  if (!(opt.horizon >= 100.0 * p.tau)) throw ValidationError("horizon must be >= 100 tau");
  if (opt.renorm_every == 0) throw ValidationError("renorm_every must be >= 1");
  if (opt.segments < 2) throw ValidationError("need at least 2 segments");

  NoiseStream noise1(p.seed, 1);
  switch (kind) {
    case ModelKind::single:
      return renormalized_growth(
          init_relative(p, 1.0, 0.0),
          [&](RelativeSingleState& s) { step_relative(s, p, noise1()); }, p, opt);
    case ModelKind::coupled: {
      NoiseStream noise2(p.seed, 2);
      return renormalized_growth(
          init_relative(p, 1.0, 0.0, 0.0, 0.0),
          [&](RelativeCoupledState& s) {
            const double xi1 = noise1();
            step_relative(s, p, xi1, noise2());
          },
          p, opt);
    }
    case ModelKind::nonlinear:
      break;
  }
  throw ValidationError("Lyapunov estimation is defined for the linear models only");
}

std::vector<std::complex<double>> characteristic_roots(double gamma, double alpha, double beta,
                                                       double tau) {
  using cd = std::complex<double>;
  if (!(gamma > 0) || !(tau >= 0) || !std::isfinite(alpha) || !std::isfinite(beta))
    throw ValidationError("characteristic_roots: invalid coefficients");
  auto f = [&](cd z) { return z * z + gamma * z - alpha + beta * std::exp(-z * tau); };
  auto df = [&](cd z) { return 2.0 * z + gamma - beta * tau * std::exp(-z * tau); };

  const double im_max = tau > 0 ? 4.0 * std::numbers::pi / tau : gamma;
  constexpr int kRe = 31, kIm = 21;
  std::vector<cd> roots;
  for (int i = 0; i < kRe; ++i) {
    for (int j = 0; j < kIm; ++j) {
      cd z(-2.0 * gamma + 3.0 * gamma * i / (kRe - 1), im_max * j / (kIm - 1));
      bool converged = false;
      for (int it = 0; it < 200; ++it) {
        const cd d = df(z);
        if (std::abs(d) == 0.0) break;
        const cd step = f(z) / d;
        z -= step;
        if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) break;
        if (std::abs(step) <= 1e-13 * std::max(1.0, std::abs(z))) {
          converged = true;
          break;
        }
      }
      if (!converged) continue;
      const double scale = std::max({1.0, std::abs(z * z), gamma * std::abs(z), std::abs(alpha)});
      if (std::abs(f(z)) > 1e-9 * scale) continue;
      // conjugate pairs: keep the upper half plane representative
      if (z.imag() < 0) z = std::conj(z);
      if (std::abs(z.imag()) < 1e-10 * std::max(1.0, std::abs(z))) z.imag(0.0);
      const bool seen = std::any_of(roots.begin(), roots.end(), [&](cd r) {
        return std::abs(r - z) <= 1e-7 * std::max(1.0, std::abs(z));
      });
      if (!seen) roots.push_back(z);
    }
  }
  std::sort(roots.begin(), roots.end(), [](cd a, cd b) { return a.real() > b.real(); });
  return roots;
}

double characteristic_root(double gamma, double alpha, double beta, double tau) {
  const auto roots = characteristic_roots(gamma, alpha, beta, tau);
  if (roots.empty()) throw ConvergenceError("Newton iteration converged from no initial guess");
  return roots.front().real();
}

LyapunovEstimate mean_lyapunov(ModelKind kind, const ModelParams& params, std::size_t n_seeds,
                               const LyapunovOptions& options, unsigned jobs) {
  if (n_seeds == 0) throw ValidationError("n_seeds must be >= 1");
  std::vector<LyapunovEstimate> runs(n_seeds);
  parallel_for(n_seeds, jobs, [&](std::size_t k) {
    ModelParams p = params;
    p.seed = params.seed + k;
    runs[k] = largest_lyapunov(kind, p, options);
  });
  if (n_seeds == 1) return runs.front();
  double mean = 0;
  for (const auto& r : runs) mean += r.lambda1;
  mean /= static_cast<double>(n_seeds);
  double var = 0;
  for (const auto& r : runs) var += (r.lambda1 - mean) * (r.lambda1 - mean);
  var /= static_cast<double>(n_seeds - 1);
  return LyapunovEstimate{mean, std::sqrt(var / static_cast<double>(n_seeds)),
                          runs.front().horizon, runs.front().renorm_interval};
}

BetaCalibration calibrate_beta(ModelKind kind, const ModelParams& params,
                               const CalibrationOptions& opt) {
  if (!(opt.beta_lo < opt.beta_hi)) throw ValidationError("calibration bracket must have lo < hi");
  BetaCalibration out;
  out.target = opt.target;
  out.bracket_lo = opt.beta_lo;
  out.bracket_hi = opt.beta_hi;

  auto evaluate = [&](double beta) {
    ModelParams p = params;
    p.beta = beta;
    const auto est = mean_lyapunov(kind, p, opt.n_seeds, opt.lyapunov, opt.jobs);
    out.trace.push_back({beta, est.lambda1, est.std_error});
    return est;
  };

  double lo = opt.beta_lo, hi = opt.beta_hi;
  const auto at_lo = evaluate(lo);
  const auto at_hi = evaluate(hi);
  const double g_lo = at_lo.lambda1 - opt.target;
  const double g_hi = at_hi.lambda1 - opt.target;
  if (g_lo * g_hi > 0)
    throw ValidationError("lambda_1 at the bracket ends does not straddle the target");
  const bool lo_above = g_lo > 0;

  auto accept = [&](const LyapunovEstimate& e) {
    return std::abs(e.lambda1 - opt.target) < std::max(2.0 * e.std_error, 1e-4);
  };

  for (std::size_t it = 0; it < opt.max_iterations; ++it) {
    const double mid = 0.5 * (lo + hi);
    const auto est = evaluate(mid);
    out.beta_star = mid;
    out.lambda1 = est.lambda1;
    out.std_error = est.std_error;
    if (accept(est) || hi - lo < opt.min_width) return out;
    if ((est.lambda1 > opt.target) == lo_above)
      lo = mid;
    else
      hi = mid;
  }
  throw ConvergenceError("calibration did not reach tolerance within max_iterations");
}

std::vector<SweepPoint> lyapunov_sweep(ModelKind kind, const ModelParams& params, double beta_lo,
                                       double beta_hi, std::size_t n_points, std::size_t n_seeds,
                                       const LyapunovOptions& options, unsigned jobs) {
  if (n_points < 2) throw ValidationError("a sweep needs at least 2 points");
  if (!(beta_lo < beta_hi)) throw ValidationError("sweep range must have lo < hi");
  std::vector<SweepPoint> table(n_points);
  for (std::size_t i = 0; i < n_points; ++i) {
    SweepPoint& pt = table[i];
    pt.beta = beta_lo + (beta_hi - beta_lo) * static_cast<double>(i) / static_cast<double>(n_points - 1);
    ModelParams p = params;
    p.beta = pt.beta;
    try {
      const auto est = mean_lyapunov(kind, p, n_seeds, options, jobs);
      pt.lambda1 = est.lambda1;
      pt.std_error = est.std_error;
    } catch (const std::exception& e) {
      pt.failure = e.what();
      pt.lambda1 = std::numeric_limits<double>::quiet_NaN();
      pt.std_error = std::numeric_limits<double>::quiet_NaN();
    }
  }
  return table;
}

}  // namespace cbal
