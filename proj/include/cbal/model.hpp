#pragma once

// Euler-Maruyama steppers for the delayed, randomly modulated feedback
// balancing models. Noise is Ito: the controller force beta*R(t)*e(t-tau)
// contributes beta*nu*e(t-tau)*sqrt(dt)*N(0,1) to the base velocity per step.

#include <cmath>
#include <cstdint>

#include "cbal/delay_buffer.hpp"
#include "cbal/noise.hpp"
#include "cbal/params.hpp"

namespace cbal {

struct SingleInit {
  double x_tip = 0, v_tip = 0, x_base = 0, v_base = 0;
};

struct CoupledInit {
  double q_tip = 0, v_tip = 0;
  double q_base1 = 0, v_base1 = 0;
  double q_base2 = 0, v_base2 = 0;
};

struct NonlinearInit {
  double theta = 0, omega = 0;
};

/// Initial values of the tracking experiment. The tip/base pair of the
/// single task reuses the first base position of the coupled task because
/// the initial-value list gives no separate value for it.
inline constexpr double kExperimentTipStart = -0.5;
inline constexpr double kExperimentBase1Start = -0.6;
inline constexpr double kExperimentBase2Start = 0.6;

SingleInit experiment_single_init();
CoupledInit experiment_coupled_init();

/// Starting point for numerical (controller-driven) runs: a balancing error
/// of 0.1 on every stick, at rest.
SingleInit numerical_single_init();
CoupledInit numerical_coupled_init();
NonlinearInit numerical_nonlinear_init();

/// One stick, absolute tip/base coordinates. History holds x_tip - x_base.
struct SingleState {
  double x_tip, v_tip, x_base, v_base;
  DelayBuffer history;
  std::uint64_t steps = 0;
  double t = 0;

  double error() const noexcept { return x_tip - x_base; }
  double error_rate() const noexcept { return v_tip - v_base; }
};

/// Two sticks whose tips share one coordinate (rigid rod). History i holds
/// q_tip - q_base_i.
struct CoupledState {
  double q_tip, v_tip;
  double q_base1, v_base1;
  double q_base2, v_base2;
  DelayBuffer history1, history2;
  std::uint64_t steps = 0;
  double t = 0;

  double error1() const noexcept { return q_tip - q_base1; }
  double error2() const noexcept { return q_tip - q_base2; }
  double error_rate1() const noexcept { return v_tip - v_base1; }
  double error_rate2() const noexcept { return v_tip - v_base2; }
};

/// Stick angle with sin-nonlinearity. History holds theta.
struct NonlinearState {
  double theta, omega;
  DelayBuffer history;
  std::uint64_t steps = 0;
  double t = 0;
};

/// Balancing errors integrated directly in relative form (the reduced
/// equations). Used as a consistency reference and by the Lyapunov estimator.
struct RelativeSingleState {
  double error, rate;
  DelayBuffer history;
  std::uint64_t steps = 0;
};

struct RelativeCoupledState {
  double error1, rate1, error2, rate2;
  DelayBuffer history1, history2;
  std::uint64_t steps = 0;
};

/// Builds a state with t = 0 and a constant pre-history equal to the initial
/// relative displacement. Validates params; rejects non-finite initials.
SingleState init_state(const ModelParams& params, const SingleInit& init);
CoupledState init_state(const ModelParams& params, const CoupledInit& init);
NonlinearState init_state(const ModelParams& params, const NonlinearInit& init);
RelativeSingleState init_relative(const ModelParams& params, double error, double rate);
RelativeCoupledState init_relative(const ModelParams& params, double error1, double rate1,
                                   double error2, double rate2);

namespace detail {

[[noreturn]] void report_divergence(double t);

inline bool within_guard(double v) noexcept { return std::abs(v) <= kDivergenceGuard; }

inline void advance_clock(std::uint64_t& steps, double& t, double dt) noexcept {
  ++steps;
  t = static_cast<double>(steps) * dt;
}

}  // namespace detail

/// One step of the single model driven by the standard normal deviate `xi`.
inline void step_single(SingleState& s, const ModelParams& p, double xi) {
  const double error = s.x_tip - s.x_base;
  const double delayed = s.history.delayed();
  const double x_tip = s.x_tip + p.dt * s.v_tip;
  const double x_base = s.x_base + p.dt * s.v_base;
  s.v_tip += p.dt * (-p.gamma * s.v_tip + p.alpha * error);
  s.v_base += p.dt * (-p.gamma * s.v_base + p.beta * delayed) +
              p.beta * p.nu * delayed * std::sqrt(p.dt) * xi;
  s.x_tip = x_tip;
  s.x_base = x_base;
  s.history.push(x_tip - x_base);
  detail::advance_clock(s.steps, s.t, p.dt);
  if (!(detail::within_guard(s.x_tip) && detail::within_guard(s.x_base) &&
        detail::within_guard(s.v_tip) && detail::within_guard(s.v_base)))
    detail::report_divergence(s.t);
}

inline void step_single(SingleState& s, const ModelParams& p, NoiseStream& noise) {
  step_single(s, p, noise());
}

/// One step of the coupled model; xi1/xi2 drive controller 1/2.
inline void step_coupled(CoupledState& s, const ModelParams& p, double xi1, double xi2) {
  const double e1 = s.q_tip - s.q_base1;
  const double e2 = s.q_tip - s.q_base2;
  const double d1 = s.history1.delayed();
  const double d2 = s.history2.delayed();
  const double sqrt_dt = std::sqrt(p.dt);
  const double q_tip = s.q_tip + p.dt * s.v_tip;
  const double q_base1 = s.q_base1 + p.dt * s.v_base1;
  const double q_base2 = s.q_base2 + p.dt * s.v_base2;
  s.v_tip += p.dt * (-p.gamma * s.v_tip + 0.5 * p.alpha * (e1 + e2));
  s.v_base1 += p.dt * (-p.gamma * s.v_base1 + p.beta * d1) + p.beta * p.nu * d1 * sqrt_dt * xi1;
  s.v_base2 += p.dt * (-p.gamma * s.v_base2 + p.beta * d2) + p.beta * p.nu * d2 * sqrt_dt * xi2;
  s.q_tip = q_tip;
  s.q_base1 = q_base1;
  s.q_base2 = q_base2;
  s.history1.push(q_tip - q_base1);
  s.history2.push(q_tip - q_base2);
  detail::advance_clock(s.steps, s.t, p.dt);
  if (!(detail::within_guard(s.q_tip) && detail::within_guard(s.v_tip) &&
        detail::within_guard(s.q_base1) && detail::within_guard(s.v_base1) &&
        detail::within_guard(s.q_base2) && detail::within_guard(s.v_base2)))
    detail::report_divergence(s.t);
}

inline void step_coupled(CoupledState& s, const ModelParams& p, NoiseStream& noise1,
                         NoiseStream& noise2) {
  const double xi1 = noise1();
  step_coupled(s, p, xi1, noise2());
}

/// theta'' + gamma theta' - alpha sin(theta) + beta R(t) theta(t - tau) = 0
inline void step_nonlinear(NonlinearState& s, const ModelParams& p, double xi) {
  const double delayed = s.history.delayed();
  const double theta = s.theta + p.dt * s.omega;
  s.omega += p.dt * (-p.gamma * s.omega + p.alpha * std::sin(s.theta) - p.beta * delayed) -
             p.beta * p.nu * delayed * std::sqrt(p.dt) * xi;
  s.theta = theta;
  s.history.push(theta);
  detail::advance_clock(s.steps, s.t, p.dt);
  if (!(detail::within_guard(s.theta) && detail::within_guard(s.omega)))
    detail::report_divergence(s.t);
}

inline void step_nonlinear(NonlinearState& s, const ModelParams& p, NoiseStream& noise) {
  step_nonlinear(s, p, noise());
}

inline void step_relative(RelativeSingleState& s, const ModelParams& p, double xi) {
  const double delayed = s.history.delayed();
  const double error = s.error + p.dt * s.rate;
  s.rate += p.dt * (-p.gamma * s.rate + p.alpha * s.error - p.beta * delayed) -
            p.beta * p.nu * delayed * std::sqrt(p.dt) * xi;
  s.error = error;
  s.history.push(error);
  ++s.steps;
}

inline void step_relative(RelativeCoupledState& s, const ModelParams& p, double xi1, double xi2) {
  const double d1 = s.history1.delayed();
  const double d2 = s.history2.delayed();
  const double sqrt_dt = std::sqrt(p.dt);
  const double shared = 0.5 * p.alpha * (s.error1 + s.error2);
  const double e1 = s.error1 + p.dt * s.rate1;
  const double e2 = s.error2 + p.dt * s.rate2;
  s.rate1 += p.dt * (-p.gamma * s.rate1 + shared - p.beta * d1) - p.beta * p.nu * d1 * sqrt_dt * xi1;
  s.rate2 += p.dt * (-p.gamma * s.rate2 + shared - p.beta * d2) - p.beta * p.nu * d2 * sqrt_dt * xi2;
  s.error1 = e1;
  s.error2 = e2;
  s.history1.push(e1);
  s.history2.push(e2);
  ++s.steps;
}

/// Human-driven step: the base follows `base_position` (zero-order hold
/// over the step), its velocity is the backward difference, and the tip is
/// integrated as usual. No noise enters.
void drive_base(SingleState& s, const ModelParams& p, double base_position);
void drive_base(CoupledState& s, const ModelParams& p, double base1_position,
                double base2_position);

}  // namespace cbal
