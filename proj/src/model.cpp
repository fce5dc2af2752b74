#include "cbal/model.hpp"

#include <initializer_list>
#include <string>

namespace cbal {

SingleInit experiment_single_init() {
  return {kExperimentTipStart, 0.0, kExperimentBase1Start, 0.0};
}

CoupledInit experiment_coupled_init() {
  return {kExperimentTipStart, 0.0, kExperimentBase1Start, 0.0, kExperimentBase2Start, 0.0};
}

SingleInit numerical_single_init() { return {0.1, 0.0, 0.0, 0.0}; }
CoupledInit numerical_coupled_init() { return {0.1, 0.0, 0.0, 0.0, 0.0, 0.0}; }
NonlinearInit numerical_nonlinear_init() { return {0.1, 0.0}; }

namespace {

void require_finite(std::initializer_list<double> values, const char* what) {
  for (double v : values)
    if (!std::isfinite(v)) throw ValidationError(std::string("non-finite initial value in ") + what);
}

}  // namespace

namespace detail {

void report_divergence(double t) {
  throw DivergenceError(t, "state exceeded divergence guard at t=" + std::to_string(t));
}

}  // namespace detail

SingleState init_state(const ModelParams& params, const SingleInit& init) {
  params.validate();
  require_finite({init.x_tip, init.v_tip, init.x_base, init.v_base}, "single state");
  return SingleState{init.x_tip, init.v_tip, init.x_base, init.v_base,
                     DelayBuffer(params.delay_steps(), init.x_tip - init.x_base)};
}

CoupledState init_state(const ModelParams& params, const CoupledInit& init) {
  params.validate();
  require_finite({init.q_tip, init.v_tip, init.q_base1, init.v_base1, init.q_base2, init.v_base2},
                 "coupled state");
  const std::size_t n = params.delay_steps();
  return CoupledState{init.q_tip,   init.v_tip,
                      init.q_base1, init.v_base1,
                      init.q_base2, init.v_base2,
                      DelayBuffer(n, init.q_tip - init.q_base1),
                      DelayBuffer(n, init.q_tip - init.q_base2)};
}

NonlinearState init_state(const ModelParams& params, const NonlinearInit& init) {
  params.validate();
  require_finite({init.theta, init.omega}, "nonlinear state");
  return NonlinearState{init.theta, init.omega, DelayBuffer(params.delay_steps(), init.theta)};
}

RelativeSingleState init_relative(const ModelParams& params, double error, double rate) {
  params.validate();
  require_finite({error, rate}, "relative state");
  return RelativeSingleState{error, rate, DelayBuffer(params.delay_steps(), error)};
}

RelativeCoupledState init_relative(const ModelParams& params, double error1, double rate1,
                                   double error2, double rate2) {
  params.validate();
  require_finite({error1, rate1, error2, rate2}, "relative state");
  const std::size_t n = params.delay_steps();
  return RelativeCoupledState{error1, rate1, error2, rate2, DelayBuffer(n, error1),
                              DelayBuffer(n, error2)};
}

void drive_base(SingleState& s, const ModelParams& p, double base_position) {
  if (!std::isfinite(base_position)) throw ValidationError("non-finite external base position");
  const double error = s.x_tip - s.x_base;
  const double x_tip = s.x_tip + p.dt * s.v_tip;
  s.v_tip += p.dt * (-p.gamma * s.v_tip + p.alpha * error);
  s.x_tip = x_tip;
  s.v_base = (base_position - s.x_base) / p.dt;
  s.x_base = base_position;
  s.history.push(s.x_tip - s.x_base);
  detail::advance_clock(s.steps, s.t, p.dt);
  if (!(detail::within_guard(s.x_tip) && detail::within_guard(s.v_tip)))
    detail::report_divergence(s.t);
}

void drive_base(CoupledState& s, const ModelParams& p, double base1_position,
                double base2_position) {
  if (!std::isfinite(base1_position) || !std::isfinite(base2_position))
    throw ValidationError("non-finite external base position");
  const double e1 = s.q_tip - s.q_base1;
  const double e2 = s.q_tip - s.q_base2;
  const double q_tip = s.q_tip + p.dt * s.v_tip;
  s.v_tip += p.dt * (-p.gamma * s.v_tip + 0.5 * p.alpha * (e1 + e2));
  s.q_tip = q_tip;
  s.v_base1 = (base1_position - s.q_base1) / p.dt;
  s.v_base2 = (base2_position - s.q_base2) / p.dt;
  s.q_base1 = base1_position;
  s.q_base2 = base2_position;
  s.history1.push(s.q_tip - s.q_base1);
  s.history2.push(s.q_tip - s.q_base2);
  detail::advance_clock(s.steps, s.t, p.dt);
  if (!(detail::within_guard(s.q_tip) && detail::within_guard(s.v_tip)))
    detail::report_divergence(s.t);
}

}  // namespace cbal
