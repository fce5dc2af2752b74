#include "cbal/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace cbal {

TimeSeries finite_difference(const TimeSeries& series, std::string label) {
  TimeSeries out{std::vector<double>(series.size(), 0.0), series.dt_sample, std::move(label),
                 series.t0};
  for (std::size_t i = 1; i < series.size(); ++i)
    out.samples[i] = (series.samples[i] - series.samples[i - 1]) / series.dt_sample;
  return out;
}

const TimeSeries& SimulationResult::channel(std::string_view name) const {
  for (const auto& s : series)
    if (s.label == name) return s;
  throw ValidationError("channel '" + std::string(name) + "' was not recorded");
}

std::vector<std::string> available_channels(ModelKind kind) {
  switch (kind) {
    case ModelKind::single:
      return {"x_T", "x_M", "v_T", "v_M", "dx", "dx_dot", "u"};
    case ModelKind::coupled:
      return {"q_T", "v_qT", "q_M1", "q_M2", "v_M1", "v_M2",
              "dq1", "dq2", "dq1_dot", "dq2_dot", "u1", "u2"};
    case ModelKind::nonlinear:
      return {"theta", "omega", "u"};
  }
  return {};
}

namespace {

// Per-channel readout: state plus the deviates about to drive the next step.
template <class State>
using Probe = std::function<double(const State&, double xi1, double xi2)>;

struct Force {
  const ModelParams& p;
  double operator()(double delayed, double xi) const {
    return p.beta * delayed * (1.0 + p.nu * xi / std::sqrt(p.dt));
  }
};

Probe<SingleState> single_probe(std::string_view name, const ModelParams& p) {
  Force force{p};
  if (name == "x_T") return [](const SingleState& s, double, double) { return s.x_tip; };
  if (name == "x_M") return [](const SingleState& s, double, double) { return s.x_base; };
  if (name == "v_T") return [](const SingleState& s, double, double) { return s.v_tip; };
  if (name == "v_M") return [](const SingleState& s, double, double) { return s.v_base; };
  if (name == "dx") return [](const SingleState& s, double, double) { return s.error(); };
  if (name == "dx_dot") return [](const SingleState& s, double, double) { return s.error_rate(); };
  if (name == "u")
    return [force](const SingleState& s, double xi, double) { return force(s.history.delayed(), xi); };
  throw ValidationError("unknown channel '" + std::string(name) + "' for single model");
}

Probe<CoupledState> coupled_probe(std::string_view name, const ModelParams& p) {
  Force force{p};
  if (name == "q_T") return [](const CoupledState& s, double, double) { return s.q_tip; };
  if (name == "v_qT") return [](const CoupledState& s, double, double) { return s.v_tip; };
  if (name == "q_M1") return [](const CoupledState& s, double, double) { return s.q_base1; };
  if (name == "q_M2") return [](const CoupledState& s, double, double) { return s.q_base2; };
  if (name == "v_M1") return [](const CoupledState& s, double, double) { return s.v_base1; };
  if (name == "v_M2") return [](const CoupledState& s, double, double) { return s.v_base2; };
  if (name == "dq1") return [](const CoupledState& s, double, double) { return s.error1(); };
  if (name == "dq2") return [](const CoupledState& s, double, double) { return s.error2(); };
  if (name == "dq1_dot") return [](const CoupledState& s, double, double) { return s.error_rate1(); };
  if (name == "dq2_dot") return [](const CoupledState& s, double, double) { return s.error_rate2(); };
  if (name == "u1")
    return [force](const CoupledState& s, double xi1, double) { return force(s.history1.delayed(), xi1); };
  if (name == "u2")
    return [force](const CoupledState& s, double, double xi2) { return force(s.history2.delayed(), xi2); };
  throw ValidationError("unknown channel '" + std::string(name) + "' for coupled model");
}

Probe<NonlinearState> nonlinear_probe(std::string_view name, const ModelParams& p) {
  Force force{p};
  if (name == "theta") return [](const NonlinearState& s, double, double) { return s.theta; };
  if (name == "omega") return [](const NonlinearState& s, double, double) { return s.omega; };
  if (name == "u")
    return [force](const NonlinearState& s, double xi, double) { return force(s.history.delayed(), xi); };
  throw ValidationError("unknown channel '" + std::string(name) + "' for nonlinear model");
}

template <class State, class MakeProbe, class Step>
void run(const SimulationRequest& req, State state, MakeProbe make_probe, Step step,
         SimulationResult& out, std::uint64_t total_steps) {
  std::vector<Probe<State>> probes;
  for (const auto& s : out.series) probes.push_back(make_probe(s.label, req.params));
  const std::size_t n_samples = total_steps / req.downsample;
  for (auto& s : out.series) s.samples.reserve(n_samples);

  NoiseStream noise1(req.params.seed, 1);
  NoiseStream noise2(req.params.seed, 2);
  try {
    for (std::uint64_t k = 0; k < n_samples * req.downsample; ++k) {
      const double xi1 = noise1();
      const double xi2 = std::is_same_v<State, CoupledState> ? noise2() : 0.0;
      if (k % req.downsample == 0)
        for (std::size_t c = 0; c < probes.size(); ++c)
          out.series[c].samples.push_back(probes[c](state, xi1, xi2));
      step(state, xi1, xi2);
    }
  } catch (const DivergenceError& e) {
    out.diverged_at = e.time();
  }
}

}  // namespace

SimulationResult simulate(const SimulationRequest& req) {
  req.params.validate();
  if (!std::isfinite(req.horizon) || req.horizon < 0)
    throw ValidationError("horizon must be finite and >= 0");
  if (req.downsample == 0) throw ValidationError("downsample must be >= 1");

  SimulationResult out;
  out.kind = req.kind;
  out.horizon = req.horizon;
  const auto names = req.channels.empty() ? available_channels(req.kind) : req.channels;
  const double dt_sample = req.params.dt * static_cast<double>(req.downsample);
  for (const auto& name : names) out.series.push_back(TimeSeries{{}, dt_sample, name, 0.0});

  const auto total_steps = static_cast<std::uint64_t>(std::llround(req.horizon / req.params.dt));
  const ModelParams& p = req.params;

  auto pick = [&](auto fallback) {
    using Init = decltype(fallback);
    if (std::holds_alternative<std::monostate>(req.initial)) return fallback;
    if (const auto* init = std::get_if<Init>(&req.initial)) return *init;
    throw ValidationError("initial conditions do not match the model kind");
  };

  switch (req.kind) {
    case ModelKind::single:
      run(req, init_state(p, pick(numerical_single_init())), single_probe,
          [&p](SingleState& s, double xi, double) { step_single(s, p, xi); }, out, total_steps);
      break;
    case ModelKind::coupled:
      run(req, init_state(p, pick(numerical_coupled_init())), coupled_probe,
          [&p](CoupledState& s, double xi1, double xi2) { step_coupled(s, p, xi1, xi2); }, out,
          total_steps);
      break;
    case ModelKind::nonlinear:
      run(req, init_state(p, pick(numerical_nonlinear_init())), nonlinear_probe,
          [&p](NonlinearState& s, double xi, double) { step_nonlinear(s, p, xi); }, out,
          total_steps);
      break;
  }
  return out;
}

}  // namespace cbal
