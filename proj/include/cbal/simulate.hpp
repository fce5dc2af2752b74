#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "cbal/model.hpp"
#include "cbal/series.hpp"

namespace cbal {

using InitialConditions = std::variant<std::monostate, SingleInit, CoupledInit, NonlinearInit>;

struct SimulationRequest {
  ModelKind kind = ModelKind::single;
  ModelParams params;
  double horizon = 0.0;                 // seconds
  std::vector<std::string> channels;    // empty = every channel of the kind
  std::size_t downsample = 1;           // keep every n-th integration step
  InitialConditions initial;            // monostate = numerical defaults
};

struct SimulationResult {
  ModelKind kind = ModelKind::single;
  double horizon = 0.0;
  std::vector<TimeSeries> series;
  std::optional<double> diverged_at;

  const TimeSeries& channel(std::string_view name) const;
  bool diverged() const noexcept { return diverged_at.has_value(); }
};

/// Channel names a model kind can record.
///
/// single:    x_T x_M v_T v_M dx dx_dot u
/// coupled:   q_T v_qT q_M1 q_M2 v_M1 v_M2 dq1 dq2 dq1_dot dq2_dot u1 u2
/// nonlinear: theta omega u
///
/// u channels hold the realised control force beta*(1 + nu*xi/sqrt(dt))*e(t-tau).
std::vector<std::string> available_channels(ModelKind kind);

/// Runs a model from t = 0 for `horizon` seconds. Sample k is the state
/// before step k*downsample, so the series cover [0, horizon). A divergence
/// stops the run and keeps the samples recorded so far.
SimulationResult simulate(const SimulationRequest& request);

}  // namespace cbal
