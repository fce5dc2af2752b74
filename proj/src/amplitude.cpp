#include <cmath>

#include "cbal/analysis.hpp"
#include "cbal/parallel.hpp"
#include "cbal/simulate.hpp"

namespace cbal {

double rms(std::span<const double> samples) {
  if (samples.empty()) throw ValidationError("rms of an empty series");
  double s = 0;
  for (double v : samples) s += v * v;
  return std::sqrt(s / static_cast<double>(samples.size()));
}

double EnsembleRms::headline() const { return std::pow(10.0, mean_log10); }

EnsembleRms ensemble_rms(ModelKind kind, const ModelParams& params, const EnsembleOptions& opt) {
  if (opt.n_realizations < 2) throw ValidationError("ensemble needs at least 2 realizations");
  if (kind == ModelKind::nonlinear) throw ValidationError("RMS ensembles use the linear models");
  if (!(opt.horizon > 0)) throw ValidationError("ensemble horizon must be > 0");
  params.validate();
  const std::string channel =
      !opt.channel.empty() ? opt.channel : (kind == ModelKind::single ? "dx" : "dq1");

  struct Outcome {
    double rms = 0;
    bool diverged = false;
  };
  std::vector<Outcome> outcomes(opt.n_realizations);
  parallel_for(opt.n_realizations, opt.jobs, [&](std::size_t r) {
    SimulationRequest req;
    req.kind = kind;
    req.params = params;
    req.params.seed = params.seed + r;
    req.horizon = opt.horizon;
    req.downsample = opt.downsample;
    req.channels = {channel};
    const auto run = simulate(req);
    if (run.diverged())
      outcomes[r].diverged = true;
    else
      outcomes[r].rms = rms(run.series.front());
  });

  EnsembleRms out;
  double sum_log = 0;
  for (std::size_t r = 0; r < outcomes.size(); ++r) {
    const std::uint64_t seed = params.seed + r;
    if (outcomes[r].diverged) {
      out.diverged_seeds.push_back(seed);
      continue;
    }
    out.seeds.push_back(seed);
    out.rms.push_back(outcomes[r].rms);
    sum_log += std::log10(outcomes[r].rms);
  }
  if (out.rms.empty()) throw DivergenceError(opt.horizon, "every realization diverged");
  out.mean_log10 = sum_log / static_cast<double>(out.rms.size());
  return out;
}

PooledSamples pooled_channel(ModelKind kind, const ModelParams& params, const EnsembleOptions& opt) {
  if (opt.n_realizations < 1) throw ValidationError("need at least one realization");
  if (opt.channel.empty()) throw ValidationError("pooled samples need a channel name");
  if (!(opt.horizon > 0)) throw ValidationError("horizon must be > 0");
  params.validate();

  std::vector<std::vector<double>> parts(opt.n_realizations);
  std::vector<char> diverged(opt.n_realizations, 0);
  parallel_for(opt.n_realizations, opt.jobs, [&](std::size_t r) {
    SimulationRequest req;
    req.kind = kind;
    req.params = params;
    req.params.seed = params.seed + r;
    req.horizon = opt.horizon;
    req.downsample = opt.downsample;
    req.channels = {opt.channel};
    auto run = simulate(req);
    if (run.diverged())
      diverged[r] = 1;
    else
      parts[r] = std::move(run.series.front().samples);
  });

  PooledSamples out;
  for (std::size_t r = 0; r < parts.size(); ++r) {
    if (diverged[r]) {
      out.diverged_seeds.push_back(params.seed + r);
      continue;
    }
    out.values.insert(out.values.end(), parts[r].begin(), parts[r].end());
    ++out.realizations;
  }
  if (out.realizations == 0) throw DivergenceError(opt.horizon, "every realization diverged");
  return out;
}

}  // namespace cbal
