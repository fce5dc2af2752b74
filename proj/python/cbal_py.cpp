#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "cbal/analysis.hpp"
#include "cbal/experiment.hpp"
#include "cbal/simulate.hpp"
#include "cbal/stability.hpp"
#include "cbal/trial_report.hpp"
#include "cbal/wire.hpp"

namespace py = pybind11;
using namespace cbal;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

py::array_t<double> to_array(const std::vector<double>& v) {
  py::array_t<double> out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

std::vector<double> to_vector(const Array& a) {
  if (a.ndim() != 1) throw ValidationError("expected a 1-d array");
  return {a.data(), a.data() + a.size()};
}

TimeSeries series(const Array& a, double dt, const std::string& label = "") {
  return TimeSeries{to_vector(a), dt, label, 0.0};
}

ModelKind kind_of(const std::string& name) { return parse_model_kind(name); }

py::dict trial_dict(const TrialRecord& r, const std::vector<std::string>& warnings) {
  py::dict d;
  d["session"] = r.session_code;
  d["subjects"] = r.subjects;
  d["mode"] = std::string(to_string(r.config.mode));
  d["tick_rate"] = r.config.tick_rate;
  d["cause"] = r.cause ? py::object(py::str(std::string(to_string(*r.cause)))) : py::object(py::none());
  d["duration"] = r.duration();
  d["tip"] = to_array(replay(r, "tip").samples);
  py::list bases, errors;
  for (std::size_t i = 1; i <= r.subjects.size(); ++i) {
    bases.append(to_array(replay(r, "base" + std::to_string(i)).samples));
    errors.append(to_array(replay(r, "error" + std::to_string(i)).samples));
  }
  d["bases"] = bases;
  d["errors"] = errors;
  d["warnings"] = warnings;
  return d;
}

py::dict stat_dict(const TrialStat& s) {
  py::dict d;
  d["source"] = s.source;
  d["session"] = s.session;
  d["subject"] = s.subject;
  d["subject_index"] = s.subject_index;
  d["mode"] = std::string(to_string(s.mode));
  d["tau_hat"] = s.tau_hat ? py::object(py::float_(*s.tau_hat)) : py::object(py::none());
  d["rms"] = s.rms;
  d["duration"] = s.duration;
  d["cause"] = std::string(to_string(s.cause));
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Single and coupled balancing models: simulation, stability and analysis";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<DivergenceError>(m, "DivergenceError", PyExc_ArithmeticError);
  py::register_exception<TrialFormatError>(m, "TrialFormatError", PyExc_ValueError);
  py::register_exception<wire::ProtocolError>(m, "ProtocolError", PyExc_ValueError);

  m.attr("CALIBRATED_SINGLE_BETA") = kCalibratedSingleBeta;
  m.attr("CALIBRATED_COUPLED_BETA") = kCalibratedCoupledBeta;

  py::class_<ModelParams>(m, "ModelParams")
      .def(py::init([](double gamma, double alpha, double beta, double nu, double tau, double dt,
                       std::uint64_t seed) {
             ModelParams p{gamma, alpha, beta, nu, tau, dt, seed};
             p.validate();
             return p;
           }),
           py::arg("gamma") = 50.0, py::arg("alpha") = 22.0, py::arg("beta") = kCalibratedSingleBeta,
           py::arg("nu") = 0.6, py::arg("tau") = 0.1, py::arg("dt") = 1e-3, py::arg("seed") = 1)
      .def_readwrite("gamma", &ModelParams::gamma)
      .def_readwrite("alpha", &ModelParams::alpha)
      .def_readwrite("beta", &ModelParams::beta)
      .def_readwrite("nu", &ModelParams::nu)
      .def_readwrite("tau", &ModelParams::tau)
      .def_readwrite("dt", &ModelParams::dt)
      .def_readwrite("seed", &ModelParams::seed)
      .def("validate", &ModelParams::validate)
      .def("__eq__", [](const ModelParams& a, const ModelParams& b) { return a == b; })
      .def("__repr__", [](const ModelParams& p) {
        return "ModelParams(gamma=" + std::to_string(p.gamma) + ", alpha=" + std::to_string(p.alpha) +
               ", beta=" + std::to_string(p.beta) + ", nu=" + std::to_string(p.nu) +
               ", tau=" + std::to_string(p.tau) + ", dt=" + std::to_string(p.dt) +
               ", seed=" + std::to_string(p.seed) + ")";
      });

  m.def("available_channels", [](const std::string& kind) { return available_channels(kind_of(kind)); },
        py::arg("kind"));

  m.def(
      "simulate",
      [](const std::string& kind, const ModelParams& params, double horizon, std::vector<std::string> channels,
         std::size_t downsample) {
        SimulationRequest q;
        q.kind = kind_of(kind);
        q.params = params;
        q.horizon = horizon;
        q.channels = std::move(channels);
        q.downsample = downsample;
        SimulationResult r;
        {
          py::gil_scoped_release unlocked;
          r = simulate(q);
        }
        py::dict out;
        for (const auto& s : r.series) out[py::str(s.label)] = to_array(s.samples);
        py::dict d;
        d["channels"] = out;
        d["dt_sample"] = r.series.empty() ? params.dt * static_cast<double>(downsample) : r.series.front().dt_sample;
        d["diverged_at"] = r.diverged_at ? py::object(py::float_(*r.diverged_at)) : py::object(py::none());
        return d;
      },
      py::arg("kind"), py::arg("params") = ModelParams{}, py::arg("horizon") = 100.0,
      py::arg("channels") = std::vector<std::string>{}, py::arg("downsample") = 1,
      "Run one realization; returns {'channels': {name: array}, 'dt_sample', 'diverged_at'}");

  // ---------------------------------------------------------------- stability
  m.def("characteristic_root", &characteristic_root, py::arg("gamma"), py::arg("alpha"), py::arg("beta"),
        py::arg("tau"));

  m.def(
      "largest_lyapunov",
      [](const std::string& kind, const ModelParams& params, double horizon, std::size_t renorm_every,
         std::size_t segments, std::size_t n_seeds) {
        LyapunovOptions o;
        o.horizon = horizon;
        o.renorm_every = renorm_every;
        o.segments = segments;
        py::gil_scoped_release unlocked;
        const auto e = mean_lyapunov(kind_of(kind), params, n_seeds, o);
        return std::pair{e.lambda1, e.std_error};
      },
      py::arg("kind"), py::arg("params") = ModelParams{}, py::arg("horizon") = 2e4, py::arg("renorm_every") = 100,
      py::arg("segments") = 20, py::arg("n_seeds") = 1, "Seed-averaged (lambda1, std_error)");

  m.def(
      "calibrate_beta",
      [](const std::string& kind, const ModelParams& params, double target, double beta_lo, double beta_hi,
         std::size_t n_seeds, double horizon) {
        CalibrationOptions o;
        o.target = target;
        o.beta_lo = beta_lo;
        o.beta_hi = beta_hi;
        o.n_seeds = n_seeds;
        o.lyapunov.horizon = horizon;
        BetaCalibration c;
        {
          py::gil_scoped_release unlocked;
          c = calibrate_beta(kind_of(kind), params, o);
        }
        py::dict d;
        d["beta_star"] = c.beta_star;
        d["lambda1"] = c.lambda1;
        d["std_error"] = c.std_error;
        d["bracket"] = std::pair{c.bracket_lo, c.bracket_hi};
        py::list trace;
        for (const auto& s : c.trace) trace.append(py::make_tuple(s.beta, s.lambda1, s.std_error));
        d["trace"] = trace;
        return d;
      },
      py::arg("kind"), py::arg("params") = ModelParams{}, py::arg("target") = 5e-4, py::arg("beta_lo") = 18.0,
      py::arg("beta_hi") = 24.0, py::arg("n_seeds") = 8, py::arg("horizon") = 2e4);

  // ---------------------------------------------------------------- analysis
  m.def("rms", [](const Array& x) { return rms(to_vector(x)); }, py::arg("x"));

  m.def(
      "ensemble_rms",
      [](const std::string& kind, const ModelParams& params, std::size_t n, double horizon, std::size_t downsample) {
        EnsembleOptions o;
        o.n_realizations = n;
        o.horizon = horizon;
        o.downsample = downsample;
        EnsembleRms e;
        {
          py::gil_scoped_release unlocked;
          e = ensemble_rms(kind_of(kind), params, o);
        }
        py::dict d;
        d["rms"] = to_array(e.rms);
        d["seeds"] = e.seeds;
        d["diverged_seeds"] = e.diverged_seeds;
        d["mean_log10"] = e.mean_log10;
        return d;
      },
      py::arg("kind"), py::arg("params") = ModelParams{}, py::arg("n") = 500, py::arg("horizon") = 1200.0,
      py::arg("downsample") = 10);

  m.def(
      "power_spectrum",
      [](const Array& x, double dt, std::size_t segment, double overlap) {
        const auto s = power_spectrum(series(x, dt), segment, overlap);
        return std::pair{to_array(s.frequency), to_array(s.power)};
      },
      py::arg("x"), py::arg("dt"), py::arg("segment") = 16384, py::arg("overlap") = 0.5,
      "Welch estimate; returns (frequency, power)");

  m.def(
      "fit_two_regime_slopes",
      [](const Array& frequency, const Array& power, double f_lo, double f_hi, std::size_t bins_per_decade,
         std::size_t breakpoints) {
        PowerSpectrum s;
        s.frequency = to_vector(frequency);
        s.power = to_vector(power);
        const auto f = fit_two_regime_slopes(s, {f_lo, f_hi, bins_per_decade, breakpoints});
        py::dict d;
        d["slope_low"] = f.slope_low;
        d["slope_high"] = f.slope_high;
        d["breakpoint"] = f.breakpoint;
        d["single_slope"] = f.single_slope;
        d["improvement"] = f.improvement;
        d["second_regime"] = f.second_regime;
        return d;
      },
      py::arg("frequency"), py::arg("power"), py::arg("f_lo") = 0.01, py::arg("f_hi") = 10.0,
      py::arg("bins_per_decade") = 20, py::arg("breakpoints") = 60);

  m.def(
      "density_ratio",
      [](const Array& a, const Array& b, std::size_t bins, double half_range, double central) {
        DensityRatioOptions o;
        o.bins = bins;
        o.half_range = half_range;
        const auto r = density_ratio(to_vector(a), to_vector(b), o);
        std::vector<double> c, ratio;
        for (const auto& bin : r.bins) {
          c.push_back(bin.center);
          ratio.push_back(bin.ratio);
        }
        py::dict d;
        d["center"] = to_array(c);
        d["ratio"] = to_array(ratio);
        d["central_mean"] = r.central_mean(central);
        return d;
      },
      py::arg("a"), py::arg("b"), py::arg("bins") = 101, py::arg("half_range") = 0.0, py::arg("central") = 0.1);

  m.def(
      "stcc",
      [](const Array& x, const Array& y, double dt, double t, double window, double lag_min, double lag_max) {
        const auto r = stcc(series(x, dt), series(y, dt), t, window, {lag_min, lag_max});
        return std::pair{to_array(r.lag), to_array(r.coefficient)};
      },
      py::arg("x"), py::arg("y"), py::arg("dt"), py::arg("t"), py::arg("window"), py::arg("lag_min") = 0.0,
      py::arg("lag_max") = 0.5, "Short-time cross-correlation; returns (lag, coefficient)");

  m.def(
      "first_dominant_peak",
      [](const Array& lag, const Array& coefficient, double lo, double hi, double prominence) {
        StccResult r;
        r.lag = to_vector(lag);
        r.coefficient = to_vector(coefficient);
        return first_dominant_peak(r, lo, hi, prominence);
      },
      py::arg("lag"), py::arg("coefficient"), py::arg("lo") = 0.0, py::arg("hi") = 0.5, py::arg("prominence") = 0.8);

  // ---------------------------------------------------------------- experiment
  m.def(
      "model_to_px", [](double x, int width) {
        SessionConfig c;
        c.screen_width = width;
        return model_to_px(x, c);
      },
      py::arg("x"), py::arg("screen_width") = 1200);
  m.def(
      "px_to_model", [](int px, int width) {
        SessionConfig c;
        c.screen_width = width;
        return px_to_model(px, c);
      },
      py::arg("px"), py::arg("screen_width") = 1200);

  m.def(
      "load_trial",
      [](const std::filesystem::path& path) {
        const auto r = load(path);
        return trial_dict(r.record, r.warnings);
      },
      py::arg("path"), "Read a .trial.jsonl file");

  m.def(
      "analyze_trials",
      [](const std::vector<std::filesystem::path>& paths, double window) {
        std::vector<LabeledRecord> records;
        for (const auto& p : paths) records.push_back({p.filename().string(), load(p).record});
        TrialReportOptions o;
        o.window = window;
        const auto report = trial_report(records, o);
        py::list trials, excluded;
        for (const auto& t : report.trials) trials.append(stat_dict(t));
        for (const auto& e : report.excluded) excluded.append(py::make_tuple(e.source, e.reason));
        py::dict d;
        d["trials"] = trials;
        d["excluded"] = excluded;
        return d;
      },
      py::arg("paths"), py::arg("window") = 5.0);

  m.def(
      "message_type", [](const std::string& text) { return std::string(wire::type_name(wire::decode(text))); },
      py::arg("text"), "Type of a protocol message; raises ProtocolError if malformed");
  m.def(
      "canonical_message", [](const std::string& text) { return wire::encode(wire::decode(text)); },
      py::arg("text"), "Re-encode a protocol message in canonical form");
}
