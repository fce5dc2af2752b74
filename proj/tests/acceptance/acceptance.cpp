// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance [--only NAME] [--calibration-file PATH]
//
// Gains calibrated by the "calibration" criterion are cached in the
// calibration file and reused by the criteria that need matched exponents.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <sys/wait.h>

#include "cbal/analysis.hpp"
#include "cbal/experiment.hpp"
#include "cbal/server.hpp"
#include "cbal/simulate.hpp"
#include "cbal/stability.hpp"
#include "cbal/trial_report.hpp"

using namespace cbal;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

fs::path work_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("cbal-acceptance-" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(CBAL_CLI) + " " + args + " >" + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

// ---------------------------------------------------------------- calibration

struct Gains {
  double single = 0, coupled = 0;
};

fs::path g_calibration_file;

Verdict calibration() {
  const auto dir = work_dir("calibration");
  const auto t0 = Clock::now();
  std::map<std::string, double> beta;
  for (const std::string kind : {"single", "coupled"}) {
    const int rc = run_cli("calibrate --kind " + kind + " --target 5e-4 --seeds 8 --horizon 20000 --name " + kind +
                               " --out " + dir.string(),
                           dir / (kind + ".log"));
    if (rc != 0) return {false, "calibrate --kind " + kind + " exited with " + std::to_string(rc)};
    beta[kind] = read_json(dir / (kind + ".manifest.json"))["result"]["beta_star"].get<double>();
  }
  const double runtime = seconds_since(t0);
  if (!g_calibration_file.empty()) {
    std::ofstream(g_calibration_file) << json{{"single", beta["single"]}, {"coupled", beta["coupled"]}}.dump(2);
  }
  const bool in_single = beta["single"] >= 19.3 && beta["single"] <= 21.3;
  const bool in_coupled = beta["coupled"] >= 20.0 && beta["coupled"] <= 22.1;
  const bool ordered = beta["coupled"] > beta["single"];
  const bool fast = runtime <= 1800;
  return {in_single && in_coupled && ordered && fast,
          fmt("beta*_single = %.3f in [19.3, 21.3]: %s; beta*_coupled = %.3f in [20.0, 22.1]: %s; coupled > single: %s; "
              "runtime %.0f s <= 1800 s",
              beta["single"], in_single ? "yes" : "no", beta["coupled"], in_coupled ? "yes" : "no",
              ordered ? "yes" : "no", runtime)};
}

Gains calibrated_gains() {
  if (!g_calibration_file.empty() && fs::exists(g_calibration_file)) {
    const auto j = read_json(g_calibration_file);
    return {j["single"].get<double>(), j["coupled"].get<double>()};
  }
  std::cerr << "note: no cached calibration, calibrating now\n";
  ModelParams p;
  const CalibrationOptions o;
  return {calibrate_beta(ModelKind::single, p, o).beta_star, calibrate_beta(ModelKind::coupled, p, o).beta_star};
}

ModelParams at_gain(double beta) {
  ModelParams p;
  p.beta = beta;
  return p;
}

// ---------------------------------------------------------------- oracle

Verdict oracle() {
  ModelParams p;
  p.nu = 0;
  LyapunovOptions o;  // 2e4 s, renormalize every 100 steps, 20 segments
  bool within = true;
  std::string worst_detail;
  double worst = 0;
  int passed = 0;
  std::map<double, double> single_at;
  for (int i = 0; i < 10; ++i) {
    p.beta = 18.0 + 6.0 * i / 9.0;
    const double root = characteristic_root(p.gamma, p.alpha, p.beta, p.tau);
    for (auto kind : {ModelKind::single, ModelKind::coupled}) {
      const auto e = largest_lyapunov(kind, p, o);
      if (kind == ModelKind::single) single_at[p.beta] = e.lambda1;
      const double gap = std::abs(e.lambda1 - root);
      // the root solver's round-off (~1e-16) when both sides are exactly zero
      const bool ok = gap <= std::max(2 * e.std_error, 1e-12);
      within = within && ok;
      passed += ok;
      const double ratio = ok ? 0 : gap / std::max(e.std_error, 1e-300);
      if (ratio > worst) {
        worst = ratio;
        worst_detail = fmt("%s beta=%.3f: lambda1=%.7f root=%.7f |diff|=%.2e stderr=%.2e", std::string(to_string(kind)).c_str(),
                           p.beta, e.lambda1, root, gap, e.std_error);
      }
    }
  }
  // grid point 6 is beta = alpha
  double at_alpha = NAN;
  bool below_pos = true, above_neg = true;
  for (const auto& [beta, lambda] : single_at) {
    if (std::abs(beta - 22.0) < 1e-12) at_alpha = lambda;
    else if (beta < 22.0) below_pos = below_pos && lambda > 0;
    else above_neg = above_neg && lambda < 0;
  }
  const bool sign_change = std::abs(at_alpha) < 1e-12 && below_pos && above_neg;
  return {within && sign_change,
          fmt("%d/20 points within 2 stderr (worst |diff|/stderr = %.3g, %s); lambda1(beta=22) = %.1e, sign change at "
              "alpha: %s",
              passed, worst, worst_detail.c_str(), at_alpha, sign_change ? "yes" : "no")};
}

// ---------------------------------------------------------------- RMS gap

Verdict rms_gap() {
  const Gains g = calibrated_gains();
  EnsembleOptions o;  // 500 realizations x 1200 s
  const auto t0 = Clock::now();
  const auto s = ensemble_rms(ModelKind::single, at_gain(g.single), o);
  const auto c = ensemble_rms(ModelKind::coupled, at_gain(g.coupled), o);
  const double runtime = seconds_since(t0);
  const double gap = c.mean_log10 - s.mean_log10;
  const bool pass = gap <= -2.0 && runtime <= 3600;
  return {pass, fmt("mean log10 RMS single = %.3f (%zu runs, %zu diverged), coupled = %.3f (%zu runs, %zu diverged); "
                    "coupled/single = 10^%.2f, bar <= 10^-2; runtime %.0f s <= 3600 s",
                    s.mean_log10, s.rms.size(), s.diverged_seeds.size(), c.mean_log10, c.rms.size(), c.diverged_seeds.size(),
                    gap, runtime)};
}

// ---------------------------------------------------------------- velocity ratio

Verdict velocity_ratio() {
  const Gains g = calibrated_gains();
  EnsembleOptions o;
  o.n_realizations = 100;
  o.channel = "dx_dot";
  const auto s = pooled_channel(ModelKind::single, at_gain(g.single), o);
  o.channel = "dq1_dot";
  const auto c = pooled_channel(ModelKind::coupled, at_gain(g.coupled), o);
  const auto r = density_ratio(c.values, s.values);
  const double central = r.central_mean(0.1);
  return {central >= 1.5 && central <= 2.5,
          fmt("p(dq1_dot)/p(dx_dot) over the central 10%% = %.3f, bar [1.5, 2.5] (grid +-%.3g, %zu bins)", central,
              r.half_range, r.bins.size())};
}

// ---------------------------------------------------------------- spectra

Verdict spectral_slopes() {
  const Gains g = calibrated_gains();
  bool pass = true;
  std::string detail;
  for (auto kind : {ModelKind::single, ModelKind::coupled}) {
    SimulationRequest q;
    q.kind = kind;
    q.params = at_gain(kind == ModelKind::single ? g.single : g.coupled);
    q.horizon = 1e4;  // ~120 segments; longer coupled runs reach the divergence guard
    q.downsample = 10;
    q.channels = {kind == ModelKind::single ? "dx" : "dq1"};
    const auto sim = simulate(q);
    const auto spec = power_spectrum(sim.series.front(), 1 << 14, 0.5);
    const auto fit = fit_two_regime_slopes(spec, {0.01, 10.0});
    const bool ok = fit.slope_low >= -0.7 && fit.slope_low <= -0.3 && fit.improvement >= 0.05 && !sim.diverged();
    pass = pass && ok;
    detail += fmt("%s: low slope %.2f, high slope %.2f, breakpoint %.3g Hz, improvement %.0f%%%s; ",
                  std::string(to_string(kind)).c_str(), fit.slope_low, fit.slope_high, fit.breakpoint, 100 * fit.improvement,
                  sim.diverged() ? fmt(", diverged at %.0f s", *sim.diverged_at).c_str() : "");
  }
  return {pass, detail + "bar: low slope in [-0.7, -0.3] and improvement >= 5%"};
}

// ---------------------------------------------------------------- peak densities

Verdict peak_densities() {
  const Gains g = calibrated_gains();
  PeakDensityOptions o;  // 100 realizations over [0, 1200] s
  const auto s = peak_density(ModelKind::single, at_gain(g.single), o);
  const auto c = peak_density(ModelKind::coupled, at_gain(g.coupled), o);
  const double hs = s.density[s.mode()], hc = c.density[c.mode()];
  const double ls = s.center(s.mode()), lc = c.center(c.mode());
  const double height = hc / hs;
  const double shorter = 1.0 - lc / ls;
  const double ms = s.mass_below(0.1), mc = c.mass_below(0.1);
  const bool h_ok = std::abs(height - 1.38) <= 0.15;
  const bool l_ok = std::abs(shorter - 0.20) <= 0.10;
  const bool m_ok = ms > 0 && mc > 0;
  return {h_ok && l_ok && m_ok,
          fmt("peak height coupled/single = %.2f (bar 1.38 +- 0.15): %s; mode at %.3f s vs %.3f s, %.0f%% shorter (bar 20 +- "
              "10): %s; mass below tau = %.2f / %.2f: %s",
              height, h_ok ? "ok" : "no", lc, ls, 100 * shorter, l_ok ? "ok" : "no", ms, mc, m_ok ? "ok" : "no")};
}

// ---------------------------------------------------------------- STCC

Verdict stcc_suite() {
  SimulationRequest q;
  q.horizon = 600;
  q.downsample = 5;
  q.channels = {"v_T", "v_M"};
  const auto sim = simulate(q);
  const auto& x = sim.series[0].samples;
  const auto& y = sim.series[1].samples;

  std::mt19937_64 rng(2024);
  std::size_t checked = 0, out_of_bounds = 0;
  for (int w = 0; w < 1000; ++w) {
    const auto len = std::uniform_int_distribution<std::size_t>(10, 2000)(rng);
    const auto start = std::uniform_int_distribution<std::size_t>(200, x.size() - len - 200)(rng);
    for (double r : stcc_samples(x, y, start, len, -100, 100)) {
      ++checked;
      out_of_bounds += !(r >= -1.0 && r <= 1.0);
    }
  }

  int recovered = 0;
  for (long d = 1; d <= 20; ++d) {
    std::vector<double> shifted(x.size(), 0.0);
    for (std::size_t i = static_cast<std::size_t>(d); i < x.size(); ++i) shifted[i] = x[i - static_cast<std::size_t>(d)];
    const auto r = stcc_samples(x, shifted, 1000, 1000, 0, 40);
    const auto arg = std::max_element(r.begin(), r.end()) - r.begin();
    recovered += std::abs(arg - d) <= 1;
  }

  double worst_self = 0;
  for (int w = 0; w < 100; ++w) {
    const auto start = std::uniform_int_distribution<std::size_t>(0, x.size() - 1000)(rng);
    worst_self = std::max(worst_self, std::abs(stcc_samples(x, x, start, 1000, 0, 0)[0] - 1.0));
  }
  const bool pass = out_of_bounds == 0 && recovered == 20 && worst_self < 1e-12;
  return {pass, fmt("%zu coefficients on 1000 random windows, %zu outside [-1, 1]; shifts 1..20 recovered: %d/20; "
                    "max |R(x,x;0) - 1| = %.1e",
                    checked, out_of_bounds, recovered, worst_self)};
}

// ---------------------------------------------------------------- pipeline identity

std::vector<std::map<std::string, std::string>> read_csv(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  std::vector<std::string> header;
  std::stringstream hs(line);
  for (std::string c; std::getline(hs, c, ',');) header.push_back(c);
  std::vector<std::map<std::string, std::string>> rows;
  while (std::getline(in, line)) {
    std::map<std::string, std::string> row;
    std::stringstream ls(line);
    std::size_t i = 0;
    for (std::string c; std::getline(ls, c, ',') && i < header.size(); ++i) row[header[i]] = c;
    rows.push_back(row);
  }
  return rows;
}

Verdict pipeline_identity() {
  const auto dir = work_dir("identity");
  SessionConfig config;
  config.countdown = 0;

  // numerical runs at the tick rate, one single and one coupled
  std::map<std::string, std::pair<std::optional<double>, double>> direct;
  std::size_t file = 0;
  for (auto kind : {ModelKind::single, ModelKind::coupled}) {
    SimulationRequest q;
    q.kind = kind;
    q.params = at_gain(kind == ModelKind::single ? 20.306 : 21.032);
    q.params.seed = 77;
    q.horizon = 600;
    q.downsample = 20;
    q.channels = kind == ModelKind::single ? std::vector<std::string>{"x_T", "x_M"}
                                           : std::vector<std::string>{"q_T", "q_M1", "q_M2"};
    const auto sim = simulate(q);
    SessionConfig c = config;
    c.mode = kind == ModelKind::single ? SessionMode::single : SessionMode::coupled;
    c.params = q.params;
    std::vector<TimeSeries> bases(sim.series.begin() + 1, sim.series.end());
    std::vector<std::string> names;
    for (std::size_t i = 0; i < bases.size(); ++i) names.push_back("m" + std::to_string(i + 1));
    const auto rec = record_from_positions(c, names, sim.series[0], bases);
    const std::string source = "run" + std::to_string(++file) + ".trial.jsonl";
    persist(rec, dir / source);

    // direct analysis of the source series
    const double dt = 1.0 / c.tick_rate;
    const auto v_tip = finite_difference(sim.series[0], "v_tip");
    const long n = static_cast<long>(v_tip.size());
    const double window = static_cast<double>(n - 26 - 1) * dt;
    for (std::size_t i = 0; i < bases.size(); ++i) {
      const auto v_base = finite_difference(bases[i], "v_base");
      std::vector<double> err(bases[i].size());
      for (std::size_t k = 0; k < err.size(); ++k) err[k] = sim.series[0].samples[k] - bases[i].samples[k];
      const auto r = stcc(v_tip, v_base, dt, window, {-dt, 0.5 + dt});
      direct[source + "/" + std::to_string(i + 1)] = {first_dominant_peak(r, 0.0, 0.5, 0.8), rms(std::span<const double>(err))};
    }
  }

  const int rc = run_cli("analyze-trials " + dir.string() + " --out " + (dir / "report").string(), dir / "analyze.log");
  if (rc != 0) return {false, "analyze-trials exited with " + std::to_string(rc)};
  const auto rows = read_csv(dir / "report/trials-per-trial.csv");
  std::size_t matched = 0;
  for (const auto& row : rows) {
    const auto it = direct.find(row.at("source") + "/" + row.at("subject_index"));
    if (it == direct.end()) continue;
    const auto& [tau, r] = it->second;
    const bool tau_ok = tau ? (!row.at("tau_hat").empty() && std::stod(row.at("tau_hat")) == *tau) : row.at("tau_hat").empty();
    matched += tau_ok && std::stod(row.at("rms")) == r;
  }

  // tabulated trial rows through the same command
  const fs::path fixture = fs::path(CBAL_FIXTURE_DIR) / "tables.csv";
  const int rc2 = run_cli("analyze-trials " + fixture.string() + " --name tables --out " + (dir / "report").string(),
                          dir / "tables.log");
  if (rc2 != 0) return {false, "analyze-trials on the table fixture exited with " + std::to_string(rc2)};
  std::map<std::string, std::pair<double, double>> avg;
  for (const auto& row : read_csv(dir / "report/tables-subjects.csv"))
    avg[row.at("mode") + " " + row.at("subject")] = {std::stod(row.at("tau_hat_mean")), std::stod(row.at("rms_mean"))};
  auto three = [](double v, double want) { return std::abs(v - want) < 5e-4; };
  const bool tables = three(avg["single A"].first, 0.132) && three(avg["single B"].first, 0.136) &&
                      three(avg["single A"].second, 3.62) && three(avg["single B"].second, 5.34);

  const bool identity = matched == direct.size() && rows.size() == direct.size();
  return {identity && tables,
          fmt("%zu/%zu (trial, subject) rows equal direct analysis exactly; single A/B averages tau %.3f/%.3f, RMS %.3f/%.3f "
              "(want 0.132/0.136, 3.620/5.340)",
              matched, direct.size(), avg["single A"].first, avg["single B"].first, avg["single A"].second,
              avg["single B"].second)};
}

// ---------------------------------------------------------------- pixel map

Verdict pixel_map() {
  const SessionConfig c;
  const bool ends = model_to_px(-3.0, c) == 1 && model_to_px(3.0, c) == 1200;
  int identical = 0;
  for (int px = 1; px <= 1200; ++px) identical += model_to_px(px_to_model(px, c), c) == px;
  return {ends && identical == 1200,
          fmt("-3 -> %d, 3 -> %d; round trip exact on %d/1200 pixels", model_to_px(-3.0, c), model_to_px(3.0, c), identical)};
}

// ---------------------------------------------------------------- apparatus

Verdict end_to_end() {
  const auto dir = work_dir("e2e");
  ServeOptions o;
  o.port = 0;
  o.session_code = "E2E";
  o.config.countdown = 0;
  o.output_dir = dir;
  o.lockstep = true;
  TrackingServer server(o);
  auto served = std::async(std::launch::async, [&] { return server.run(); });
  ClientOptions c;
  c.port = server.port();
  c.session_code = "E2E";
  c.subject = "scripted";
  const auto client = run_scripted_client(c);
  const auto result = served.get();
  if (!result.trial_path) return {false, "no trial file written"};
  const auto loaded = load(*result.trial_path);
  const auto report = trial_report({{result.trial_path->filename().string(), loaded.record}});
  const bool ok = loaded.warnings.empty() && loaded.record.rows.size() == 30000 && loaded.record.cause &&
                  *loaded.record.cause == TerminationCause::completed && client.states == 30000 && client.ticks_monotone &&
                  report.trials.size() == 1;
  const auto& t = report.trials.empty() ? TrialStat{} : report.trials.front();
  return {ok, fmt("%zu ticks, cause %s, %llu states seen by the client; report: tau_hat %s, RMS %.3g",
                  loaded.record.rows.size(),
                  loaded.record.cause ? std::string(to_string(*loaded.record.cause)).c_str() : "none",
                  static_cast<unsigned long long>(client.states), t.tau_hat ? fmt("%.2f", *t.tau_hat).c_str() : "absent",
                  t.rms)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string only;
  std::string cal_file;
  app.add_option("--only", only, "Run a single criterion");
  app.add_option("--calibration-file", cal_file, "Cache for calibrated gains");
  CLI11_PARSE(app, argc, argv);
  g_calibration_file = cal_file;

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"calibration", calibration},
      {"oracle", oracle},
      {"rms-gap", rms_gap},
      {"velocity-ratio", velocity_ratio},
      {"spectral-slopes", spectral_slopes},
      {"peak-density", peak_densities},
      {"stcc", stcc_suite},
      {"pipeline-identity", pipeline_identity},
      {"pixel-map", pixel_map},
      {"end-to-end", end_to_end},
  };
  int failed = 0, ran = 0;
  for (const auto& [name, check] : criteria) {
    if (!only.empty() && only != name) continue;
    ++ran;
    const auto t0 = Clock::now();
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    failed += !v.pass;
    std::cout << (v.pass ? "PASS " : "FAIL ") << name << ": " << v.detail << fmt(" [%.0f s]", seconds_since(t0)) << std::endl;
  }
  if (ran == 0) {
    std::cerr << "unknown criterion '" << only << "'\n";
    return 2;
  }
  return failed ? 1 : 0;
}
