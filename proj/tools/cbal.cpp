// cbal: command-line front end.

#include <csignal>
#include <cstdlib>
#include <iostream>
#include <random>

#include "cbal/analysis.hpp"
#include "cbal/csv.hpp"
#include "cbal/experiment.hpp"
#include "cbal/server.hpp"
#include "cbal/simulate.hpp"
#include "cbal/stability.hpp"
#include "cbal/trial_report.hpp"
#include "cli_support.hpp"

namespace fs = std::filesystem;
using namespace cbal;
using cli::ojson;

namespace {

struct Common {
  std::string out_dir = ".";
  std::string name;
  std::string format = "csv";
  unsigned jobs = 0;
  bool allow_divergence = false;
};

struct ModelOpts {
  std::string kind = "single";
  ModelParams p;
  std::optional<double> beta;
};

void add_common(CLI::App* s, Common& c, const std::string& default_name) {
  c.name = default_name;
  s->add_option("--out", c.out_dir, "Output directory")->envname("CBAL_OUTPUT_DIR");
  s->add_option("--name", c.name, "Stem of the output files");
  s->add_option("--format", c.format, "Data file format")->check(CLI::IsMember({"csv", "jsonl"}));
  s->add_option("--jobs", c.jobs, "Worker threads (0 = all cores)");
  s->add_flag("--allow-divergence", c.allow_divergence, "Exit 0 even if a model run diverged");
}

void add_model(CLI::App* s, ModelOpts& m, bool nonlinear) {
  s->add_option("--kind", m.kind, "Model")
      ->check(nonlinear ? CLI::IsMember({"single", "coupled", "nonlinear"})
                        : CLI::IsMember({"single", "coupled"}));
  s->add_option("--gamma", m.p.gamma, "Damping (1/s)");
  s->add_option("--alpha", m.p.alpha, "Instability (1/s^2)");
  s->add_option("--beta", m.beta, "Feedback gain (1/s^2); default: calibrated value of the kind");
  s->add_option("--nu", m.p.nu, "Noise strength");
  s->add_option("--tau", m.p.tau, "Delay (s)");
  s->add_option("--dt", m.p.dt, "Integration step (s)");
  s->add_option("--seed", m.p.seed, "RNG seed");
}

ModelKind resolve(ModelOpts& m) {
  const ModelKind kind = parse_model_kind(m.kind);
  m.p.beta = m.beta.value_or(kind == ModelKind::coupled ? kCalibratedCoupledBeta : kCalibratedSingleBeta);
  m.p.validate();
  return kind;
}

/// Collects output files and writes the manifest last.
class Run {
 public:
  Run(const CLI::App* sub, const Common& c) : sub_(sub), c_(c) {
    cli::ensure_dir(c.out_dir);
    parameters_ = cli::resolved_options(*sub);
  }

  void set_param(const std::string& key, ojson v) { parameters_[key] = std::move(v); }
  void set_model(const ModelParams& p) {
    resolved_["model"] = cli::params_json(p);
    parameters_["beta"] = p.beta;
  }
  ojson& result() { return result_; }

  fs::path data(const std::string& suffix, const std::string& csv_text) {
    const std::string ext = c_.format == "csv" ? ".csv" : ".jsonl";
    const fs::path path = fs::path(c_.out_dir) / (c_.name + (suffix.empty() ? "" : "-" + suffix) + ext);
    cli::write_text(path, c_.format == "csv" ? csv_text : cli::csv_to_jsonl(csv_text));
    outputs_.push_back(path.filename().string());
    return path;
  }
  void add_output(const fs::path& p) { outputs_.push_back(p.string()); }

  void divergence(const std::string& what) { diverged_.push_back(what); }

  int finish() {
    ojson m;
    m["command"] = sub_->get_name();
    m["version"] = "0.1.0";
    m["parameters"] = parameters_;
    if (!resolved_.empty()) m["resolved"] = resolved_;
    m["outputs"] = outputs_;
    m["result"] = result_;
    m["diverged"] = diverged_;
    const fs::path path = fs::path(c_.out_dir) / (c_.name + ".manifest.json");
    cli::write_text(path, m.dump(2) + "\n");
    std::cout << "manifest: " << path.string() << "\n";
    if (!diverged_.empty() && !c_.allow_divergence) {
      std::cerr << "divergence: " << diverged_.front() << " (use --allow-divergence to accept)\n";
      return cli::divergence;
    }
    return cli::ok;
  }

 private:
  const CLI::App* sub_;
  const Common& c_;
  ojson parameters_, resolved_ = ojson::object(), result_ = ojson::object();
  std::vector<std::string> outputs_;
  std::vector<std::string> diverged_;
};

std::string to_csv(const auto& fn) {
  std::ostringstream s;
  fn(s);
  return s.str();
}

LyapunovNorm parse_norm(const std::string& s) {
  if (s == "headline") return LyapunovNorm::headline;
  if (s == "history") return LyapunovNorm::with_history;
  throw ValidationError("unknown norm '" + s + "'");
}

ojson estimate_json(const LyapunovEstimate& e) {
  return ojson{{"lambda1", e.lambda1},
               {"std_error", e.std_error},
               {"horizon", e.horizon},
               {"renorm_interval", e.renorm_interval}};
}

std::string random_code() {
  static constexpr char alphabet[] = "ABCDEFGHJKLMNPQRSTUVWXYZ23456789";
  std::random_device rd;
  std::string s;
  for (int i = 0; i < 6; ++i) s += alphabet[rd() % (sizeof alphabet - 1)];
  return s;
}

TrackingServer* g_server = nullptr;
extern "C" void on_sigint(int) {
  if (g_server) g_server->request_abort();
}

// Trial rows in the layout written by csv::write_trials (a header naming at
// least subject, mode, tau_hat and rms).
std::vector<TrialStat> read_trial_rows(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw cli::IoError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  std::vector<TrialStat> rows;
  std::istringstream lines(cli::csv_to_jsonl(buf.str()));
  std::size_t n = 1;
  for (std::string line; std::getline(lines, line);) {
    ++n;
    const auto j = ojson::parse(line);
    try {
      TrialStat t;
      t.source = j.contains("source") && j["source"].is_string() ? j["source"].get<std::string>()
                                                                  : path.filename().string();
      t.subject = j.at("subject").is_string() ? j.at("subject").get<std::string>() : j.at("subject").dump();
      t.mode = parse_session_mode(j.at("mode").get<std::string>());
      if (!j.at("tau_hat").is_null()) t.tau_hat = j.at("tau_hat").get<double>();
      t.rms = j.at("rms").get<double>();
      if (j.contains("session") && j["session"].is_string()) t.session = j["session"].get<std::string>();
      rows.push_back(std::move(t));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(path.string() + " line " + std::to_string(n) + ": " + e.what());
    }
  }
  return rows;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulation and experiment workbench for single and coupled balancing models"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.fallthrough();  // --config may follow the subcommand
  app.set_version_flag("--version", "0.1.0");
  app.set_config("--config", "", "JSON config file (flags take precedence)");
  app.allow_config_extras(CLI::config_extras_mode::error);

  std::string active;
  for (int i = 1; i < argc; ++i)
    if (argv[i][0] != '-') {
      active = argv[i];
      break;
    }
  app.config_formatter(std::make_shared<cli::JsonConfig>(active));

  // ---------------------------------------------------------------- simulate
  Common c_sim;
  ModelOpts m_sim;
  double sim_horizon = 100;
  std::vector<std::string> sim_channels;
  std::size_t sim_downsample = 1;
  auto* sim = app.add_subcommand("simulate", "Integrate one model and write its channels");
  add_common(sim, c_sim, "simulate");
  add_model(sim, m_sim, true);
  sim->add_option("--horizon", sim_horizon, "Seconds to integrate");
  sim->add_option("--channels", sim_channels, "Channels (default: all of the kind)")->delimiter(',');
  sim->add_option("--downsample", sim_downsample, "Keep every n-th step");

  // ---------------------------------------------------------------- lyapunov
  Common c_ly;
  ModelOpts m_ly;
  double ly_horizon = 2e4;
  std::size_t ly_renorm = 100, ly_segments = 20, ly_seeds = 1;
  std::string ly_norm = "headline";
  auto* ly = app.add_subcommand("lyapunov", "Largest Lyapunov exponent at one gain");
  add_common(ly, c_ly, "lyapunov");
  add_model(ly, m_ly, false);
  ly->add_option("--horizon", ly_horizon, "Seconds per run");
  ly->add_option("--renorm-every", ly_renorm, "Steps between renormalizations");
  ly->add_option("--segments", ly_segments, "Segments for the standard error");
  ly->add_option("--seeds", ly_seeds, "Runs averaged (seeds seed..seed+n-1)");
  ly->add_option("--norm", ly_norm, "State norm")->check(CLI::IsMember({"headline", "history"}));

  // ---------------------------------------------------------------- sweep
  Common c_sw;
  ModelOpts m_sw;
  double sw_lo = 18, sw_hi = 24, sw_horizon = 2e4;
  std::size_t sw_points = 13, sw_seeds = 8, sw_renorm = 100;
  auto* sw = app.add_subcommand("sweep", "Lyapunov exponent over a gain range");
  add_common(sw, c_sw, "sweep");
  add_model(sw, m_sw, false);
  sw->add_option("--beta-lo", sw_lo, "Lowest gain");
  sw->add_option("--beta-hi", sw_hi, "Highest gain");
  sw->add_option("--points", sw_points, "Number of gains");
  sw->add_option("--seeds", sw_seeds, "Runs averaged per gain");
  sw->add_option("--horizon", sw_horizon, "Seconds per run");
  sw->add_option("--renorm-every", sw_renorm, "Steps between renormalizations");

  // ---------------------------------------------------------------- calibrate
  Common c_cal;
  ModelOpts m_cal;
  CalibrationOptions cal;
  auto* ca = app.add_subcommand("calibrate", "Find the gain with a target Lyapunov exponent");
  add_common(ca, c_cal, "calibrate");
  add_model(ca, m_cal, false);
  ca->add_option("--target", cal.target, "Target lambda_1 (1/s)");
  ca->add_option("--beta-lo", cal.beta_lo, "Bracket low end");
  ca->add_option("--beta-hi", cal.beta_hi, "Bracket high end");
  ca->add_option("--seeds", cal.n_seeds, "Runs averaged per gain");
  ca->add_option("--horizon", cal.lyapunov.horizon, "Seconds per run");
  ca->add_option("--renorm-every", cal.lyapunov.renorm_every, "Steps between renormalizations");
  ca->add_option("--max-iterations", cal.max_iterations, "Bisection limit");
  ca->add_option("--min-width", cal.min_width, "Stop when the bracket is this narrow");

  // ---------------------------------------------------------------- spectrum
  Common c_sp;
  ModelOpts m_sp;
  double sp_horizon = 1e4, sp_overlap = 0.5;
  std::size_t sp_downsample = 10, sp_segment = 16384;
  std::string sp_channel;
  SlopeFitOptions sp_fit{0.01, 10.0};
  auto* sp = app.add_subcommand("spectrum", "Power spectrum of the balancing error with a two-regime fit");
  add_common(sp, c_sp, "spectrum");
  add_model(sp, m_sp, false);
  sp->add_option("--horizon", sp_horizon, "Seconds to integrate");
  sp->add_option("--downsample", sp_downsample, "Steps per spectral sample");
  sp->add_option("--segment", sp_segment, "Samples per periodogram segment");
  sp->add_option("--overlap", sp_overlap, "Segment overlap fraction");
  sp->add_option("--channel", sp_channel, "Channel (default dx or dq1)");
  sp->add_option("--f-lo", sp_fit.f_lo, "Fit band low end (Hz)");
  sp->add_option("--f-hi", sp_fit.f_hi, "Fit band high end (Hz)");
  sp->add_option("--bins-per-decade", sp_fit.bins_per_decade, "Log bins before the fit (0 = raw)");
  sp->add_option("--breakpoints", sp_fit.breakpoints, "Candidate breakpoints");

  // ---------------------------------------------------------------- rms-ensemble
  Common c_rms;
  ModelOpts m_rms;
  EnsembleOptions rms_opt;
  auto* re = app.add_subcommand("rms-ensemble", "RMS of the balancing error over independent runs");
  add_common(re, c_rms, "rms-ensemble");
  add_model(re, m_rms, false);
  re->add_option("--n", rms_opt.n_realizations, "Realizations");
  re->add_option("--horizon", rms_opt.horizon, "Seconds per run");
  re->add_option("--downsample", rms_opt.downsample, "Steps per RMS sample");
  re->add_option("--channel", rms_opt.channel, "Channel (default dx or dq1)");

  // ---------------------------------------------------------------- velocity-ratio
  Common c_vr;
  ModelOpts m_vr;
  double vr_beta_single = kCalibratedSingleBeta, vr_beta_coupled = kCalibratedCoupledBeta;
  EnsembleOptions vr_opt;
  vr_opt.n_realizations = 20;
  DensityRatioOptions vr_ratio;
  double vr_central = 0.1;
  auto* vr = app.add_subcommand("velocity-ratio", "Density ratio of coupled to single error velocities");
  add_common(vr, c_vr, "velocity-ratio");
  vr->add_option("--gamma", m_vr.p.gamma, "Damping (1/s)");
  vr->add_option("--alpha", m_vr.p.alpha, "Instability (1/s^2)");
  vr->add_option("--nu", m_vr.p.nu, "Noise strength");
  vr->add_option("--tau", m_vr.p.tau, "Delay (s)");
  vr->add_option("--dt", m_vr.p.dt, "Integration step (s)");
  vr->add_option("--seed", m_vr.p.seed, "RNG seed");
  vr->add_option("--beta-single", vr_beta_single, "Gain of the single model");
  vr->add_option("--beta-coupled", vr_beta_coupled, "Gain of the coupled model");
  vr->add_option("--n", vr_opt.n_realizations, "Realizations per model");
  vr->add_option("--horizon", vr_opt.horizon, "Seconds per run");
  vr->add_option("--downsample", vr_opt.downsample, "Steps per velocity sample");
  vr->add_option("--bins", vr_ratio.bins, "Bins on the shared grid (odd)");
  vr->add_option("--half-range", vr_ratio.half_range, "Grid half width (0 = from quantile)");
  vr->add_option("--quantile", vr_ratio.range_quantile, "|v| quantile setting the grid");
  vr->add_option("--min-count", vr_ratio.min_count, "Minimum count per reported bin");
  vr->add_option("--central", vr_central, "Fraction of the grid averaged for the headline");

  // ---------------------------------------------------------------- stcc
  Common c_st;
  ModelOpts m_st;
  double st_horizon = 100, st_t = 36, st_window = 5, st_hop = 1, st_prom = 0.8;
  LagRange st_lags;
  std::size_t st_downsample = 5, st_subject = 1;
  auto* st = app.add_subcommand("stcc", "Short-time cross-correlation of tip and base velocities");
  add_common(st, c_st, "stcc");
  add_model(st, m_st, false);
  st->add_option("--horizon", st_horizon, "Seconds to integrate");
  st->add_option("--t", st_t, "Window start (s)");
  st->add_option("--window", st_window, "Window length (s)");
  st->add_option("--lag-min", st_lags.min, "Smallest lag (s)");
  st->add_option("--lag-max", st_lags.max, "Largest lag (s)");
  st->add_option("--hop", st_hop, "Window hop of the peak series (s)");
  st->add_option("--prominence", st_prom, "Peak height relative to the window maximum");
  st->add_option("--downsample", st_downsample, "Steps per sample");
  st->add_option("--subject", st_subject, "Base of this stick (coupled: 1 or 2)");

  // ---------------------------------------------------------------- peak-density
  Common c_pd;
  ModelOpts m_pd;
  PeakDensityOptions pd;
  auto* pk = app.add_subcommand("peak-density", "Density of first dominant STCC peaks over realizations");
  add_common(pk, c_pd, "peak-density");
  add_model(pk, m_pd, false);
  pk->add_option("--n", pd.n_realizations, "Realizations");
  pk->add_option("--horizon", pd.horizon, "Seconds per run");
  pk->add_option("--downsample", pd.downsample, "Steps per sample");
  pk->add_option("--window", pd.peaks.window, "STCC window (s)");
  pk->add_option("--hop", pd.peaks.hop, "Window hop (s)");
  pk->add_option("--lag-min", pd.peaks.lags.min, "Smallest lag (s)");
  pk->add_option("--lag-max", pd.peaks.lags.max, "Largest lag (s)");
  pk->add_option("--prominence", pd.peaks.prominence, "Peak height relative to the window maximum");
  pk->add_option("--bin-width", pd.bin_width, "Histogram bin width (s)");

  // ---------------------------------------------------------------- serve
  Common c_sv;
  ServeOptions sv;
  std::string sv_mode = "single";
  auto* se = app.add_subcommand("serve", "Run one tracking session over WebSocket");
  add_common(se, c_sv, "serve");
  se->add_option("--address", sv.address, "Listen address");
  se->add_option("--port", sv.port, "Listen port (0 = any free port)");
  se->add_option("--session", sv.session_code, "Session code (default: random)");
  se->add_option("--mode", sv_mode, "Session mode")->check(CLI::IsMember({"single", "coupled"}));
  se->add_flag("--lockstep", sv.lockstep, "Advance only when every client acknowledged the last tick");
  se->add_option("--ack-timeout", sv.ack_timeout, "Lockstep wait before a client counts as lost (s)");
  se->add_option("--gamma", sv.config.params.gamma, "Damping (1/s)");
  se->add_option("--alpha", sv.config.params.alpha, "Instability (1/s^2)");
  se->add_option("--beta", sv.config.params.beta, "Feedback gain (unused by human-driven bases)");
  se->add_option("--tau", sv.config.params.tau, "Delay (s)");
  se->add_option("--dt", sv.config.params.dt, "Integration step (s)");
  se->add_option("--rod-length", sv.config.rod_length, "Rod length (model units)");
  se->add_option("--tick-rate", sv.config.tick_rate, "Ticks per second");
  se->add_option("--max-duration", sv.config.max_duration, "Session length cap (s)");
  se->add_option("--countdown", sv.config.countdown, "Countdown (s)");
  se->add_option("--screen-width", sv.config.screen_width, "Screen width (px)");
  se->add_option("--visible", sv.config.visible_hi, "Visible half range (model units)");

  // ---------------------------------------------------------------- client
  ClientOptions cl;
  auto* cli_sub = app.add_subcommand("client", "Scripted participant for a running session");
  cli_sub->add_option("--host", cl.host, "Server host");
  cli_sub->add_option("--port", cl.port, "Server port");
  cli_sub->add_option("--session", cl.session_code, "Session code");
  cli_sub->add_option("--subject", cl.subject, "Subject id");
  cli_sub->add_option("--strategy", cl.strategy, "track | hold | replay")
      ->check(CLI::IsMember({"track", "hold", "replay"}));
  cli_sub->add_option("--replay-file", cl.replay_file, "Trial file for the replay strategy");
  cli_sub->add_option("--replay-subject", cl.replay_subject, "Subject column to replay");
  std::optional<std::uint64_t> cl_abort;
  cli_sub->add_option("--abort-at", cl_abort, "Send abort once this tick is shown");

  // ---------------------------------------------------------------- analyze-trials
  Common c_at;
  std::vector<std::string> at_paths;
  std::string at_grouping = "mode";
  TrialReportOptions at_opt;
  auto* at = app.add_subcommand("analyze-trials", "Correlation time and RMS tables from trial files");
  add_common(at, c_at, "trials");
  at->add_option("paths", at_paths, "Trial files (.trial.jsonl), directories, or trial-row CSV files")
      ->required();
  at->add_option("--grouping", at_grouping, "Group statistics by")
      ->check(CLI::IsMember({"none", "mode", "subject"}));
  at->add_option("--window", at_opt.window, "STCC window; shorter trials than twice this are excluded (s)");
  at->add_option("--lag-min", at_opt.lags.min, "Smallest lag (s)");
  at->add_option("--lag-max", at_opt.lags.max, "Largest lag (s)");
  at->add_option("--prominence", at_opt.prominence, "Peak height relative to the maximum");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cli::validation;
  }

  try {
    if (sim->parsed()) {
      const ModelKind kind = resolve(m_sim);
      Run run(sim, c_sim);
      run.set_model(m_sim.p);
      SimulationRequest req;
      req.kind = kind;
      req.params = m_sim.p;
      req.horizon = sim_horizon;
      req.channels = sim_channels;
      req.downsample = sim_downsample;
      const auto res = simulate(req);
      run.data("", to_csv([&](std::ostream& o) { csv::write_series(o, res.series); }));
      run.result()["samples"] = res.series.empty() ? 0 : res.series.front().size();
      if (res.diverged_at) {
        run.result()["diverged_at"] = *res.diverged_at;
        run.divergence("model diverged at t = " + csv::number(*res.diverged_at));
      }
      return run.finish();
    }

    if (ly->parsed()) {
      const ModelKind kind = resolve(m_ly);
      Run run(ly, c_ly);
      run.set_model(m_ly.p);
      LyapunovOptions o{ly_horizon, ly_renorm, ly_segments, parse_norm(ly_norm)};
      const auto e = ly_seeds > 1 ? mean_lyapunov(kind, m_ly.p, ly_seeds, o, c_ly.jobs)
                                  : largest_lyapunov(kind, m_ly.p, o);
      run.result() = estimate_json(e);
      run.data("", to_csv([&](std::ostream& out) {
                 csv::Writer w(out, {"beta", "lambda1", "std_error", "horizon", "renorm_interval"});
                 w << m_ly.p.beta << e.lambda1 << e.std_error << e.horizon << e.renorm_interval;
                 w.end_row();
               }));
      std::cout << "lambda1 = " << e.lambda1 << " +- " << e.std_error << "\n";
      return run.finish();
    }

    if (sw->parsed()) {
      const ModelKind kind = resolve(m_sw);
      Run run(sw, c_sw);
      run.set_model(m_sw.p);
      LyapunovOptions o;
      o.horizon = sw_horizon;
      o.renorm_every = sw_renorm;
      const auto table = lyapunov_sweep(kind, m_sw.p, sw_lo, sw_hi, sw_points, sw_seeds, o, c_sw.jobs);
      run.data("", to_csv([&](std::ostream& out) { csv::write_sweep(out, table); }));
      std::size_t failed = 0;
      for (const auto& p : table) failed += p.failure.has_value();
      run.result()["failed_points"] = failed;
      if (failed) run.divergence(std::to_string(failed) + " sweep point(s) failed");
      return run.finish();
    }

    if (ca->parsed()) {
      const ModelKind kind = resolve(m_cal);
      Run run(ca, c_cal);
      run.set_model(m_cal.p);
      cal.jobs = c_cal.jobs;
      const auto b = calibrate_beta(kind, m_cal.p, cal);
      run.data("trace", to_csv([&](std::ostream& out) { csv::write_calibration_trace(out, b); }));
      run.result() = ojson{{"beta_star", b.beta_star},   {"target", b.target},
                           {"bracket_lo", b.bracket_lo}, {"bracket_hi", b.bracket_hi},
                           {"lambda1", b.lambda1},       {"std_error", b.std_error},
                           {"iterations", b.trace.size()}};
      std::cout << "beta* = " << b.beta_star << " (lambda1 = " << b.lambda1 << " +- " << b.std_error << ")\n";
      return run.finish();
    }

    if (sp->parsed()) {
      const ModelKind kind = resolve(m_sp);
      Run run(sp, c_sp);
      run.set_model(m_sp.p);
      const std::string channel = !sp_channel.empty() ? sp_channel : (kind == ModelKind::single ? "dx" : "dq1");
      run.set_param("channel", channel);
      SimulationRequest req;
      req.kind = kind;
      req.params = m_sp.p;
      req.horizon = sp_horizon;
      req.channels = {channel};
      req.downsample = sp_downsample;
      const auto res = simulate(req);
      if (res.diverged_at) run.divergence("model diverged at t = " + csv::number(*res.diverged_at));
      const auto spec = power_spectrum(res.series.front(), sp_segment, sp_overlap);
      run.data("", to_csv([&](std::ostream& o) { csv::write_spectrum(o, spec); }));
      const auto fit = fit_two_regime_slopes(spec, sp_fit);
      run.result() = ojson{{"segments", spec.segments},         {"slope_low", fit.slope_low},
                           {"slope_high", fit.slope_high},       {"breakpoint", fit.breakpoint},
                           {"intercept_low", fit.intercept_low}, {"intercept_high", fit.intercept_high},
                           {"residual_low", fit.residual_low},   {"residual_high", fit.residual_high},
                           {"single_slope", fit.single_slope},   {"improvement", fit.improvement},
                           {"second_regime", fit.second_regime}, {"points", fit.points}};
      return run.finish();
    }

    if (re->parsed()) {
      const ModelKind kind = resolve(m_rms);
      Run run(re, c_rms);
      run.set_model(m_rms.p);
      rms_opt.jobs = c_rms.jobs;
      const auto e = ensemble_rms(kind, m_rms.p, rms_opt);
      run.data("", to_csv([&](std::ostream& o) { csv::write_ensemble(o, e); }));
      run.result() = ojson{{"realizations", e.rms.size()},
                           {"mean_log10_rms", e.mean_log10},
                           {"headline_rms", e.headline()},
                           {"diverged_seeds", e.diverged_seeds}};
      if (!e.diverged_seeds.empty())
        run.divergence(std::to_string(e.diverged_seeds.size()) + " realization(s) diverged");
      std::cout << "mean log10 RMS = " << e.mean_log10 << " over " << e.rms.size() << " runs\n";
      return run.finish();
    }

    if (vr->parsed()) {
      m_vr.p.beta = vr_beta_single;
      m_vr.p.validate();
      Run run(vr, c_vr);
      ModelParams ps = m_vr.p, pc = m_vr.p;
      pc.beta = vr_beta_coupled;
      pc.validate();
      EnsembleOptions os = vr_opt, oc = vr_opt;
      os.jobs = oc.jobs = c_vr.jobs;
      os.channel = "dx_dot";
      oc.channel = "dq1_dot";
      const auto single = pooled_channel(ModelKind::single, ps, os);
      const auto coupled = pooled_channel(ModelKind::coupled, pc, oc);
      const auto ratio = density_ratio(coupled.values, single.values, vr_ratio);
      run.data("", to_csv([&](std::ostream& o) { csv::write_density_ratio(o, ratio); }));
      run.result() = ojson{{"central_mean_ratio", ratio.central_mean(vr_central)},
                           {"half_range", ratio.half_range},
                           {"bin_width", ratio.bin_width},
                           {"diverged_single", single.diverged_seeds},
                           {"diverged_coupled", coupled.diverged_seeds}};
      if (!single.diverged_seeds.empty() || !coupled.diverged_seeds.empty())
        run.divergence("some realizations diverged");
      std::cout << "central ratio = " << ratio.central_mean(vr_central) << "\n";
      return run.finish();
    }

    if (st->parsed()) {
      const ModelKind kind = resolve(m_st);
      Run run(st, c_st);
      run.set_model(m_st.p);
      if (st_subject < 1 || st_subject > (kind == ModelKind::coupled ? 2u : 1u))
        throw ValidationError("no such subject for this model");
      SimulationRequest req;
      req.kind = kind;
      req.params = m_st.p;
      req.horizon = st_horizon;
      req.downsample = st_downsample;
      req.channels = kind == ModelKind::single
                         ? std::vector<std::string>{"v_T", "v_M"}
                         : std::vector<std::string>{"v_qT", st_subject == 1 ? "v_M1" : "v_M2"};
      const auto res = simulate(req);
      if (res.diverged_at) run.divergence("model diverged at t = " + csv::number(*res.diverged_at));
      const auto r = stcc(res.series[0], res.series[1], st_t, st_window, st_lags);
      run.data("", to_csv([&](std::ostream& o) { csv::write_stcc(o, r); }));
      const auto peaks = peak_series(res.series[0], res.series[1],
                                     PeakSeriesOptions{st_window, st_hop, st_lags, st_prom});
      run.data("peaks", to_csv([&](std::ostream& o) { csv::write_peak_series(o, peaks); }));
      const auto tau = first_dominant_peak(r, st_lags.min, st_lags.max, st_prom);
      run.result()["tau_hat"] = tau ? ojson(*tau) : ojson(nullptr);
      run.result()["window_start"] = r.t;
      return run.finish();
    }

    if (pk->parsed()) {
      const ModelKind kind = resolve(m_pd);
      Run run(pk, c_pd);
      run.set_model(m_pd.p);
      pd.jobs = c_pd.jobs;
      const auto h = peak_density(kind, m_pd.p, pd);
      run.data("", to_csv([&](std::ostream& o) { csv::write_histogram(o, h); }));
      const auto mode = h.mode();
      run.result() = ojson{{"mode_lag", h.center(mode)},
                           {"mode_density", h.density[mode]},
                           {"mass_below_delay", h.mass_below(m_pd.p.tau)},
                           {"peaks", h.values},
                           {"absent", h.absent}};
      std::cout << "mode at " << h.center(mode) << " s, density " << h.density[mode] << "\n";
      return run.finish();
    }

    if (se->parsed()) {
      sv.config.mode = parse_session_mode(sv_mode);
      sv.config.visible_lo = -sv.config.visible_hi;
      if (sv.session_code.empty()) sv.session_code = random_code();
      sv.output_dir = c_sv.out_dir;
      Run run(se, c_sv);
      run.set_param("session", sv.session_code);
      TrackingServer server(sv);
      g_server = &server;
      std::signal(SIGINT, on_sigint);
      std::signal(SIGTERM, on_sigint);
      std::cout << "session " << sv.session_code << "\n"
                << "connect " << server.url() << " (port " << server.port() << ")\n"
                << std::flush;
      const auto result = server.run();
      g_server = nullptr;
      if (result.trial_path) {
        std::cout << "trial " << result.trial_path->string() << "\n";
        run.add_output(*result.trial_path);
        run.result()["trial"] = result.trial_path->string();
        run.result()["ticks"] = result.record->rows.size();
        run.result()["cause"] = to_string(*result.record->cause);
      } else {
        run.result()["trial"] = nullptr;
      }
      return run.finish();
    }

    if (cli_sub->parsed()) {
      if (cl_abort) {
        cl.send_abort_at_tick = true;
        cl.abort_tick = *cl_abort;
      }
      const auto r = run_scripted_client(cl);
      std::cout << "subject " << r.subject_index << ": " << r.states << " states, end "
                << (r.cause ? std::string(to_string(*r.cause)) : std::string("none")) << "\n";
      return r.cause ? cli::ok : cli::io;
    }

    if (at->parsed()) {
      at_opt.grouping = parse_grouping(at_grouping);
      Run run(at, c_at);
      std::vector<LabeledRecord> records;
      std::vector<TrialStat> fixture_rows;
      std::vector<Exclusion> unreadable;
      std::vector<fs::path> files;
      for (const auto& p : at_paths) {
        if (fs::is_directory(p)) {
          for (const auto& e : fs::directory_iterator(p))
            if (e.path().string().ends_with(".trial.jsonl")) files.push_back(e.path());
        } else {
          files.emplace_back(p);
        }
      }
      std::sort(files.begin(), files.end());
      for (const auto& f : files) {
        try {
          if (f.extension() == ".csv") {
            auto rows = read_trial_rows(f);
            fixture_rows.insert(fixture_rows.end(), rows.begin(), rows.end());
            continue;
          }
          auto loaded = load(f);
          for (const auto& w : loaded.warnings) std::cerr << f.string() << ": " << w << "\n";
          records.push_back({f.filename().string(), std::move(loaded.record)});
        } catch (const std::exception& e) {
          std::cerr << "skipping " << f.string() << ": " << e.what() << "\n";
          unreadable.push_back({f.string(), e.what()});
        }
      }
      TrialReport report = trial_report(records, at_opt);
      if (!fixture_rows.empty()) {
        auto rows = report.trials;
        rows.insert(rows.end(), fixture_rows.begin(), fixture_rows.end());
        auto excluded = report.excluded;
        report = aggregate_trials(std::move(rows), at_opt.grouping);
        report.excluded = std::move(excluded);
      }
      report.excluded.insert(report.excluded.begin(), unreadable.begin(), unreadable.end());
      run.data("per-trial", to_csv([&](std::ostream& o) { csv::write_trials(o, report.trials); }));
      run.data("subjects", to_csv([&](std::ostream& o) { csv::write_subject_averages(o, report.subjects); }));
      run.data("groups", to_csv([&](std::ostream& o) { csv::write_groups(o, report.groups); }));
      run.data("excluded", to_csv([&](std::ostream& o) { csv::write_exclusions(o, report.excluded); }));
      run.result() = ojson{{"trials", report.trials.size()}, {"excluded", report.excluded.size()}};
      for (const auto& s : report.subjects)
        std::cout << s.subject << " (" << to_string(s.mode) << "): tau = " << csv::number(s.tau_hat)
                  << ", rms = " << csv::number(s.rms) << " over " << s.trials << " trial(s)\n";
      if (report.trials.empty()) {
        std::cerr << "no usable trials\n";
        run.finish();
        return cli::validation;
      }
      return run.finish();
    }
  } catch (const ValidationError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return cli::validation;
  } catch (const DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << " (t = " << e.time() << ")\n";
    return cli::divergence;
  } catch (const cli::IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return cli::io;
  } catch (const TrialFormatError& e) {
    std::cerr << "bad trial file: " << e.what() << "\n";
    return cli::io;
  } catch (const std::system_error& e) {
    std::cerr << "system error: " << e.what() << "\n";
    return cli::io;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::io;
  }
  return cli::ok;
}
