#include <algorithm>
#include <cmath>

#include "cbal/analysis.hpp"
#include "cbal/parallel.hpp"
#include "cbal/simulate.hpp"

namespace cbal {

std::vector<double> stcc_samples(std::span<const double> x, std::span<const double> y,
                                 std::size_t start, std::size_t length, long lag_min,
                                 long lag_max) {
  if (length < 2) throw ValidationError("STCC window needs at least 2 samples");
  if (lag_min > lag_max) throw ValidationError("STCC lag range is empty");
  const long s = static_cast<long>(start), n = static_cast<long>(length);
  if (s + n > static_cast<long>(x.size()) || s + lag_min < 0 ||
      s + n + lag_max > static_cast<long>(y.size()))
    throw ValidationError("STCC window plus lag range falls outside the series");

  std::vector<double> xc(length);
  double mx = 0;
  for (long i = 0; i < n; ++i) mx += x[s + i];
  mx /= static_cast<double>(n);
  double vx = 0;
  for (long i = 0; i < n; ++i) {
    xc[i] = x[s + i] - mx;
    vx += xc[i] * xc[i];
  }
  vx /= static_cast<double>(n);
  if (!(vx > 0)) throw ValidationError("zero variance in STCC window");
  const double sx = std::sqrt(vx);

  // y is referenced to its mean over the whole lagged span to keep the
  // sliding sums well conditioned.
  const long y0 = s + lag_min, y1 = s + n + lag_max;
  double ref = 0;
  for (long j = y0; j < y1; ++j) ref += y[j];
  ref /= static_cast<double>(y1 - y0);

  double s1 = 0, s2 = 0;
  for (long i = 0; i < n; ++i) {
    const double v = y[y0 + i] - ref;
    s1 += v;
    s2 += v * v;
  }

  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(lag_max - lag_min + 1));
  for (long lag = lag_min; lag <= lag_max; ++lag) {
    const long base = s + lag;
    if (lag > lag_min) {
      const double gone = y[base - 1] - ref, added = y[base + n - 1] - ref;
      s1 += added - gone;
      s2 += added * added - gone * gone;
    }
    double num = 0;
    for (long i = 0; i < n; ++i) num += xc[i] * (y[base + i] - ref);
    const double my = s1 / static_cast<double>(n);
    const double vy = s2 / static_cast<double>(n) - my * my;
    if (!(vy > 0)) throw ValidationError("zero variance in STCC window");
    const double r = num / static_cast<double>(n) / (sx * std::sqrt(vy));
    out.push_back(std::clamp(r, -1.0, 1.0));
  }
  return out;
}

namespace {

long to_samples(double seconds, double dt) { return std::lround(seconds / dt); }

void require_compatible(const TimeSeries& x, const TimeSeries& y) {
  if (!(x.dt_sample > 0) || std::abs(x.dt_sample - y.dt_sample) > 1e-12 * x.dt_sample)
    throw ValidationError("STCC inputs must share one positive sample interval");
  if (std::abs(x.t0 - y.t0) > 1e-9 * x.dt_sample)
    throw ValidationError("STCC inputs must start at the same time");
}

}  // namespace

StccResult stcc(const TimeSeries& x, const TimeSeries& y, double t, double window,
                const LagRange& lags) {
  require_compatible(x, y);
  const double dt = x.dt_sample;
  const long start = to_samples(t - x.t0, dt);
  if (start < 0) throw ValidationError("STCC window starts before the series");
  const long length = to_samples(window, dt);
  const long lo = to_samples(lags.min, dt), hi = to_samples(lags.max, dt);
  StccResult out;
  out.t = x.time(static_cast<std::size_t>(start));
  out.window = static_cast<double>(length) * dt;
  out.coefficient = stcc_samples(x.samples, y.samples, static_cast<std::size_t>(start),
                                 static_cast<std::size_t>(length), lo, hi);
  for (long k = lo; k <= hi; ++k) out.lag.push_back(static_cast<double>(k) * dt);
  return out;
}

std::optional<double> first_dominant_peak(const StccResult& r, double lo, double hi,
                                          double prominence) {
  const double eps = 1e-9;
  const auto& c = r.coefficient;
  double global = -2.0;
  for (std::size_t i = 0; i < c.size(); ++i)
    if (r.lag[i] >= lo - eps && r.lag[i] <= hi + eps) global = std::max(global, c[i]);
  if (!(global > 0)) return std::nullopt;
  for (std::size_t i = 1; i + 1 < c.size(); ++i) {
    if (r.lag[i] < lo - eps || r.lag[i] > hi + eps) continue;
    if (c[i] > c[i - 1] && c[i] > c[i + 1] && c[i] >= prominence * global) return r.lag[i];
  }
  return std::nullopt;
}

PeakSeries peak_series(const TimeSeries& x, const TimeSeries& y, const PeakSeriesOptions& opt) {
  require_compatible(x, y);
  if (!(opt.window > 0) || !(opt.hop > 0)) throw ValidationError("window and hop must be > 0");
  const double dt = x.dt_sample;
  const long n = to_samples(opt.window, dt);
  // one extra lag on each side so the range ends can qualify as local maxima
  const long lo = to_samples(opt.lags.min, dt) - 1, hi = to_samples(opt.lags.max, dt) + 1;
  const long size = static_cast<long>(std::min(x.size(), y.size()));

  PeakSeries out;
  for (std::size_t k = 0;; ++k) {
    const long start = to_samples(static_cast<double>(k) * opt.hop, dt);
    if (start + lo < 0) continue;
    if (start + n + hi > size || start + n > size) break;
    StccResult r;
    r.t = x.time(static_cast<std::size_t>(start));
    r.window = static_cast<double>(n) * dt;
    for (long j = lo; j <= hi; ++j) r.lag.push_back(static_cast<double>(j) * dt);
    out.t.push_back(r.t);
    try {
      r.coefficient = stcc_samples(x.samples, y.samples, static_cast<std::size_t>(start),
                                   static_cast<std::size_t>(n), lo, hi);
      out.peak.push_back(first_dominant_peak(r, opt.lags.min, opt.lags.max, opt.prominence));
    } catch (const ValidationError&) {
      out.peak.push_back(std::nullopt);
    }
  }
  return out;
}

std::size_t Histogram::mode() const {
  return static_cast<std::size_t>(std::max_element(density.begin(), density.end()) - density.begin());
}

double Histogram::mass_below(double x) const {
  double m = 0;
  for (std::size_t i = 0; i < density.size(); ++i)
    if (lo + static_cast<double>(i + 1) * width <= x + 1e-12) m += density[i] * width;
  return m;
}

Histogram histogram(std::span<const double> values, double lo, double hi, double width) {
  if (!(hi > lo) || !(width > 0)) throw ValidationError("invalid histogram range");
  const auto bins = static_cast<std::size_t>(std::llround((hi - lo) / width));
  if (bins == 0) throw ValidationError("histogram has no bins");
  Histogram h;
  h.lo = lo;
  h.width = width;
  std::vector<std::size_t> counts(bins, 0);
  for (double v : values) {
    if (!(v >= lo - 1e-12 && v <= hi + 1e-12)) continue;
    auto b = static_cast<std::size_t>(std::floor((v - lo) / width + 1e-9));
    counts[std::min(b, bins - 1)]++;
    ++h.values;
  }
  h.density.resize(bins);
  for (std::size_t i = 0; i < bins; ++i)
    h.density[i] = h.values ? static_cast<double>(counts[i]) / (static_cast<double>(h.values) * width) : 0.0;
  return h;
}

Histogram peak_density(ModelKind kind, const ModelParams& params, const PeakDensityOptions& opt) {
  if (opt.n_realizations < 2) throw ValidationError("peak density needs at least 2 realizations");
  if (kind == ModelKind::nonlinear) throw ValidationError("peak densities use the linear models");
  params.validate();
  const std::vector<std::string> channels =
      kind == ModelKind::single ? std::vector<std::string>{"v_T", "v_M"}
                                : std::vector<std::string>{"v_qT", "v_M1"};

  std::vector<PeakSeries> per_run(opt.n_realizations);
  parallel_for(opt.n_realizations, opt.jobs, [&](std::size_t r) {
    SimulationRequest req;
    req.kind = kind;
    req.params = params;
    req.params.seed = params.seed + r;
    req.horizon = opt.horizon;
    req.downsample = opt.downsample;
    req.channels = channels;
    const auto run = simulate(req);  // a diverged run keeps its prefix
    per_run[r] = peak_series(run.series[0], run.series[1], opt.peaks);
  });

  std::vector<double> lags;
  std::size_t absent = 0;
  for (const auto& ps : per_run)
    for (const auto& p : ps.peak) {
      if (p)
        lags.push_back(*p);
      else
        ++absent;
    }
  if (lags.empty()) throw ValidationError("no window produced a dominant peak");
  Histogram h = histogram(lags, 0.0, opt.hist_hi, opt.bin_width);
  h.absent = absent;
  return h;
}

}  // namespace cbal
