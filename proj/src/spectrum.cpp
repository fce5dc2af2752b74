#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <mutex>
#include <numbers>

#include "cbal/analysis.hpp"

namespace cbal {

namespace {

// FFTW's planner is not re-entrant.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};

class RealFft {
 public:
  explicit RealFft(std::size_t n)
      : n_(n),
        in_(static_cast<double*>(fftw_malloc(sizeof(double) * n))),
        out_(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1)))) {
    std::lock_guard lock(planner_mutex());
    plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in_.get(), out_.get(), FFTW_ESTIMATE);
  }
  ~RealFft() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  double* input() { return in_.get(); }
  const fftw_complex* execute() {
    fftw_execute(plan_);
    return out_.get();
  }

 private:
  std::size_t n_;
  std::unique_ptr<double, FftwFree> in_;
  std::unique_ptr<fftw_complex, FftwFree> out_;
  fftw_plan plan_;
};

struct Line {
  double slope = 0, intercept = 0, residual = 0;
};

Line least_squares(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  Line l;
  l.slope = sxx > 0 ? sxy / sxx : 0.0;
  l.intercept = my - l.slope * mx;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (l.intercept + l.slope * x[i]);
    l.residual += r * r;
  }
  return l;
}

}  // namespace

PowerSpectrum power_spectrum(const TimeSeries& series, std::size_t segment_length, double overlap) {
  if (!(series.dt_sample > 0)) throw ValidationError("dt_sample must be > 0");
  if (segment_length < 2) throw ValidationError("segment length must be >= 2");
  if (segment_length > series.size()) throw ValidationError("segment length exceeds series length");
  if (!(overlap >= 0 && overlap < 1)) throw ValidationError("overlap must be in [0, 1)");
  const auto hop = static_cast<std::size_t>(
      std::llround(static_cast<double>(segment_length) * (1.0 - overlap)));
  if (hop == 0) throw ValidationError("overlap leaves no hop between segments");

  const std::size_t n = segment_length;
  std::vector<double> window(n);
  double window_power = 0;
  for (std::size_t i = 0; i < n; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                     static_cast<double>(n));
    window_power += window[i] * window[i];
  }
  const double fs = 1.0 / series.dt_sample;
  const std::size_t bins = n / 2 + 1;

  PowerSpectrum out;
  out.segment_length = n;
  out.overlap = overlap;
  out.frequency.resize(bins);
  out.power.assign(bins, 0.0);
  for (std::size_t k = 0; k < bins; ++k) out.frequency[k] = static_cast<double>(k) * fs / static_cast<double>(n);

  RealFft fft(n);
  const auto& x = series.samples;
  for (std::size_t start = 0; start + n <= x.size(); start += hop) {
    double mean = 0;
    for (std::size_t i = 0; i < n; ++i) mean += x[start + i];
    mean /= static_cast<double>(n);
    double* in = fft.input();
    for (std::size_t i = 0; i < n; ++i) in[i] = (x[start + i] - mean) * window[i];
    const fftw_complex* X = fft.execute();
    for (std::size_t k = 0; k < bins; ++k) {
      const double mag2 = X[k][0] * X[k][0] + X[k][1] * X[k][1];
      const bool edge = k == 0 || (n % 2 == 0 && k == n / 2);
      out.power[k] += (edge ? 1.0 : 2.0) * mag2 / (fs * window_power);
    }
    ++out.segments;
  }
  for (double& p : out.power) p /= static_cast<double>(out.segments);
  return out;
}

SlopeFit fit_two_regime_slopes(const PowerSpectrum& spectrum, const SlopeFitOptions& opt) {
  if (!(opt.f_lo > 0) || !(opt.f_hi > opt.f_lo)) throw ValidationError("invalid fit band");
  if (opt.f_hi / opt.f_lo < 100.0 * (1 - 1e-12)) throw ValidationError("fit band must span at least 2 decades");

  std::vector<double> lx, ly;
  const double l0 = std::log10(opt.f_lo), l1 = std::log10(opt.f_hi);
  if (opt.bins_per_decade == 0) {
    for (std::size_t k = 0; k < spectrum.frequency.size(); ++k) {
      const double f = spectrum.frequency[k], p = spectrum.power[k];
      if (f >= opt.f_lo && f <= opt.f_hi && p > 0) {
        lx.push_back(std::log10(f));
        ly.push_back(std::log10(p));
      }
    }
  } else {
    const auto n_bins = static_cast<std::size_t>(std::ceil((l1 - l0) * static_cast<double>(opt.bins_per_decade) - 1e-9));
    std::vector<double> sum(n_bins, 0.0), sum_f(n_bins, 0.0);
    std::vector<std::size_t> count(n_bins, 0);
    for (std::size_t k = 0; k < spectrum.frequency.size(); ++k) {
      const double f = spectrum.frequency[k], p = spectrum.power[k];
      if (!(f >= opt.f_lo && f <= opt.f_hi && p > 0)) continue;
      auto b = static_cast<std::size_t>((std::log10(f) - l0) / (l1 - l0) * static_cast<double>(n_bins));
      b = std::min(b, n_bins - 1);
      sum[b] += p;
      sum_f[b] += std::log10(f);
      ++count[b];
    }
    for (std::size_t b = 0; b < n_bins; ++b) {
      if (count[b] == 0) continue;
      lx.push_back(sum_f[b] / static_cast<double>(count[b]));
      ly.push_back(std::log10(sum[b] / static_cast<double>(count[b])));
    }
  }
  if (lx.size() < 2 * opt.min_points) throw ValidationError("too few positive spectral points in band");

  SlopeFit fit;
  fit.points = lx.size();
  const Line whole = least_squares(lx, ly);
  fit.single_slope = whole.slope;
  fit.single_residual = whole.residual;

  double best = std::numeric_limits<double>::infinity();
  for (std::size_t g = 1; g <= opt.breakpoints; ++g) {
    const double lb = l0 + (l1 - l0) * static_cast<double>(g) / static_cast<double>(opt.breakpoints + 1);
    const auto split = static_cast<std::size_t>(std::lower_bound(lx.begin(), lx.end(), lb) - lx.begin());
    if (split < opt.min_points || lx.size() - split < opt.min_points) continue;
    const std::span<const double> x(lx), y(ly);
    const Line lo = least_squares(x.first(split), y.first(split));
    const Line hi = least_squares(x.subspan(split), y.subspan(split));
    if (lo.residual + hi.residual < best) {
      best = lo.residual + hi.residual;
      fit.slope_low = lo.slope;
      fit.intercept_low = lo.intercept;
      fit.residual_low = lo.residual;
      fit.slope_high = hi.slope;
      fit.intercept_high = hi.intercept;
      fit.residual_high = hi.residual;
      fit.breakpoint = std::pow(10.0, lb);
    }
  }
  if (!std::isfinite(best)) throw ValidationError("no admissible breakpoint in the fit band");
  fit.improvement = whole.residual > 0 ? 1.0 - best / whole.residual : 0.0;
  fit.second_regime = fit.improvement >= 0.05;
  return fit;
}

}  // namespace cbal
