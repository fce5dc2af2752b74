#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cbal/params.hpp"
#include "cbal/series.hpp"

namespace cbal {

// ---------------------------------------------------------------- amplitude

/// sqrt(mean(x^2)), no mean removal. Throws ValidationError on empty input.
double rms(std::span<const double> samples);
inline double rms(const TimeSeries& series) { return rms(series.view()); }

struct EnsembleOptions {
  double horizon = 1200.0;        // s
  std::size_t n_realizations = 500;
  std::size_t downsample = 10;     // integration steps per recorded sample
  std::string channel;             // empty = dx (single) / dq1 (coupled)
  unsigned jobs = 0;
};

struct EnsembleRms {
  std::vector<std::uint64_t> seeds;  // one per retained realization
  std::vector<double> rms;
  std::vector<std::uint64_t> diverged_seeds;
  double mean_log10 = 0;             // mean of log10(rms) over retained runs

  double headline() const;           // 10^mean_log10
};

/// Independent-seed realizations (seeds params.seed + r). Diverged runs are
/// excluded and listed.
EnsembleRms ensemble_rms(ModelKind kind, const ModelParams& params, const EnsembleOptions& options);

struct PooledSamples {
  std::vector<double> values;  // concatenated over retained realizations
  std::size_t realizations = 0;
  std::vector<std::uint64_t> diverged_seeds;
};

/// One channel (options.channel, required) pooled over independent-seed
/// realizations; diverged runs are left out.
PooledSamples pooled_channel(ModelKind kind, const ModelParams& params, const EnsembleOptions& options);

// ---------------------------------------------------------------- spectra

struct PowerSpectrum {
  std::vector<double> frequency;  // Hz, strictly increasing from 0
  std::vector<double> power;      // one-sided PSD, units^2 / Hz
  std::size_t segment_length = 0;
  double overlap = 0;
  std::size_t segments = 0;
};

/// Averaged periodogram: Hann-windowed, mean-removed segments of
/// `segment_length` samples overlapping by the fraction `overlap`.
PowerSpectrum power_spectrum(const TimeSeries& series, std::size_t segment_length,
                             double overlap = 0.5);

struct SlopeFit {
  double slope_low = 0, slope_high = 0;
  double intercept_low = 0, intercept_high = 0;  // log10 power at f = 1 Hz
  double breakpoint = 0;                          // Hz
  double residual_low = 0, residual_high = 0;     // sums of squared log10 residuals
  double single_slope = 0;
  double single_residual = 0;
  double improvement = 0;                         // 1 - two-regime / single residual
  bool second_regime = false;                     // improvement >= 5%
  std::size_t points = 0;                         // fitted log-log points
};

struct SlopeFitOptions {
  double f_lo = 0, f_hi = 0;          // band, must span >= 2 decades
  std::size_t bins_per_decade = 20;   // log-binning before the fit; 0 = raw bins
  std::size_t breakpoints = 60;       // candidate grid size
  std::size_t min_points = 4;         // per side
};

/// Two independent least-squares lines in log-log on either side of a
/// breakpoint chosen from a log-spaced interior grid by minimum total
/// residual. Non-positive power bins are dropped.
SlopeFit fit_two_regime_slopes(const PowerSpectrum& spectrum, const SlopeFitOptions& options);

// ---------------------------------------------------------------- densities

struct DensityRatioBin {
  double center = 0;
  double density_a = 0, density_b = 0;
  double ratio = 0;  // density_a / density_b
  std::size_t count_a = 0, count_b = 0;
};

struct DensityRatio {
  double half_range = 0;  // grid spans [-half_range, half_range]
  double bin_width = 0;
  std::vector<DensityRatioBin> bins;  // only bins with >= min_count in both

  /// Mean ratio over bins with |center| <= fraction * half_range.
  double central_mean(double fraction = 0.1) const;
};

struct DensityRatioOptions {
  std::size_t bins = 101;          // odd, so one bin is centred on zero
  double half_range = 0;           // 0 = quantile-based (see below)
  double range_quantile = 0.95;    // half_range = min over inputs of this |x| quantile
  std::size_t min_count = 100;
};

/// Histogram density of `a` divided by that of `b` on one shared symmetric
/// grid. Densities are normalised by the full sample count of each input.
DensityRatio density_ratio(std::span<const double> a, std::span<const double> b,
                           const DensityRatioOptions& options = {});

inline DensityRatio velocity_density_ratio(const TimeSeries& coupled_velocity,
                                           const TimeSeries& single_velocity,
                                           const DensityRatioOptions& options = {}) {
  return density_ratio(coupled_velocity.view(), single_velocity.view(), options);
}

// ---------------------------------------------------------------- STCC

struct StccResult {
  std::vector<double> lag;          // s
  std::vector<double> coefficient;  // in [-1, 1]
  double t = 0;                     // window start, s
  double window = 0;                // s
};

struct LagRange {
  double min = 0.0;  // s, may be negative
  double max = 0.5;  // s
};

/// Short-time cross-correlation coefficient between x(s) and y(s + lag) over
/// s in [t, t + window). Means and standard deviations are windowed
/// averages; y's are taken over the lag-shifted window so each coefficient
/// is a true correlation. Lags step by the sample interval.
StccResult stcc(const TimeSeries& x, const TimeSeries& y, double t, double window,
                const LagRange& lags = {});

/// Same on raw sample spans: window starts at index `start` and spans `length`
/// samples, lags in samples.
std::vector<double> stcc_samples(std::span<const double> x, std::span<const double> y,
                                 std::size_t start, std::size_t length, long lag_min,
                                 long lag_max);

/// Lag of the smallest-lag strict local maximum within [lo, hi] whose height
/// is at least `prominence` times the maximum over that range. Absent when
/// there is none or the maximum is not positive.
std::optional<double> first_dominant_peak(const StccResult& stcc, double lo = 0.0,
                                          double hi = 0.5, double prominence = 0.8);

struct PeakSeriesOptions {
  double window = 5.0;   // s
  double hop = 1.0;      // s
  LagRange lags{0.0, 0.5};
  double prominence = 0.8;
};

struct PeakSeries {
  std::vector<double> t;                    // window starts
  std::vector<std::optional<double>> peak;  // first dominant peak per window
};

/// Sliding-window first-dominant-peak lags between x and y. Windows whose
/// signal is constant yield an absent peak.
PeakSeries peak_series(const TimeSeries& x, const TimeSeries& y, const PeakSeriesOptions& options);

struct Histogram {
  double lo = 0, width = 0;
  std::vector<double> density;  // integrates to 1 over recorded values
  std::size_t values = 0;
  std::size_t absent = 0;

  double center(std::size_t i) const { return lo + (static_cast<double>(i) + 0.5) * width; }
  std::size_t mode() const;
  /// Probability mass of bins lying entirely below `x`.
  double mass_below(double x) const;
};

Histogram histogram(std::span<const double> values, double lo, double hi, double width);

struct PeakDensityOptions {
  std::size_t n_realizations = 100;
  double horizon = 1200.0;
  std::size_t downsample = 5;    // dt_sample = downsample * dt
  PeakSeriesOptions peaks{};
  double bin_width = 0.01;
  double hist_hi = 0.5;
  unsigned jobs = 0;
};

/// Density of first-dominant-peak lags between tip and base velocities
/// (single: v_T vs v_M, coupled: v_qT vs v_M1) pooled over realizations.
Histogram peak_density(ModelKind kind, const ModelParams& params, const PeakDensityOptions& options);

}  // namespace cbal
