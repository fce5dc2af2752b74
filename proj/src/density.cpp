#include <algorithm>
#include <cmath>
#include <limits>

#include "cbal/analysis.hpp"

namespace cbal {

namespace {

double abs_quantile(std::span<const double> v, double q) {
  std::vector<double> a(v.size());
  std::transform(v.begin(), v.end(), a.begin(), [](double x) { return std::abs(x); });
  const auto k = static_cast<std::size_t>(q * static_cast<double>(a.size() - 1));
  std::nth_element(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(k), a.end());
  return a[k];
}

std::vector<std::size_t> bin_counts(std::span<const double> v, double half_range, std::size_t bins) {
  std::vector<std::size_t> counts(bins, 0);
  const double width = 2.0 * half_range / static_cast<double>(bins);
  for (double x : v) {
    if (!(x >= -half_range && x < half_range)) continue;
    const auto b = static_cast<std::size_t>((x + half_range) / width);
    counts[std::min(b, bins - 1)]++;
  }
  return counts;
}

}  // namespace

double DensityRatio::central_mean(double fraction) const {
  double sum = 0;
  std::size_t n = 0;
  for (const auto& b : bins)
    if (std::abs(b.center) <= fraction * half_range + 1e-12 * half_range) {
      sum += b.ratio;
      ++n;
    }
  return n ? sum / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

DensityRatio density_ratio(std::span<const double> a, std::span<const double> b,
                           const DensityRatioOptions& opt) {
  if (a.empty() || b.empty()) throw ValidationError("density ratio of an empty series");
  if (opt.bins < 3 || opt.bins % 2 == 0) throw ValidationError("density ratio needs an odd bin count >= 3");
  double half = opt.half_range;
  if (half <= 0) {
    if (!(opt.range_quantile > 0 && opt.range_quantile <= 1))
      throw ValidationError("range quantile must be in (0, 1]");
    half = std::min(abs_quantile(a, opt.range_quantile), abs_quantile(b, opt.range_quantile));
  }
  if (!(half > 0) || !std::isfinite(half)) throw ValidationError("density grid has zero width");

  DensityRatio out;
  out.half_range = half;
  out.bin_width = 2.0 * half / static_cast<double>(opt.bins);
  const auto ca = bin_counts(a, half, opt.bins);
  const auto cb = bin_counts(b, half, opt.bins);
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  for (std::size_t i = 0; i < opt.bins; ++i) {
    if (ca[i] < opt.min_count || cb[i] < opt.min_count) continue;
    DensityRatioBin bin;
    bin.center = -half + (static_cast<double>(i) + 0.5) * out.bin_width;
    bin.count_a = ca[i];
    bin.count_b = cb[i];
    bin.density_a = static_cast<double>(ca[i]) / (na * out.bin_width);
    bin.density_b = static_cast<double>(cb[i]) / (nb * out.bin_width);
    bin.ratio = bin.density_a / bin.density_b;
    out.bins.push_back(bin);
  }
  if (out.bins.empty()) throw ValidationError("no bin has support in both inputs");
  return out;
}

}  // namespace cbal
