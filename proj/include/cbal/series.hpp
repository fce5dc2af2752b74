#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace cbal {

/// Uniformly sampled scalar channel.
struct TimeSeries {
  std::vector<double> samples;
  double dt_sample = 1.0;
  std::string label;
  double t0 = 0.0;

  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }
  double time(std::size_t i) const noexcept { return t0 + static_cast<double>(i) * dt_sample; }
  std::span<const double> view() const noexcept { return samples; }
};

/// Backward-difference derivative with the first sample set to zero.
TimeSeries finite_difference(const TimeSeries& series, std::string label);

}  // namespace cbal
