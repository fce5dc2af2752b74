#pragma once

#include <cstddef>
#include <vector>

namespace cbal {

/// Fixed-capacity ring of a scalar signal sampled on the integration grid.
///
/// Holds the last `delay_steps + 1` values. After a push, `delayed()` is the
/// value pushed exactly `delay_steps` pushes earlier and `latest()` is the
/// value just pushed.
class DelayBuffer {
 public:
  DelayBuffer(std::size_t delay_steps, double fill);

  void push(double value) noexcept {
    ring_[head_] = value;
    head_ = head_ + 1 == ring_.size() ? 0 : head_ + 1;
  }

  /// Value pushed `delay_steps` pushes ago (the oldest entry).
  double delayed() const noexcept { return ring_[head_]; }

  double latest() const noexcept {
    return ring_[head_ == 0 ? ring_.size() - 1 : head_ - 1];
  }

  /// Value pushed `lag` pushes before the latest one; lag <= delay_steps.
  double at(std::size_t lag) const;

  std::size_t capacity() const noexcept { return ring_.size(); }
  std::size_t delay_steps() const noexcept { return ring_.size() - 1; }

  void scale(double factor) noexcept {
    for (double& v : ring_) v *= factor;
  }

  double sum_of_squares() const noexcept;

 private:
  std::vector<double> ring_;
  std::size_t head_ = 0;  // next write slot == oldest entry
};

}  // namespace cbal
