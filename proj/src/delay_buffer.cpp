#include "cbal/delay_buffer.hpp"

#include <stdexcept>

namespace cbal {

DelayBuffer::DelayBuffer(std::size_t delay_steps, double fill)
    : ring_(delay_steps + 1, fill) {}

double DelayBuffer::at(std::size_t lag) const {
  if (lag > delay_steps()) throw std::out_of_range("DelayBuffer::at: lag exceeds delay");
  const std::size_t n = ring_.size();
  return ring_[(head_ + n - 1 - lag) % n];
}

double DelayBuffer::sum_of_squares() const noexcept {
  double s = 0;
  for (double v : ring_) s += v * v;
  return s;
}

}  // namespace cbal
