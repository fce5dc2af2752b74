#pragma once

#include <cstdint>

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>

namespace cbal {

/// Seeded source of standard Gaussian deviates.
///
/// Streams with the same (seed, stream id) replay the same sequence; distinct
/// stream ids are statistically independent.
class NoiseStream {
 public:
  NoiseStream(std::uint64_t seed, std::uint32_t stream_id);

  double operator()() { return normal_(engine_); }

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint32_t stream_id() const noexcept { return stream_id_; }

 private:
  std::uint64_t seed_;
  std::uint32_t stream_id_;
  boost::random::mt19937_64 engine_;
  boost::random::normal_distribution<double> normal_;
};

}  // namespace cbal
