#include "cbal/noise.hpp"

namespace cbal {

namespace {

// splitmix64 finalizer; spreads (seed, stream) pairs over the engine seed space
std::uint64_t mix(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

NoiseStream::NoiseStream(std::uint64_t seed, std::uint32_t stream_id)
    : seed_(seed),
      stream_id_(stream_id),
      engine_(mix(mix(seed) ^ (static_cast<std::uint64_t>(stream_id) << 1 | 1))) {}

}  // namespace cbal
