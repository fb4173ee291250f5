#pragma once

// Counter-based random streams. A draw is a hash of (seed, stream id,
// counter), so the sequence for a given (seed, stream) is identical across
// runs and independent of how other streams are consumed. One stream per
// purpose; fork() derives child streams for per-sample parallelism.

#include <cmath>
#include <cstdint>

namespace flowsr {

namespace detail {

inline std::uint64_t splitmix(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace detail

class RngStream {
 public:
  RngStream() : RngStream(0, 0) {}
  RngStream(std::uint64_t seed, std::uint64_t stream)
      : seed_(seed), stream_(stream), counter_(0),
        key_(detail::splitmix(seed) ^ detail::splitmix(detail::splitmix(stream) + 0xA5A5A5A5A5A5A5A5ULL)) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64() {
    return detail::splitmix(detail::splitmix(counter_++) ^ key_);
  }

  // Uniform on [0, 1), 53-bit resolution.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; two counter ticks per draw.
  double normal() {
    double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  float uniformf() { return static_cast<float>(uniform()); }
  float normalf() { return static_cast<float>(normal()); }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  // Independent child stream; deterministic in (seed, stream, child).
  RngStream fork(std::uint64_t child) const {
    return RngStream(seed_, detail::splitmix(stream_ ^ detail::splitmix(child + 0x517CC1B727220A95ULL)));
  }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_;
  std::uint64_t key_;
};

// Fixed stream ids, one per purpose (data order, noise draws, t draws, ...).
namespace streams {
constexpr std::uint64_t kParamInit = 1;
constexpr std::uint64_t kDataOrder = 2;
constexpr std::uint64_t kDequant = 3;
constexpr std::uint64_t kEpsDraw = 4;
constexpr std::uint64_t kTimeDraw = 5;
constexpr std::uint64_t kLatentDraw = 6;
constexpr std::uint64_t kSampler = 7;
constexpr std::uint64_t kDataGen = 8;
}  // namespace streams

}  // namespace flowsr
