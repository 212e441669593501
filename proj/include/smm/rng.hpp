#pragma once

#include <cstdint>

#include "smm/normal.hpp"

namespace smm {

// Counter-based PRNG: output i of a stream is a strong 64-bit mix of
// (key, i), where the key is derived from (seed, stream id). Draw identity
// therefore depends only on the seed, the stream id, and the call index,
// never on shared mutable state, so per-task substreams stay reproducible
// under any thread count. The core sequence is splitmix64, whose outputs
// pass BigCrush.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0)
      : seed_(seed), stream_(stream), key_(derive_key(seed, stream)) {}

  std::uint64_t next_u64() { return fmix(key_ + (++counter_) * kGolden); }

  // Uniform draw strictly inside (0, 1): 53 random bits, centered, so the
  // inverse-CDF transform below never sees 0 or 1.
  double next_uniform() {
    const double bits = static_cast<double>(next_u64() >> 11);
    return (bits + 0.5) * 0x1.0p-53;
  }

  // Standard normal via the shared inverse CDF; exactly one uniform is
  // consumed per gaussian, so draw identity is independent of consumption
  // pattern.
  double next_gaussian() { return normal_quantile(next_uniform()); }

  // Derives an independent child stream. Children of distinct (stream,
  // index) pairs have distinct keys with overwhelming probability.
  RngStream substream(std::uint64_t index) const {
    const std::uint64_t child =
        fmix(stream_ + kGolden) ^ fmix(index + 0x632be59bd9b4e019ULL);
    return RngStream(seed_, child);
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

 private:
  static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

  static std::uint64_t fmix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  static std::uint64_t derive_key(std::uint64_t seed, std::uint64_t stream) {
    return fmix(fmix(seed + kGolden) + stream * 0xd6e8feb86659fd93ULL);
  }

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace smm
