#pragma once

#include <cstdint>

#include "svi/special_functions.hpp"

namespace svi {

// Philox4x32-10 counter-based generator (Salmon et al., SC'11 constants).
//
// Streams are cheap: the pair (seed, stream) keys an independent sequence, so
// per-trial / per-batch substreams can be derived without any state handoff.
// Every value is a pure function of (seed, stream, position), which is what
// makes seeded runs reproducible under any thread schedule.
class Philox {
 public:
  using result_type = std::uint64_t;

  explicit Philox(std::uint64_t seed, std::uint64_t stream = 0) noexcept
      : key0_(static_cast<std::uint32_t>(seed)),
        key1_(static_cast<std::uint32_t>(seed >> 32)),
        stream_lo_(static_cast<std::uint32_t>(stream)),
        stream_hi_(static_cast<std::uint32_t>(stream >> 32)) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type(0); }

  result_type operator()() noexcept { return next_u64(); }

  std::uint64_t next_u64() noexcept {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    std::uint32_t c0 = static_cast<std::uint32_t>(block_);
    std::uint32_t c1 = static_cast<std::uint32_t>(block_ >> 32);
    ++block_;
    std::uint32_t x0 = c0, x1 = c1, x2 = stream_lo_, x3 = stream_hi_;
    std::uint32_t k0 = key0_, k1 = key1_;
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = std::uint64_t(0xD2511F53u) * x0;
      const std::uint64_t p1 = std::uint64_t(0xCD9E8D57u) * x2;
      const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
      const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
      const std::uint32_t y0 = hi1 ^ x1 ^ k0;
      const std::uint32_t y1 = lo1;
      const std::uint32_t y2 = hi0 ^ x3 ^ k1;
      const std::uint32_t y3 = lo0;
      x0 = y0; x1 = y1; x2 = y2; x3 = y3;
      k0 += 0x9E3779B9u;
      k1 += 0xBB67AE85u;
    }
    spare_ = (std::uint64_t(x3) << 32) | x2;
    have_spare_ = true;
    return (std::uint64_t(x1) << 32) | x0;
  }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform() noexcept { return double(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform double in [lo, hi).
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  // Standard normal deviate via the inverse CDF (deterministic, one draw
  // per value; avoids the pairing state of Box-Muller).
  double normal() {
    double u = uniform();
    // uniform() can return exactly 0; the quantile needs p in (0, 1).
    if (u <= 0.0) u = 0x1.0p-53;
    return normal_quantile(u);
  }

 private:
  std::uint32_t key0_, key1_;
  std::uint32_t stream_lo_, stream_hi_;
  std::uint64_t block_ = 0;
  std::uint64_t spare_ = 0;
  bool have_spare_ = false;
};

}  // namespace svi
