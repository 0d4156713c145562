#pragma once

#include <cmath>
#include <cstdint>

namespace fedveca {

// Deterministic counter-based generator, SplitMix64 style.
//
// The algorithm is pinned bit-exactly so that minibatch sequences are
// portable across platforms and compilers:
//
//   state <- state + gamma            (wrapping 64-bit add)
//   out   <- mix64(state)
//   mix64(z): z ^= z >> 30; z *= 0xBF58476D1CE4E5B9
//             z ^= z >> 27; z *= 0x94D049BB133111EB
//             z ^= z >> 31
//
// A root stream uses gamma = 0x9E3779B97F4A7C15. substream(a, b) derives a
// child stream whose seed and gamma are both mixed from (state, a, b), in
// the spirit of SplittableRandom: distinct (a, b) pairs give distinct
// affine state orbits, so derived streams do not run in lockstep and the
// chance of any shared output window within 2^32 draws is negligible
// (< 2^-60 per pair). substream() does not advance the parent.
class RngStream {
 public:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

  explicit RngStream(std::uint64_t seed) : state_(seed), gamma_(kGolden) {}

  std::uint64_t next_u64() {
    state_ += gamma_;
    return mix64(state_);
  }

  // Uniform on [0, 1) with 53 random bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform on [0, n); multiply-shift mapping of one 64-bit draw.
  std::uint64_t next_below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // Standard normal via Box-Muller (cosine branch); consumes two draws.
  double next_gaussian() {
    // (next_u64() >> 11) + 1 lands in [1, 2^53], so u1 is in (0, 1].
    const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    const double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  RngStream substream(std::uint64_t a, std::uint64_t b) const {
    std::uint64_t s = mix64(state_ + kGolden * (a + 1));
    s = mix64(s + kGolden * (b + 1));
    const std::uint64_t g = mix64(s + kGolden) | 1ULL;
    return RngStream(s, g);
  }

  std::uint64_t state() const { return state_; }

  static std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  RngStream(std::uint64_t state, std::uint64_t gamma) : state_(state), gamma_(gamma) {}

  std::uint64_t state_;
  std::uint64_t gamma_;
};

// Seed for a named module boundary (data generation, partitioning, ...).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t purpose,
                                 std::uint64_t variant) {
  return RngStream(seed).substream(purpose, variant).state();
}

// Purpose tags used by the experiment runner.
inline constexpr std::uint64_t kPurposeData = 1;
inline constexpr std::uint64_t kPurposePartition = 2;
inline constexpr std::uint64_t kPurposeTraining = 3;
inline constexpr std::uint64_t kPurposeCentralized = 4;
inline constexpr std::uint64_t kPurposeInit = 5;

}  // namespace fedveca
