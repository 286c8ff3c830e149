#pragma once

#include <cstdint>
#include <random>

namespace cmab {

// splitmix64 finalizer (Steele, Lea, Flood 2014). Used both to whiten seeds
// and as the stream-splitting function recorded in run metadata.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// k-th derived stream seed from a base seed. Identifier: "splitmix64-v1".
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t k) {
  return splitmix64(base + (k + 1) * 0x9e3779b97f4a7c15ULL);
}

inline constexpr const char* kSeedMixId = "splitmix64-v1";

// Deterministic random stream. mt19937_64 is bit-reproducible across
// platforms by the standard; the double/int mappings below are ours so the
// whole stream is too (std::uniform_real_distribution is not portable).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(splitmix64(seed)) {}

  // uniform in [0, 1) with 53 random bits
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform in {0, ..., n-1} (Lemire multiply-shift; bias < n/2^64)
  std::uint64_t uniform_int(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(eng_()) * n) >> 64);
  }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 eng_;
};

}  // namespace cmab
