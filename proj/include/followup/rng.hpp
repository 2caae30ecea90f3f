#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace followup {

// 64-bit FNV-1a. Used for vocabulary fingerprints and for deriving named
// RNG sub-streams from a root seed.
inline std::uint64_t fnv1a64(std::string_view bytes,
                             std::uint64_t h = 14695981039346656037ull) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// Deterministic RNG. std::mt19937_64 is fully specified by the standard, but
// the std distributions are not, so we provide our own draw helpers to keep
// outputs byte-identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Unbiased draw in [0, n) via Lemire's multiply-shift with rejection.
  std::uint64_t uniform_u64(std::uint64_t n) {
    if (n == 0) return 0;
    while (true) {
      std::uint64_t x = gen_();
      unsigned __int128 m = static_cast<unsigned __int128>(x) * n;
      std::uint64_t lo = static_cast<std::uint64_t>(m);
      if (lo >= n || lo >= std::uint64_t(-n) % n) {
        return static_cast<std::uint64_t>(m >> 64);
      }
    }
  }

  // Inclusive range.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(
                    uniform_u64(static_cast<std::uint64_t>(hi - lo) + 1));
  }

  // [0, 1) with 53 random bits.
  double uniform01() { return (gen_() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform01() < p; }

  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u1 = uniform01();
    double u2 = uniform01();
    if (u1 < 1e-300) u1 = 1e-300;
    double r = std::sqrt(-2.0 * std::log(u1));
    double t = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(t);
    have_cached_ = true;
    return r * std::cos(t);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = uniform_u64(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  template <typename T>
  const T& choice(const std::vector<T>& v) {
    return v[uniform_u64(v.size())];
  }

 private:
  std::mt19937_64 gen_;
  double cached_ = 0.0;
  bool have_cached_ = false;
};

// All randomness in the pipeline flows from one root seed through named
// sub-streams so each component can be reproduced independently.
inline Rng seed_stream(std::uint64_t root, std::string_view name) {
  std::uint64_t h = fnv1a64(name);
  h ^= root + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  return Rng(h);
}

}  // namespace followup
