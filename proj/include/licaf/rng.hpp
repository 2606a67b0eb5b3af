#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace licaf {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Deterministic RNG. mt19937_64 gives a standard-specified output sequence,
/// and all distributions below are derived from the raw bits by hand, so a
/// given (seed, stream) produces the same draws on every platform/compiler.
class Rng {
 public:
  explicit Rng(uint64_t seed, uint64_t stream = 0)
      : eng_(splitmix64(splitmix64(seed) ^ splitmix64(stream ^ 0xabcdef1234567890ULL))) {}

  uint64_t next_u64() { return eng_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be > 0.
  long uniform_int(long n) {
    // Lemire-style rejection to avoid modulo bias.
    const uint64_t un = static_cast<uint64_t>(n);
    uint64_t x, r;
    do {
      x = next_u64();
      r = x % un;
    } while (x - r > uint64_t(0) - un);
    return static_cast<long>(r);
  }

  /// Standard normal via Box-Muller on the uniform above.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1, u2;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * M_PI * u2;
    spare_ = r * std::sin(t);
    have_spare_ = true;
    return r * std::cos(t);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Partial Fisher-Yates: permutes v in place.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (long i = static_cast<long>(v.size()) - 1; i > 0; --i) {
      long j = uniform_int(i + 1);
      std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(j)]);
    }
  }

 private:
  std::mt19937_64 eng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace licaf
