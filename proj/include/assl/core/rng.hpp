#pragma once

#include <cmath>
#include <cstdint>

namespace assl {

/// Per-sample augmentation stream identity: the derived stream is a pure
/// function of (global_seed, epoch, sample_index), independent of worker
/// layout.
struct AugmentationSeed {
  uint64_t global_seed = 0;
  int64_t epoch = 0;
  int64_t sample_index = 0;
};

namespace detail {
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
}  // namespace detail

/// Counter-based generator with hand-rolled distributions so streams are
/// bit-reproducible across standard library versions.
class Rng {
public:
  explicit Rng(uint64_t seed) : state_(detail::splitmix64(seed)) {}

  explicit Rng(const AugmentationSeed& s, uint64_t branch = 0)
      : Rng(derive(s, branch)) {}

  static uint64_t derive(const AugmentationSeed& s, uint64_t branch = 0) {
    uint64_t h = detail::splitmix64(s.global_seed);
    h = detail::splitmix64(h ^ static_cast<uint64_t>(s.epoch));
    h = detail::splitmix64(h ^ static_cast<uint64_t>(s.sample_index));
    if (branch) h = detail::splitmix64(h ^ branch);
    return h;
  }

  uint64_t next_u64() {
    state_ = detail::splitmix64(state_);
    return state_;
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Integer in [0, n).
  int64_t uniform_int(int64_t n) {
    return static_cast<int64_t>(uniform() * static_cast<double>(n));
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via Box-Muller (one value per call, cache the pair).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Fisher-Yates shuffle of indices 0..n-1.
  template <typename Vec>
  void shuffle(Vec& v) {
    for (int64_t i = static_cast<int64_t>(v.size()) - 1; i > 0; --i) {
      int64_t j = uniform_int(i + 1);
      std::swap(v[i], v[j]);
    }
  }

private:
  uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace assl
