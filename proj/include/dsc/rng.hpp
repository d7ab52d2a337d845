#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace dsc {

// Mixes a 64-bit state with a salt; used to derive independent child streams
// so that per-series / per-slice draws do not depend on evaluation order.
inline uint64_t hash_mix(uint64_t seed, uint64_t salt) {
  uint64_t x = seed + 0x9e3779b97f4a7c15ULL + salt * 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

// Deterministic RNG. Gaussian draws use Box-Muller instead of
// std::normal_distribution so streams are identical across standard
// library implementations.
class Rng {
public:
  explicit Rng(uint64_t seed) : seed_(seed), engine_(seed) {}

  // Child stream derived from the construction seed, not the evolving engine
  // state, so children are independent of how much the parent has drawn.
  Rng child(uint64_t salt) const { return Rng(hash_mix(seed_, salt)); }

  uint64_t seed() const { return seed_; }
  uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  long uniform_int(long lo, long hi_inclusive) {
    const uint64_t span = static_cast<uint64_t>(hi_inclusive - lo + 1);
    return lo + static_cast<long>(engine_() % span);
  }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    const double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(engine_() % i);
      std::swap(v[i - 1], v[j]);
    }
  }

private:
  uint64_t seed_ = 0;
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace dsc
