#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace memosched {

// SplitMix64 step, used for seed derivation only.
inline std::uint64_t splitmix64_next(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Folds a path of stream ids into a base seed so every consumer (search
// stream, data stream, per-candidate training streams) gets an independent
// generator from the single experiment seed.
inline std::uint64_t derive_seed(std::uint64_t base,
                                 std::initializer_list<std::uint64_t> path) {
  std::uint64_t state = base;
  std::uint64_t out = splitmix64_next(state);
  for (std::uint64_t id : path) {
    state ^= out + id;
    out = splitmix64_next(state);
  }
  return out;
}

// Deterministic random source. Every stochastic routine in the library draws
// through this class, so a run is reproducible from its seed alone.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  static Rng derived(std::uint64_t base, std::initializer_list<std::uint64_t> path) {
    return Rng(derive_seed(base, path));
  }

  std::uint64_t next_u64() { return gen_(); }

  // uniform on [0,1)
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  // uniform on (0,1], safe to take logs of
  double uniform_pos() { return static_cast<double>((gen_() >> 11) + 1) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  std::size_t below(std::size_t n) { return static_cast<std::size_t>(gen_() % n); }

  // standard normal, Marsaglia polar method with cached spare
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    has_spare_ = true;
    return u * m;
  }

  // log of a Gamma(shape, 1) draw. Marsaglia-Tsang squeeze; shapes below one
  // use the boost G(a) = G(a+1) * U^(1/a), applied in log space so extreme
  // shapes cannot underflow to zero.
  double log_gamma(double shape) {
    double boost = 0.0;
    if (shape < 1.0) {
      boost = std::log(uniform_pos()) / shape;
      shape += 1.0;
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / (3.0 * std::sqrt(d));
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform_pos();
      const double x2 = x * x;
      if (u < 1.0 - 0.0331 * x2 * x2) return std::log(d * v) + boost;
      if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return std::log(d * v) + boost;
    }
  }

  double gamma(double shape) { return std::exp(log_gamma(shape)); }

  // Beta(a, b) from two log-gamma draws combined through a logistic, which
  // stays finite even when both draws underflow linear scale.
  double beta(double a, double b) {
    const double la = log_gamma(a);
    const double lb = log_gamma(b);
    return 1.0 / (1.0 + std::exp(lb - la));
  }

  template <class T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace memosched
