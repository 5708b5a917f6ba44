#ifndef GAMFIT_RNG_HPP
#define GAMFIT_RNG_HPP

#include <cmath>
#include <cstdint>

namespace gamfit {

// Counter-based SplitMix64 generator. Output i of stream s is a pure
// function of (seed, s, i), so replicate substreams are independent of
// execution order and results are reproducible across platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
      : state_(mix(seed ^ 0x9e3779b97f4a7c15ULL) ^ mix(stream * 0xbf58476d1ce4e5b9ULL + 0x94d049bb133111ebULL)) {}

  static Rng substream(std::uint64_t seed, std::uint64_t replicate) {
    return Rng(seed, replicate + 1);
  }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix(state_);
  }

  // uniform on (0,1), 53-bit resolution, endpoints excluded
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u = uniform();
    const double v = uniform();
    const double r = std::sqrt(-2.0 * std::log(u));
    spare_ = r * std::sin(2.0 * M_PI * v);
    have_spare_ = true;
    return r * std::cos(2.0 * M_PI * v);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  bool bernoulli(double p) { return uniform() < p; }

  // product-of-uniforms method; fine for the moderate means used here
  long poisson(double mean) {
    const double limit = std::exp(-mean);
    double prod = 1.0;
    long k = -1;
    do {
      prod *= uniform();
      ++k;
    } while (prod > limit);
    return k;
  }

  double exponential(double mean) { return -mean * std::log(uniform()); }

  double truncated_normal_nonneg(double mean, double sd) {
    double x;
    do {
      x = normal(mean, sd);
    } while (x < 0.0);
    return x;
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace gamfit

#endif
