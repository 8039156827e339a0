#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace crl {

// splitmix64: cheap, well-mixed 64-bit hash used to derive independent
// stream seeds from (seed, index...) tuples so parallel work stays
// reproducible regardless of scheduling.
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t mix_seed(uint64_t seed, uint64_t a) { return splitmix64(seed ^ splitmix64(a)); }

inline uint64_t mix_seed(uint64_t seed, uint64_t a, uint64_t b) {
  return splitmix64(mix_seed(seed, a) ^ splitmix64(b + 0x632be59bd9b4e019ULL));
}

inline uint64_t mix_seed(uint64_t seed, uint64_t a, uint64_t b, uint64_t c) {
  return splitmix64(mix_seed(seed, a, b) ^ splitmix64(c + 0x9e6c63d0876a9a47ULL));
}

// Rng wraps mt19937_64 with hand-rolled distributions.  The standard
// distributions are implementation-defined, so using them would make
// outputs differ across standard libraries; these stay bit-stable.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // uniform double in [0, 1)
  double uniform() { return (gen_() >> 11) * 0x1.0p-53; }

  // uniform double in [lo, hi)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [lo, hi] inclusive, via rejection-free modulo on a
  // 64-bit draw (bias is negligible for the small ranges used here and the
  // result is reproducible everywhere)
  long uniform_int(long lo, long hi) {
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<long>(gen_() % span);
  }

  // standard normal via Box-Muller; one value per call, cache the pair
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    // avoid log(0)
    if (u1 < 1e-300) u1 = 1e-300;
    double r = std::sqrt(-2.0 * std::log(u1));
    double th = 2.0 * M_PI * u2;
    spare_ = r * std::sin(th);
    have_spare_ = true;
    return r * std::cos(th);
  }

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace crl
