#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace relkit {

// Mixes (base seed, tag, indices) into an independent stream seed.
// Every source of randomness in the project draws from a stream derived
// this way, so skipping one feature never shifts the draws of another
// and training can resume mid-run from (seed, epoch, step) alone.
uint64_t derive_seed(uint64_t base, std::string_view tag, uint64_t a = 0,
                     uint64_t b = 0, uint64_t c = 0);

// mt19937_64 wrapper with hand-rolled draw helpers. The helpers avoid
// std::uniform_*_distribution so the byte-for-byte reproducibility
// contract does not depend on the standard library's distribution
// implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1) with 53 bits of precision.
  double uniform01() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, n). n must be positive.
  uint64_t uniform_int(uint64_t n);

  // Standard normal via the polar method.
  double normal();

  // Poisson draw by Knuth's product-of-uniforms method (exact for the
  // small means used here).
  int64_t poisson(double mu);

  // Gamma(shape, 1) via Marsaglia-Tsang, with the shape<1 boost.
  double gamma(double shape);

  // Beta(a, b) from two gamma draws.
  double beta(double a, double b);

  // Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 eng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace relkit
