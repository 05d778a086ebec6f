#pragma once

#include <cstdint>
#include <random>

#include "dqp/special.hpp"

namespace dqp {

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
}  // namespace detail

// Deterministic RNG: mt19937_64 with 53-bit open-interval uniforms and
// inverse-cdf normals, so a seed fixes every downstream draw exactly.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), gen_(detail::splitmix64(seed)) {}

  // Uniform on the open interval (0, 1).
  double uniform() {
    return (static_cast<double>(gen_() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
  }

  double normal() { return norm_quantile(uniform()); }

  // Independent child stream; used for parallel replications.
  Rng stream(std::uint64_t salt) const {
    return Rng(detail::splitmix64(seed_ ^ (0x9e3779b97f4a7c15ULL * (salt + 1))));
  }

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 gen_;
};

}  // namespace dqp
