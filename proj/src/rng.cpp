#include "prefmo/rng.hpp"

#include <algorithm>
#include <cmath>

namespace prefmo {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> ids) {
  std::uint64_t h = mix64(seed);
  for (std::uint64_t id : ids) h = mix64(h ^ mix64(id + 0x632be59bd9b4e019ULL));
  return h;
}

double uniform01(Rng& rng) {
  // 53 random bits, independent of libstdc++'s generate_canonical.
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double standard_normal(Rng& rng) {
  // Box-Muller, one draw per call so the stream position is predictable.
  const double u1 = std::max(uniform01(rng), 1e-300);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

double gumbel(Rng& rng, double scale) {
  const double u = std::clamp(uniform01(rng), 1e-12, 1.0 - 1e-12);
  return -scale * std::log(-std::log(u));
}

double unit_exponential(Rng& rng) {
  const double u = std::clamp(uniform01(rng), 1e-300, 1.0);
  return -std::log(u);
}

double chi_squared(Rng& rng, double dof) {
  std::gamma_distribution<double> gamma(0.5 * dof, 2.0);
  return gamma(rng);
}

}  // namespace prefmo
