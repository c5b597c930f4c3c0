#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace prefmo {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; used to derive independent stream seeds.
std::uint64_t mix64(std::uint64_t x);

/// Derives a seed for a named sub-stream. Distinct (seed, ids) tuples give
/// unrelated seeds, so streams are never shared between consumers.
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> ids);

inline Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> ids = {}) {
  return Rng(derive_seed(seed, ids));
}

/// Uniform on [0, 1).
double uniform01(Rng& rng);
double standard_normal(Rng& rng);
/// Gumbel(0, scale) via -scale * ln(-ln U), U clamped to [1e-12, 1 - 1e-12].
double gumbel(Rng& rng, double scale);
double unit_exponential(Rng& rng);
double chi_squared(Rng& rng, double dof);

// Stream tags for derive_seed; keeping them in one place avoids collisions.
namespace stream {
inline constexpr std::uint64_t theta = 0x7468657461ULL;
inline constexpr std::uint64_t sample = 0x73616d706c65ULL;
inline constexpr std::uint64_t inner = 0x696e6e6572ULL;
inline constexpr std::uint64_t response = 0x72657370ULL;
inline constexpr std::uint64_t policy = 0x706f6c6963ULL;
inline constexpr std::uint64_t init = 0x696e6974ULL;
inline constexpr std::uint64_t fit = 0x666974ULL;
inline constexpr std::uint64_t replication = 0x7265706cULL;
inline constexpr std::uint64_t calibration = 0x63616c6962ULL;
inline constexpr std::uint64_t observation = 0x6f6273ULL;
inline constexpr std::uint64_t reference = 0x726566ULL;
inline constexpr std::uint64_t mixing = 0x6d6978ULL;
}  // namespace stream

}  // namespace prefmo
