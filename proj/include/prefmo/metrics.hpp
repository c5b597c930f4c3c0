#pragma once

#include <span>
#include <vector>

#include "prefmo/core.hpp"

namespace prefmo {

/// Exact hypervolume dominated by `points` above `reference` (m <= 4).
/// Coordinates below the reference are clipped to it.
double hypervolume_exact(std::span<const ObjectiveVector> points, const ObjectiveVector& reference);

struct McEstimate {
  double estimate = 0.0;
  double standard_error = 0.0;
};

/// Monte-Carlo hypervolume over the box [reference, max(points)]. Samples are
/// drawn in chunks of kMcChunk, chunk k from stream (seed, k), and chunks
/// are processed in parallel; the result does not depend on thread count.
McEstimate hypervolume_mc(std::span<const ObjectiveVector> points, const ObjectiveVector& reference,
                          std::int64_t n_samples, std::uint64_t seed);

/// Single-threaded reference for hypervolume_mc; identical output.
McEstimate hypervolume_mc_serial(std::span<const ObjectiveVector> points, const ObjectiveVector& reference,
                                 std::int64_t n_samples, std::uint64_t seed);

inline constexpr std::int64_t kMcChunk = 1 << 16;

/// Hypervolume of the true objective vectors of all designs shown up to and
/// including each record.
std::vector<double> running_hv_trace(const InteractionDataset& data, const ObjectiveFn& f,
                                     const ObjectiveVector& reference);

}  // namespace prefmo
