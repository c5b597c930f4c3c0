#include "prefmo/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace prefmo {
namespace {

// Hypervolume of points already clipped and shifted so the reference is 0.
double sweep(std::vector<Eigen::VectorXd> pts, int m) {
  if (pts.empty()) return 0.0;
  if (m == 1) {
    double best = 0.0;
    for (const auto& p : pts) best = std::max(best, p[0]);
    return best;
  }
  if (m == 2) {
    std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a[0] > b[0]; });
    double volume = 0.0, height = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      height = std::max(height, pts[i][1]);
      const double next = i + 1 < pts.size() ? pts[i + 1][0] : 0.0;
      volume += (pts[i][0] - next) * height;
    }
    return volume;
  }
  // Slice along the last coordinate, highest first.
  std::sort(pts.begin(), pts.end(), [m](const auto& a, const auto& b) { return a[m - 1] > b[m - 1]; });
  double volume = 0.0;
  std::vector<Eigen::VectorXd> slice;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    slice.push_back(pts[i].head(m - 1));
    const double next = i + 1 < pts.size() ? pts[i + 1][m - 1] : 0.0;
    const double depth = pts[i][m - 1] - next;
    if (depth > 0.0) volume += depth * sweep(slice, m - 1);
  }
  return volume;
}

struct McBox {
  std::vector<Eigen::VectorXd> points;
  Eigen::VectorXd lower, width;
  double volume = 0.0;
};

McBox mc_box(std::span<const ObjectiveVector> points, const ObjectiveVector& reference) {
  McBox box;
  box.lower = reference;
  Eigen::VectorXd upper = reference;
  std::vector<ObjectiveVector> clipped;
  for (const auto& p : points) {
    if (p.size() != reference.size()) throw Error(ErrorKind::dimension, "point and reference lengths differ");
    clipped.push_back(p.cwiseMax(reference));
    upper = upper.cwiseMax(clipped.back());
  }
  box.width = upper - reference;
  box.volume = box.width.prod();
  if (!clipped.empty())
    for (auto i : non_dominated_filter(clipped)) box.points.push_back(clipped[i]);
  return box;
}

std::int64_t count_chunk(const McBox& box, std::int64_t count, std::uint64_t seed, std::int64_t chunk) {
  Rng rng = make_rng(seed, {static_cast<std::uint64_t>(chunk)});
  const auto m = box.lower.size();
  Eigen::VectorXd u(m);
  std::int64_t hits = 0;
  for (std::int64_t s = 0; s < count; ++s) {
    for (Eigen::Index k = 0; k < m; ++k) u[k] = box.lower[k] + box.width[k] * uniform01(rng);
    for (const auto& p : box.points) {
      if ((p.array() >= u.array()).all()) {
        ++hits;
        break;
      }
    }
  }
  return hits;
}

McEstimate finish(const McBox& box, std::int64_t hits, std::int64_t n) {
  const double frac = static_cast<double>(hits) / static_cast<double>(n);
  return {frac * box.volume, box.volume * std::sqrt(frac * (1.0 - frac) / static_cast<double>(n))};
}

}  // namespace

double hypervolume_exact(std::span<const ObjectiveVector> points, const ObjectiveVector& reference) {
  const int m = static_cast<int>(reference.size());
  if (m > 4) throw Error(ErrorKind::unsupported, "exact hypervolume supports at most 4 objectives; use hypervolume_mc");
  if (points.empty()) return 0.0;
  std::vector<ObjectiveVector> shifted;
  shifted.reserve(points.size());
  for (const auto& p : points) {
    if (p.size() != m) throw Error(ErrorKind::dimension, "point and reference lengths differ");
    shifted.push_back((p - reference).cwiseMax(0.0));
  }
  std::vector<Eigen::VectorXd> kept;
  for (auto i : non_dominated_filter(shifted))
    if ((shifted[i].array() > 0.0).all()) kept.push_back(shifted[i]);
  return sweep(std::move(kept), m);
}

McEstimate hypervolume_mc(std::span<const ObjectiveVector> points, const ObjectiveVector& reference,
                          std::int64_t n_samples, std::uint64_t seed) {
  const auto box = mc_box(points, reference);
  if (box.volume <= 0.0 || box.points.empty() || n_samples <= 0) return {};
  const std::int64_t chunks = (n_samples + kMcChunk - 1) / kMcChunk;
  std::int64_t hits = 0;
#pragma omp parallel for schedule(dynamic) reduction(+ : hits)
  for (std::int64_t c = 0; c < chunks; ++c)
    hits += count_chunk(box, std::min(kMcChunk, n_samples - c * kMcChunk), seed, c);
  return finish(box, hits, n_samples);
}

McEstimate hypervolume_mc_serial(std::span<const ObjectiveVector> points, const ObjectiveVector& reference,
                                 std::int64_t n_samples, std::uint64_t seed) {
  const auto box = mc_box(points, reference);
  if (box.volume <= 0.0 || box.points.empty() || n_samples <= 0) return {};
  std::int64_t hits = 0;
  for (std::int64_t c = 0; c * kMcChunk < n_samples; ++c)
    hits += count_chunk(box, std::min(kMcChunk, n_samples - c * kMcChunk), seed, c);
  return finish(box, hits, n_samples);
}

std::vector<double> running_hv_trace(const InteractionDataset& data, const ObjectiveFn& f,
                                     const ObjectiveVector& reference) {
  std::vector<double> trace;
  std::vector<ObjectiveVector> front;
  for (const auto& rec : data.records) {
    for (const auto& x : rec.query.designs) front.push_back(f(x));
    std::vector<ObjectiveVector> kept;
    for (auto i : non_dominated_filter(front)) kept.push_back(front[i]);
    front = std::move(kept);
    trace.push_back(hypervolume_exact(front, reference));
  }
  return trace;
}

}  // namespace prefmo
