#pragma once

#include <string>
#include <vector>

#include "prefmo/core.hpp"

namespace prefmo {

/// Synthetic benchmark in maximization form on the unit box.
struct TestProblem {
  std::string name;
  DesignSpace space = DesignSpace::unit_box(1);
  int m = 0;
  ObjectiveFn evaluate;
  /// Fixed hypervolume reference: componentwise minimum over 1e5 uniform
  /// designs, pushed down by 1% of the per-objective range.
  ObjectiveVector hv_reference;

  int dim() const { return space.dim(); }
};

// Standard suite problems, negated. Inputs are normalized to [0,1]^d and
// anything outside the box throws a domain error.
ObjectiveVector dtlz1(const Design& x);            // d = 6, m = 2
ObjectiveVector dtlz2(const Design& x);            // d = 3, m = 2
ObjectiveVector vehicle_safety(const Design& x);   // d = 5, m = 3
ObjectiveVector car_side_impact(const Design& x);  // d = 7, m = 4

/// Looks a problem up by its config name. The reference point is computed
/// once per process and cached.
const TestProblem& get_problem(const std::string& name);
std::vector<std::string> problem_names();

/// n uniform designs as rows. Chunk k draws from stream (seed, k), so the
/// result does not depend on the thread count.
Eigen::MatrixXd sample_uniform_designs(const DesignSpace& space, int n, std::uint64_t seed);

/// Row-wise objective evaluation, OpenMP-parallel over rows.
Eigen::MatrixXd evaluate_rows(const ObjectiveFn& f, int m, const Eigen::MatrixXd& designs);
/// Serial reference for evaluate_rows.
Eigen::MatrixXd evaluate_rows_serial(const ObjectiveFn& f, int m, const Eigen::MatrixXd& designs);

}  // namespace prefmo
