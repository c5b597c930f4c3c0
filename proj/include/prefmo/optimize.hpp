#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "prefmo/rng.hpp"

namespace prefmo {

/// Objective for box-constrained maximization. When `grad` is non-null the
/// callee fills it with the gradient at x.
using ValueGradFn = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* grad)>;
using ValueFn = std::function<double(const Eigen::VectorXd& x)>;

struct LocalResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int iterations = 0;
  int evaluations = 0;
};

/// Projected limited-memory BFGS ascent on [lower, upper] with Armijo
/// backtracking. Stops when the projected gradient falls below `tol`, the
/// relative improvement below `ftol`, or after `max_iter` iterations.
LocalResult lbfgs_box_ascent(const ValueGradFn& f, const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                             const Eigen::VectorXd& start, int max_iter, double tol = 1e-10, double ftol = 1e-14);

/// Compass pattern search; the step starts at `initial_step` times the box
/// width and halves on failure until it falls below `tol` times the width.
LocalResult pattern_search_ascent(const ValueFn& f, const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                                  const Eigen::VectorXd& start, int max_iter, double initial_step = 0.1,
                                  double tol = 1e-7);

/// Central differences, switching to one-sided steps at the box faces.
Eigen::VectorXd finite_difference_gradient(const ValueFn& f, const Eigen::VectorXd& x, double h,
                                           const Eigen::VectorXd& lower, const Eigen::VectorXd& upper);

/// n points of the Halton sequence in [lower, upper] with a random
/// Cranley-Patterson shift drawn from rng.
std::vector<Eigen::VectorXd> shifted_halton(int n, const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                                            Rng& rng);

}  // namespace prefmo
