#pragma once

#include <Eigen/Dense>

#include "json.hpp"

namespace prefmo {

/// Matern-5/2 ARD kernel hyperparameters.
struct KernelConfig {
  Eigen::VectorXd lengthscales;
  double signal_variance = 1.0;

  static KernelConfig isotropic(int dim, double lengthscale, double signal_variance = 1.0);
  int dim() const { return static_cast<int>(lengthscales.size()); }
};

inline constexpr double kLengthscaleMin = 1e-3;
inline constexpr double kLengthscaleMax = 1e2;

/// k(x, y) = s2 (1 + sqrt5 r + 5 r^2 / 3) exp(-sqrt5 r), r the scaled distance.
double matern52(const KernelConfig& k, const Eigen::VectorXd& x, const Eigen::VectorXd& y);

/// Gram matrix over the rows of `points`, with `nugget` added on the diagonal.
Eigen::MatrixXd gram(const KernelConfig& k, const Eigen::MatrixXd& points, double nugget);

/// Row vector k(x, points_i). Rows that coincide with x (within 1e-12) get
/// the nugget added, so the nugget acts as a white-noise kernel component.
Eigen::VectorXd cross(const KernelConfig& k, const Eigen::VectorXd& x, const Eigen::MatrixXd& points, double nugget);

/// d x n matrix of gradients of k(x, points_i) with respect to x.
Eigen::MatrixXd cross_gradient(const KernelConfig& k, const Eigen::VectorXd& x, const Eigen::MatrixXd& points);

nlohmann::json to_json(const KernelConfig& k);
KernelConfig kernel_from_json(const nlohmann::json& j);

}  // namespace prefmo
