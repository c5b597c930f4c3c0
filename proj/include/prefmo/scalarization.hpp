#pragma once

#include "prefmo/core.hpp"

namespace prefmo {

inline constexpr double kDefaultRho = 0.05;

/// A point theta of the weight simplex plus the augmentation constant rho.
struct ScalarizationWeights {
  Eigen::VectorXd theta;
  double rho = kDefaultRho;

  /// Throws unless theta >= 0, sum(theta) = 1 within 1e-12 and rho > 0.
  void validate() const;
};

/// Augmented Chebyshev scalarization: min_j theta_j y_j + rho * sum_j theta_j y_j.
double chebyshev(const ObjectiveVector& y, const ScalarizationWeights& w);

/// A supergradient of chebyshev() with respect to y. The min term contributes
/// through its first minimizing index.
Eigen::VectorXd chebyshev_gradient(const ObjectiveVector& y, const ScalarizationWeights& w);

/// Uniform draw from the (m-1)-simplex by normalizing m unit exponentials.
ScalarizationWeights sample_weights(Rng& rng, int m, double rho = kDefaultRho);

}  // namespace prefmo
