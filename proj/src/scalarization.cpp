#include "prefmo/scalarization.hpp"

#include <cmath>

namespace prefmo {

void ScalarizationWeights::validate() const {
  if (theta.size() < 1) throw Error(ErrorKind::dimension, "scalarization weights are empty");
  if (!(rho > 0.0)) throw Error(ErrorKind::config, "rho must be positive", "scalarization.rho");
  if ((theta.array() < 0.0).any()) throw Error(ErrorKind::config, "weights must be nonnegative");
  if (std::abs(theta.sum() - 1.0) > 1e-12) throw Error(ErrorKind::config, "weights must sum to one");
}

double chebyshev(const ObjectiveVector& y, const ScalarizationWeights& w) {
  if (y.size() != w.theta.size()) throw Error(ErrorKind::dimension, "objective and weight lengths differ");
  const Eigen::ArrayXd weighted = w.theta.array() * y.array();
  return weighted.minCoeff() + w.rho * weighted.sum();
}

Eigen::VectorXd chebyshev_gradient(const ObjectiveVector& y, const ScalarizationWeights& w) {
  if (y.size() != w.theta.size()) throw Error(ErrorKind::dimension, "objective and weight lengths differ");
  const Eigen::ArrayXd weighted = w.theta.array() * y.array();
  Eigen::Index arg = 0;
  weighted.minCoeff(&arg);
  Eigen::VectorXd g = w.rho * w.theta;
  g[arg] += w.theta[arg];
  return g;
}

ScalarizationWeights sample_weights(Rng& rng, int m, double rho) {
  if (m < 1) throw Error(ErrorKind::dimension, "number of objectives must be >= 1");
  ScalarizationWeights w;
  w.rho = rho;
  w.theta.resize(m);
  if (m == 1) {
    w.theta[0] = 1.0;
    return w;
  }
  for (int j = 0; j < m; ++j) w.theta[j] = unit_exponential(rng);
  w.theta /= w.theta.sum();
  return w;
}

}  // namespace prefmo
