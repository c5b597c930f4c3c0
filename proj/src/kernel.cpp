#include "prefmo/kernel.hpp"

#include <cmath>

namespace prefmo {
namespace {
constexpr double kSqrt5 = 2.23606797749978969640;

double scaled_distance(const KernelConfig& k, const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  return ((x - y).array() / k.lengthscales.array()).matrix().norm();
}

double matern_of_r(double s2, double r) {
  const double a = kSqrt5 * r;
  return s2 * (1.0 + a + a * a / 3.0) * std::exp(-a);
}
}  // namespace

KernelConfig KernelConfig::isotropic(int dim, double lengthscale, double signal_variance) {
  KernelConfig k;
  k.lengthscales = Eigen::VectorXd::Constant(dim, lengthscale);
  k.signal_variance = signal_variance;
  return k;
}

double matern52(const KernelConfig& k, const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  return matern_of_r(k.signal_variance, scaled_distance(k, x, y));
}

Eigen::MatrixXd gram(const KernelConfig& k, const Eigen::MatrixXd& points, double nugget) {
  const auto n = points.rows();
  const Eigen::MatrixXd scaled = points * k.lengthscales.cwiseInverse().asDiagonal();
  Eigen::MatrixXd out(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out(i, i) = k.signal_variance + nugget;
    for (Eigen::Index j = 0; j < i; ++j) {
      const double r = (scaled.row(i) - scaled.row(j)).norm();
      out(i, j) = out(j, i) = matern_of_r(k.signal_variance, r);
    }
  }
  return out;
}

Eigen::VectorXd cross(const KernelConfig& k, const Eigen::VectorXd& x, const Eigen::MatrixXd& points, double nugget) {
  const auto n = points.rows();
  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd diff = x - points.row(i).transpose();
    const double r = (diff.array() / k.lengthscales.array()).matrix().norm();
    out[i] = matern_of_r(k.signal_variance, r);
    if (diff.cwiseAbs().maxCoeff() <= 1e-12) out[i] += nugget;
  }
  return out;
}

Eigen::MatrixXd cross_gradient(const KernelConfig& k, const Eigen::VectorXd& x, const Eigen::MatrixXd& points) {
  const auto n = points.rows();
  const Eigen::ArrayXd inv_l2 = k.lengthscales.array().square().inverse();
  Eigen::MatrixXd out(x.size(), n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::ArrayXd diff = x.array() - points.row(i).transpose().array();
    const double r = std::sqrt((diff.square() * inv_l2).sum());
    const double a = kSqrt5 * r;
    // dk/dx = -s2 (5/3) (1 + sqrt5 r) exp(-sqrt5 r) (x - y) / l^2
    const double scale = -k.signal_variance * (5.0 / 3.0) * (1.0 + a) * std::exp(-a);
    out.col(i) = (scale * diff * inv_l2).matrix();
  }
  return out;
}

nlohmann::json to_json(const KernelConfig& k) {
  return {{"family", "matern52"},
          {"lengthscales", std::vector<double>(k.lengthscales.data(), k.lengthscales.data() + k.lengthscales.size())},
          {"signal_variance", k.signal_variance}};
}

KernelConfig kernel_from_json(const nlohmann::json& j) {
  KernelConfig k;
  const auto ls = j.at("lengthscales").get<std::vector<double>>();
  k.lengthscales = Eigen::Map<const Eigen::VectorXd>(ls.data(), static_cast<Eigen::Index>(ls.size()));
  k.signal_variance = j.at("signal_variance").get<double>();
  return k;
}

}  // namespace prefmo
