#include "prefmo/testbed.hpp"

#include <cmath>
#include <map>
#include <mutex>

namespace prefmo {
namespace {

void require_unit_box(const Design& x, int d, const char* name) {
  if (x.size() != d) throw Error(ErrorKind::dimension, std::string(name) + ": wrong input dimension");
  for (int i = 0; i < d; ++i)
    if (!(x[i] >= 0.0 && x[i] <= 1.0)) throw Error(ErrorKind::domain, std::string(name) + ": input outside [0,1]^d");
}

// Affine map from the unit box to native bounds.
Eigen::VectorXd to_native(const Design& x, std::initializer_list<double> lo, std::initializer_list<double> hi) {
  Eigen::VectorXd z(x.size());
  auto l = lo.begin();
  auto h = hi.begin();
  for (Eigen::Index i = 0; i < x.size(); ++i, ++l, ++h) z[i] = *l + (*h - *l) * x[i];
  return z;
}

constexpr std::uint64_t kReferenceSeed = 20240501;
constexpr int kReferenceSamples = 100000;

TestProblem build(const std::string& name) {
  TestProblem p;
  p.name = name;
  if (name == "dtlz1") {
    p.space = DesignSpace::unit_box(6);
    p.m = 2;
    p.evaluate = dtlz1;
  } else if (name == "dtlz2") {
    p.space = DesignSpace::unit_box(3);
    p.m = 2;
    p.evaluate = dtlz2;
  } else if (name == "vehicle_safety") {
    p.space = DesignSpace::unit_box(5);
    p.m = 3;
    p.evaluate = vehicle_safety;
  } else if (name == "car_side_impact") {
    p.space = DesignSpace::unit_box(7);
    p.m = 4;
    p.evaluate = car_side_impact;
  } else {
    throw Error(ErrorKind::config, "unknown problem '" + name + "'", "problem");
  }

  const auto designs = sample_uniform_designs(p.space, kReferenceSamples, derive_seed(kReferenceSeed, {stream::reference}));
  const auto values = evaluate_rows(p.evaluate, p.m, designs);
  const Eigen::VectorXd lo = values.colwise().minCoeff();
  const Eigen::VectorXd hi = values.colwise().maxCoeff();
  p.hv_reference = lo - 0.01 * (hi - lo);
  return p;
}

}  // namespace

ObjectiveVector dtlz1(const Design& x) {
  require_unit_box(x, 6, "dtlz1");
  double g = 0.0;
  for (int i = 1; i < 6; ++i) {
    const double z = x[i] - 0.5;
    g += z * z - std::cos(20.0 * M_PI * z);
  }
  g = 100.0 * (5.0 + g);
  ObjectiveVector y(2);
  y[0] = -0.5 * x[0] * (1.0 + g);
  y[1] = -0.5 * (1.0 - x[0]) * (1.0 + g);
  return y;
}

ObjectiveVector dtlz2(const Design& x) {
  require_unit_box(x, 3, "dtlz2");
  double g = 0.0;
  for (int i = 1; i < 3; ++i) g += (x[i] - 0.5) * (x[i] - 0.5);
  const double angle = 0.5 * M_PI * x[0];
  ObjectiveVector y(2);
  y[0] = -(1.0 + g) * std::cos(angle);
  y[1] = -(1.0 + g) * std::sin(angle);
  return y;
}

ObjectiveVector vehicle_safety(const Design& x) {
  require_unit_box(x, 5, "vehicle_safety");
  const auto z = to_native(x, {1, 1, 1, 1, 1}, {3, 3, 3, 3, 3});
  const double x1 = z[0], x2 = z[1], x3 = z[2], x4 = z[3], x5 = z[4];
  const double mass = 1640.2823 + 2.3573285 * x1 + 2.3220035 * x2 + 4.5688768 * x3 + 7.7213633 * x4 +
                      4.4559504 * x5;
  const double accel = 6.5856 + 1.15 * x1 - 1.0427 * x2 + 0.9738 * x3 + 0.8364 * x4 - 0.3695 * x1 * x4 +
                       0.0861 * x1 * x5 + 0.3628 * x2 * x4 - 0.1106 * x1 * x1 - 0.3437 * x3 * x3 +
                       0.1764 * x4 * x4;
  const double intrusion = -0.0551 + 0.0181 * x1 + 0.1024 * x2 + 0.0421 * x3 - 0.0073 * x1 * x2 +
                           0.024 * x2 * x3 - 0.0118 * x2 * x4 - 0.0204 * x3 * x4 - 0.008 * x3 * x5 -
                           0.0241 * x2 * x2 + 0.0109 * x4 * x4;
  ObjectiveVector y(3);
  y << -mass, -accel, -intrusion;
  return y;
}

ObjectiveVector car_side_impact(const Design& x) {
  require_unit_box(x, 7, "car_side_impact");
  const auto z = to_native(x, {0.5, 0.45, 0.5, 0.5, 0.875, 0.4, 0.4}, {1.5, 1.35, 1.5, 1.5, 2.625, 1.2, 1.2});
  const double x1 = z[0], x2 = z[1], x3 = z[2], x4 = z[3], x5 = z[4], x6 = z[5], x7 = z[6];

  const double weight = 1.98 + 4.9 * x1 + 6.67 * x2 + 6.98 * x3 + 4.01 * x4 + 1.78 * x5 + 0.00001 * x6 + 2.73 * x7;
  const double force = 4.72 - 0.5 * x4 - 0.19 * x2 * x3;
  const double v_mbp = 10.58 - 0.674 * x1 * x2 - 0.67275 * x2;
  const double v_fd = 16.45 - 0.489 * x3 * x7 - 0.843 * x5 * x6;
  const double velocity = 0.5 * (v_mbp + v_fd);

  const double g[10] = {
      1.0 - 1.16 + 0.3717 * x2 * x4 + 0.0092928 * x3,
      0.32 - 0.261 + 0.0159 * x1 * x2 + 0.06486 * x1 + 0.019 * x2 * x7 - 0.0144 * x3 * x5 - 0.0154464 * x6,
      0.32 - 0.214 - 0.00817 * x5 + 0.045195 * x1 + 0.0135168 * x1 - 0.03099 * x2 * x6 + 0.018 * x2 * x7 -
          0.007176 * x3 - 0.023232 * x3 + 0.00364 * x5 * x6 + 0.018 * x2 * x2,
      0.32 - 0.74 + 0.61 * x2 + 0.031296 * x3 + 0.031872 * x7 - 0.227 * x2 * x2,
      32.0 - 28.98 - 3.818 * x3 + 4.2 * x1 * x2 - 1.27296 * x6 + 2.68065 * x7,
      32.0 - 33.86 - 2.95 * x3 + 5.057 * x1 * x2 + 3.795 * x2 + 3.4431 * x7 - 1.45728,
      32.0 - 46.36 + 9.9 * x2 + 4.4505 * x1,
      4.0 - force,
      9.9 - v_mbp,
      15.7 - v_fd,
  };
  // Total constraint violation.
  double violation = 0.0;
  for (double gi : g)
    if (gi < 0.0) violation -= gi;

  ObjectiveVector y(4);
  y << -weight, -force, -velocity, -violation;
  return y;
}

const TestProblem& get_problem(const std::string& name) {
  static std::mutex mutex;
  static std::map<std::string, TestProblem> cache;
  std::lock_guard lock(mutex);
  auto it = cache.find(name);
  if (it == cache.end()) it = cache.emplace(name, build(name)).first;
  return it->second;
}

std::vector<std::string> problem_names() { return {"dtlz1", "dtlz2", "vehicle_safety", "car_side_impact"}; }

Eigen::MatrixXd sample_uniform_designs(const DesignSpace& space, int n, std::uint64_t seed) {
  constexpr int kChunk = 4096;
  const int d = space.dim();
  Eigen::MatrixXd out(n, d);
  const int chunks = (n + kChunk - 1) / kChunk;
#pragma omp parallel for schedule(static)
  for (int c = 0; c < chunks; ++c) {
    Rng rng = make_rng(seed, {static_cast<std::uint64_t>(c)});
    const int end = std::min(n, (c + 1) * kChunk);
    for (int r = c * kChunk; r < end; ++r) out.row(r) = space.sample(rng).transpose();
  }
  return out;
}

Eigen::MatrixXd evaluate_rows(const ObjectiveFn& f, int m, const Eigen::MatrixXd& designs) {
  const auto n = designs.rows();
  Eigen::MatrixXd out(n, m);
#pragma omp parallel for schedule(static)
  for (Eigen::Index r = 0; r < n; ++r) out.row(r) = f(designs.row(r).transpose()).transpose();
  return out;
}

Eigen::MatrixXd evaluate_rows_serial(const ObjectiveFn& f, int m, const Eigen::MatrixXd& designs) {
  Eigen::MatrixXd out(designs.rows(), m);
  for (Eigen::Index r = 0; r < designs.rows(); ++r) out.row(r) = f(designs.row(r).transpose()).transpose();
  return out;
}

}  // namespace prefmo
