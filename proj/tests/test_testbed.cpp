#include <array>
#include <cmath>

#include "doctest.h"
#include "prefmo/testbed.hpp"

using namespace prefmo;

namespace {

// Second transcription of the crashworthiness problems, written as monomial
// tables in native units so that typos in one copy do not hide in the other.
struct Term {
  double c;
  int a;  // 1-based variable index or 0
  int b;
};

double poly(const std::vector<Term>& terms, const std::array<double, 8>& v) {
  double s = 0.0;
  for (const auto& t : terms) s += t.c * (t.a ? v[t.a] : 1.0) * (t.b ? v[t.b] : 1.0);
  return s;
}

std::array<double, 8> native(const Design& u, const std::vector<double>& lo, const std::vector<double>& hi) {
  std::array<double, 8> v{};
  for (std::size_t i = 0; i < lo.size(); ++i) v[i + 1] = lo[i] + u[static_cast<Eigen::Index>(i)] * (hi[i] - lo[i]);
  return v;
}

Eigen::VectorXd vehicle_oracle(const Design& u) {
  const auto v = native(u, {1, 1, 1, 1, 1}, {3, 3, 3, 3, 3});
  const std::vector<Term> mass{{1640.2823, 0, 0}, {2.3573285, 1, 0}, {2.3220035, 2, 0}, {4.5688768, 3, 0},
                               {7.7213633, 4, 0}, {4.4559504, 5, 0}};
  const std::vector<Term> accel{{6.5856, 0, 0},  {1.15, 1, 0},    {-1.0427, 2, 0}, {0.9738, 3, 0},
                                {0.8364, 4, 0},  {-0.3695, 1, 4}, {0.0861, 1, 5},  {0.3628, 2, 4},
                                {-0.1106, 1, 1}, {-0.3437, 3, 3}, {0.1764, 4, 4}};
  const std::vector<Term> intrusion{{-0.0551, 0, 0}, {0.0181, 1, 0},  {0.1024, 2, 0},  {0.0421, 3, 0},
                                    {-0.0073, 1, 2}, {0.024, 2, 3},   {-0.0118, 2, 4}, {-0.0204, 3, 4},
                                    {-0.008, 3, 5},  {-0.0241, 2, 2}, {0.0109, 4, 4}};
  Eigen::VectorXd y(3);
  y << -poly(mass, v), -poly(accel, v), -poly(intrusion, v);
  return y;
}

Eigen::VectorXd car_oracle(const Design& u) {
  const auto v = native(u, {0.5, 0.45, 0.5, 0.5, 0.875, 0.4, 0.4}, {1.5, 1.35, 1.5, 1.5, 2.625, 1.2, 1.2});
  const double f1 = poly({{1.98, 0, 0}, {4.9, 1, 0}, {6.67, 2, 0}, {6.98, 3, 0}, {4.01, 4, 0}, {1.78, 5, 0},
                          {0.00001, 6, 0}, {2.73, 7, 0}},
                         v);
  const double f2 = poly({{4.72, 0, 0}, {-0.5, 4, 0}, {-0.19, 2, 3}}, v);
  const double vmbp = poly({{10.58, 0, 0}, {-0.674, 1, 2}, {-0.67275, 2, 0}}, v);
  const double vfd = poly({{16.45, 0, 0}, {-0.489, 3, 7}, {-0.843, 5, 6}}, v);
  const std::vector<double> g{
      poly({{-0.16, 0, 0}, {0.3717, 2, 4}, {0.0092928, 3, 0}}, v),
      poly({{0.059, 0, 0}, {0.0159, 1, 2}, {0.06486, 1, 0}, {0.019, 2, 7}, {-0.0144, 3, 5}, {-0.0154464, 6, 0}}, v),
      poly({{0.106, 0, 0}, {-0.00817, 5, 0}, {0.0587118, 1, 0}, {-0.03099, 2, 6}, {0.018, 2, 7}, {-0.030408, 3, 0},
            {0.00364, 5, 6}, {0.018, 2, 2}},
           v),
      poly({{-0.42, 0, 0}, {0.61, 2, 0}, {0.031296, 3, 0}, {0.031872, 7, 0}, {-0.227, 2, 2}}, v),
      poly({{3.02, 0, 0}, {-3.818, 3, 0}, {4.2, 1, 2}, {-1.27296, 6, 0}, {2.68065, 7, 0}}, v),
      poly({{-3.31728, 0, 0}, {-2.95, 3, 0}, {5.057, 1, 2}, {3.795, 2, 0}, {3.4431, 7, 0}}, v),
      poly({{-14.36, 0, 0}, {9.9, 2, 0}, {4.4505, 1, 0}}, v),
      4.0 - f2,
      9.9 - vmbp,
      15.7 - vfd,
  };
  double violation = 0.0;
  for (double gi : g) violation += std::max(0.0, -gi);
  Eigen::VectorXd y(4);
  y << -f1, -f2, -0.5 * (vmbp + vfd), -violation;
  return y;
}

Design point(std::initializer_list<double> v) { return Eigen::VectorXd::Map(v.begin(), static_cast<Eigen::Index>(v.size())); }

}  // namespace

TEST_CASE("dtlz1") {
  const auto y = dtlz1(point({0.5, 0.5, 0.5, 0.5, 0.5, 0.5}));
  CHECK(y[0] == doctest::Approx(-0.25).epsilon(1e-12));
  CHECK(y[1] == doctest::Approx(-0.25).epsilon(1e-12));

  Rng rng = make_rng(1);
  for (int i = 0; i < 100; ++i) {
    Design x = Design::Constant(6, 0.5);
    x[0] = uniform01(rng);
    const auto front = dtlz1(x);
    CHECK(front.sum() == doctest::Approx(-0.5).epsilon(1e-12));
    CHECK(front[0] == doctest::Approx(-0.5 * x[0]).epsilon(1e-12));

    const auto any = dtlz1(DesignSpace::unit_box(6).sample(rng));
    CHECK(std::isfinite(any[0]));
    CHECK((any.array() <= 0.0).all());
  }
  CHECK_THROWS_AS(dtlz1(point({0.5, 0.5, 0.5, 0.5, 0.5, 1.5})), Error);
}

TEST_CASE("dtlz2") {
  auto y = dtlz2(point({0, 0.5, 0.5}));
  CHECK(y[0] == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(std::abs(y[1]) < 1e-15);

  y = dtlz2(point({0.5, 0.5, 0.5}));
  CHECK(y[0] == doctest::Approx(-std::sqrt(0.5)).epsilon(1e-12));
  CHECK(y[1] == doctest::Approx(-std::sqrt(0.5)).epsilon(1e-12));

  Rng rng = make_rng(2);
  for (int i = 0; i < 100; ++i) {
    const auto f = dtlz2(point({uniform01(rng), 0.5, 0.5}));
    CHECK(std::abs(f.norm() - 1.0) <= 1e-12);
    CHECK((f.array() <= 0.0).all());
  }
  CHECK_THROWS_AS(dtlz2(point({0.5, 0.5})), Error);
  CHECK_THROWS_AS(dtlz2(point({-0.1, 0.5, 0.5})), Error);
}

TEST_CASE("vehicle safety matches an independent transcription") {
  const Design mid = Design::Constant(5, 0.5);
  CHECK(vehicle_safety(mid) == vehicle_safety(mid));
  CHECK(vehicle_safety(mid).allFinite());
  Rng rng = make_rng(3);
  for (int i = 0; i < 100; ++i) {
    const Design x = DesignSpace::unit_box(5).sample(rng);
    const auto y = vehicle_safety(x);
    REQUIRE(y.size() == 3);
    const auto o = vehicle_oracle(x);
    for (int j = 0; j < 3; ++j) CHECK(y[j] == doctest::Approx(o[j]).epsilon(1e-12));
  }
}

TEST_CASE("car side impact matches an independent transcription") {
  const Design mid = Design::Constant(7, 0.5);
  CHECK(car_side_impact(mid) == car_side_impact(mid));
  CHECK(car_side_impact(mid).allFinite());
  Rng rng = make_rng(4);
  for (int i = 0; i < 100; ++i) {
    const Design x = DesignSpace::unit_box(7).sample(rng);
    const auto y = car_side_impact(x);
    REQUIRE(y.size() == 4);
    const auto o = car_oracle(x);
    for (int j = 0; j < 4; ++j) CHECK(y[j] == doctest::Approx(o[j]).epsilon(1e-10).scale(1.0));
  }
}

TEST_CASE("registry and reference points") {
  for (const auto& name : problem_names()) {
    const auto& p = get_problem(name);
    CHECK(p.name == name);
    CHECK(p.hv_reference.size() == p.m);
    const auto designs = sample_uniform_designs(p.space, 10000, 77);
    const auto values = evaluate_rows(p.evaluate, p.m, designs);
    std::vector<ObjectiveVector> pts;
    for (Eigen::Index r = 0; r < values.rows(); ++r) pts.push_back(values.row(r).transpose());
    for (auto i : non_dominated_filter(pts)) CHECK((pts[i].array() >= p.hv_reference.array()).all());
  }
  CHECK(get_problem("dtlz1").dim() == 6);
  CHECK(get_problem("dtlz2").dim() == 3);
  CHECK(get_problem("vehicle_safety").m == 3);
  CHECK(get_problem("car_side_impact").m == 4);
  CHECK_THROWS_AS(get_problem("zdt1"), Error);
}

TEST_CASE("parallel row evaluation equals the serial reference") {
  const auto& p = get_problem("car_side_impact");
  const auto designs = sample_uniform_designs(p.space, 5000, 5);
  CHECK(evaluate_rows(p.evaluate, p.m, designs) == evaluate_rows_serial(p.evaluate, p.m, designs));
  CHECK(sample_uniform_designs(p.space, 5000, 5) == designs);
}
