#include <cmath>

#include "doctest.h"
#include "prefmo/dm_sim.hpp"
#include "prefmo/surrogate.hpp"

using namespace prefmo;

namespace {

Design pt(std::initializer_list<double> v) { return Eigen::VectorXd::Map(v.begin(), static_cast<Eigen::Index>(v.size())); }

InteractionDataset simulated(const ObjectiveFn& f, int m, int d, int q, int records, double lambda,
                             std::uint64_t seed) {
  InteractionDataset data(q, m);
  Rng rng = make_rng(seed);
  const auto space = DesignSpace::unit_box(d);
  const NoiseProfile noise{Eigen::VectorXd::Constant(m, lambda)};
  for (int k = 0; k < records; ++k) {
    Query query;
    for (int i = 0; i < q; ++i) query.designs.push_back(space.sample(rng));
    data.append(query, respond(query, f, noise, rng));
  }
  return data;
}

const ObjectiveFn kBumps = [](const Design& x) {
  Eigen::VectorXd y(2);
  y[0] = std::sin(3.0 * x[0]) + 0.5 * x[1];
  y[1] = -std::pow(x[0] - 0.3, 2) + std::cos(2.0 * x[1]);
  return y;
};

}  // namespace

TEST_CASE("softmax log likelihood") {
  const std::vector<double> tie{0.0, 0.0};
  CHECK(preference_log_likelihood(tie, 1, 0.7) == doctest::Approx(std::log(0.5)));
  const double lambda = 0.3;
  const std::vector<double> v{lambda * std::log(3.0), 0.0};
  CHECK(preference_log_likelihood(v, 0, lambda) == doctest::Approx(std::log(0.75)));
  const std::vector<double> four(4, 1.5);
  CHECK(preference_log_likelihood(four, 2, 2.0) == doctest::Approx(std::log(0.25)));
  CHECK_THROWS_AS(preference_log_likelihood(tie, 2, 1.0), Error);
  CHECK_THROWS_AS(preference_log_likelihood(tie, 0, 0.0), Error);

  // Overflow safety and normalization.
  Rng rng = make_rng(1);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> vals(2 + t % 3);
    for (auto& x : vals) x = 1e3 * standard_normal(rng);
    const double l = 1e-3 + uniform01(rng);
    double total = 0.0;
    for (int i = 0; i < static_cast<int>(vals.size()); ++i) total += std::exp(preference_log_likelihood(vals, i, l));
    CHECK(std::abs(total - 1.0) <= 1e-12);
  }
}

TEST_CASE("preference fit") {
  SUBCASE("single record: winner above loser") {
    InteractionDataset data(2, 1);
    data.append(Query{{pt({0.2}), pt({0.8})}}, Response{{2}});
    const auto model = fit_preference(data, 0);
    REQUIRE(model.anchors.rows() == 2);
    CHECK(model.laplace_mean[1] >= model.laplace_mean[0]);
  }

  SUBCASE("monotone 1-d function is ranked exactly") {
    const ObjectiveFn f = [](const Design& x) { return Eigen::VectorXd::Constant(1, x[0]); };
    const auto data = simulated(f, 1, 1, 2, 60, 0.02, 5);
    const auto post = fit_preference(data, 0, {}, 3).posterior();
    const std::vector<double> probes{0.1, 0.3, 0.5, 0.7, 0.9};
    int concordant = 0, pairs = 0;
    for (std::size_t a = 0; a < probes.size(); ++a)
      for (std::size_t b = a + 1; b < probes.size(); ++b, ++pairs)
        concordant += post.mean(pt({probes[b]})) > post.mean(pt({probes[a]}));
    CHECK(concordant == pairs);
  }

  SUBCASE("model invariants on a 2-d problem") {
    const auto data = simulated(kBumps, 2, 2, 3, 25, 0.05, 6);
    for (int j = 0; j < 2; ++j) {
      const auto model = fit_preference(data, j, {}, 11);
      CHECK(model.log_marginal_likelihood >= model.initial_log_marginal_likelihood);
      CHECK(std::abs(model.likelihood_gradient.sum()) <= 1e-6);
      CHECK((model.laplace_cov - model.laplace_cov.transpose()).cwiseAbs().maxCoeff() <= 1e-8);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(model.laplace_cov);
      CHECK(eig.eigenvalues().minCoeff() >= -1e-8);
      CHECK((model.kernel.lengthscales.array() >= kLengthscaleMin).all());
      CHECK((model.kernel.lengthscales.array() <= kLengthscaleMax).all());

      const auto post = model.posterior();
      for (Eigen::Index i = 0; i < model.anchors.rows(); ++i)
        CHECK(std::abs(post.mean(model.anchors.row(i).transpose()) - model.laplace_mean[i]) <= 1e-10);
      const Design far = Design::Constant(2, 10.0 * 10.0 * model.kernel.lengthscales.maxCoeff());
      CHECK(std::abs(post.mean(far)) <= 1e-3);

      // Same seed, same model.
      const auto again = fit_preference(data, j, {}, 11);
      CHECK(again.laplace_mean == model.laplace_mean);
      CHECK(again.kernel.lengthscales == model.kernel.lengthscales);
    }
  }

  SUBCASE("anchors are deduplicated and empty data is rejected") {
    InteractionDataset data(2, 2);
    data.append(Query{{pt({0.1}), pt({0.2})}}, Response{{1, 2}});
    data.append(Query{{pt({0.2}), pt({0.1 + 1e-14})}}, Response{{1, 1}});
    CHECK(fit_preference(data, 0).anchors.rows() == 2);

    InteractionDataset empty(2, 1);
    try {
      fit_preference(empty, 0);
      FAIL("expected a data error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::data);
    }
  }

  SUBCASE("Newton failure surfaces as a fit error") {
    const auto data = simulated(kBumps, 2, 2, 2, 10, 0.05, 7);
    PreferenceFitOptions opts;
    opts.newton_max_iter = 1;
    opts.fixed_hyperparameters = true;
    try {
      fit_preference(data, 0, opts);
      FAIL("expected a fit error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::fit);
    }
  }
}

TEST_CASE("Laplace evidence gradient matches finite differences") {
  for (int q : {2, 4}) {
    const auto data = simulated(kBumps, 2, 2, q, 12, 0.1, 20 + q);
    KernelConfig k;
    k.lengthscales = Eigen::Vector2d(0.4, 1.3);
    for (double lambda : {0.02, 0.3, 2.0}) {
      Eigen::VectorXd grad;
      preference_log_marginal(data, 1, k, lambda, &grad);
      const double h = 1e-5;
      for (int p = 0; p < 3; ++p) {
        KernelConfig a = k, b = k;
        double la = lambda, lb = lambda;
        if (p < 2) {
          a.lengthscales[p] *= std::exp(h);
          b.lengthscales[p] *= std::exp(-h);
        } else {
          la *= std::exp(h);
          lb *= std::exp(-h);
        }
        const double fd = (preference_log_marginal(data, 1, a, la) - preference_log_marginal(data, 1, b, lb)) / (2 * h);
        CHECK(grad[p] == doctest::Approx(fd).epsilon(1e-5).scale(1e-3));
      }
    }
  }
}

TEST_CASE("pathwise samples") {
  SUBCASE("prior variance") {
    KernelConfig k = KernelConfig::isotropic(2, 0.3, 1.7);
    const LatentPosterior prior(k, 0.0);
    Rng rng = make_rng(30);
    for (const auto& x : {pt({0.1, 0.9}), pt({0.5, 0.5})}) {
      double s = 0.0, s2 = 0.0;
      for (int i = 0; i < 500; ++i) {
        const double v = prior.sample_path(rng).evaluate(x);
        s += v;
        s2 += v * v;
      }
      const double var = s2 / 500 - (s / 500) * (s / 500);
      CHECK(std::abs(var / 1.7 - 1.0) <= 0.15);
    }
  }

  const auto data = simulated(kBumps, 2, 2, 2, 4, 0.1, 31);
  const auto model = fit_preference(data, 0, {}, 1);
  const auto post = model.posterior();
  const auto n = model.anchors.rows();

  SUBCASE("anchor moments") {
    Rng rng = make_rng(32);
    const int draws = 500;
    Eigen::MatrixXd vals(draws, n);
    for (int s = 0; s < draws; ++s) {
      const auto f = post.sample_path(rng);
      for (Eigen::Index i = 0; i < n; ++i) vals(s, i) = f.evaluate(model.anchors.row(i).transpose());
    }
    const Eigen::VectorXd mean = vals.colwise().mean();
    const Eigen::MatrixXd centered = vals.rowwise() - mean.transpose();
    const Eigen::MatrixXd cov = centered.transpose() * centered / (draws - 1);
    const auto& S = model.laplace_cov;
    for (Eigen::Index i = 0; i < n; ++i) {
      CHECK(std::abs(mean[i] - model.laplace_mean[i]) <= 3.0 * std::sqrt(S(i, i) / draws));
      for (Eigen::Index j = 0; j <= i; ++j)
        CHECK(std::abs(cov(i, j) - S(i, j)) <= 3.0 * std::sqrt((S(i, i) * S(j, j) + S(i, j) * S(i, j)) / draws));
    }
  }

  SUBCASE("sample average tracks the posterior mean") {
    Rng rng = make_rng(33);
    const Design x = pt({0.37, 0.61});
    double s = 0.0;
    for (int i = 0; i < 200; ++i) s += post.sample_path(rng).evaluate(x);
    CHECK(std::abs(s / 200 - post.mean(x)) <= 3.0 * std::sqrt(post.variance(x) / 200));
  }

  SUBCASE("gradients match central differences") {
    Rng rng = make_rng(34);
    for (int s = 0; s < 5; ++s) {
      const auto f = post.sample_path(rng);
      for (int t = 0; t < 10; ++t) {
        const Design x = DesignSpace::unit_box(2).sample(rng);
        Eigen::VectorXd g;
        f.evaluate(x, &g);
        for (int k = 0; k < 2; ++k) {
          Design a = x, b = x;
          a[k] += 1e-5;
          b[k] -= 1e-5;
          const double fd = (f.evaluate(a) - f.evaluate(b)) / 2e-5;
          CHECK(std::abs(g[k] - fd) <= 1e-4 * std::max(1.0, std::abs(fd)));
        }
      }
    }
  }

  SUBCASE("evaluation is deterministic") {
    Rng a = make_rng(35), b = make_rng(35);
    const auto fa = post.sample_path(a), fb = post.sample_path(b);
    const Design x = pt({0.2, 0.4});
    CHECK(fa.evaluate(x) == fb.evaluate(x));
    CHECK(fa.evaluate(x) == fa.evaluate(x));
  }

  SUBCASE("JSON round trip") {
    const auto back = posterior_from_json(nlohmann::json::parse(to_json(post).dump()));
    Rng rng = make_rng(36);
    for (int i = 0; i < 10; ++i) {
      const Design x = DesignSpace::unit_box(2).sample(rng);
      CHECK(back.mean(x) == doctest::Approx(post.mean(x)).epsilon(1e-12));
      CHECK(back.variance(x) == doctest::Approx(post.variance(x)).epsilon(1e-10));
    }
    const auto j = to_json(model);
    CHECK(j.contains("kernel"));
    CHECK(j.contains("noise_scale"));
  }
}

TEST_CASE("GP regression") {
  SUBCASE("noise floor interpolates") {
    std::vector<Observation> obs;
    Rng rng = make_rng(40);
    for (int i = 0; i < 8; ++i) {
      const Design x = DesignSpace::unit_box(2).sample(rng);
      obs.push_back({x, std::sin(4.0 * x[0]) + x[1]});
    }
    RegressionFitOptions opts;
    opts.fixed_noise_variance = 1e-8;
    const auto model = fit_regression(obs, opts, 1);
    const auto post = model.posterior();
    for (const auto& o : obs) {
      CHECK(std::abs(post.mean(o.design) - o.value) <= 1e-6);
      CHECK(post.variance(o.design) <= model.kernel.signal_variance * model.y_scale * model.y_scale);
    }
  }

  SUBCASE("sin(6x) is recovered") {
    std::vector<Observation> obs;
    Rng rng = make_rng(41);
    for (int i = 0; i < 20; ++i) {
      const double x = uniform01(rng);
      obs.push_back({pt({x}), std::sin(6.0 * x)});
    }
    const auto post = fit_regression(obs, {}, 2).posterior();
    double se = 0.0;
    for (int i = 0; i < 50; ++i) {
      const double x = uniform01(rng);
      se += std::pow(post.mean(pt({x})) - std::sin(6.0 * x), 2);
    }
    CHECK(std::sqrt(se / 50) < 0.1);
  }

  SUBCASE("needs two observations") {
    const std::vector<Observation> one{{pt({0.5}), 1.0}};
    CHECK_THROWS_AS(fit_regression(one), Error);
  }
}
