#include "prefmo/dm_sim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace prefmo {

void NoiseProfile::validate() const {
  if (lambda.size() < 1) throw Error(ErrorKind::config, "noise profile is empty", "lambda");
  for (Eigen::Index j = 0; j < lambda.size(); ++j)
    if (!(lambda[j] > 0.0) || !std::isfinite(lambda[j]))
      throw Error(ErrorKind::config, "Gumbel scales must be positive", "lambda");
}

Response respond(const Query& query, const ObjectiveFn& f, const NoiseProfile& noise, Rng& rng,
                 const std::vector<bool>& observable) {
  noise.validate();
  const int q = query.size();
  if (q < 2) throw Error(ErrorKind::data, "a query needs at least two designs");
  std::vector<ObjectiveVector> values;
  values.reserve(q);
  for (const auto& x : query.designs) values.push_back(f(x));
  const auto m = values.front().size();
  if (noise.lambda.size() != m) throw Error(ErrorKind::dimension, "noise profile length differs from m");

  Response r;
  r.winners.assign(static_cast<std::size_t>(m), 0);
  for (Eigen::Index j = 0; j < m; ++j) {
    if (j < static_cast<Eigen::Index>(observable.size()) && observable[j]) continue;
    double best = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < q; ++i) {
      const double v = values[i][j] + gumbel(rng, noise.lambda[j]);
      if (v > best) {
        best = v;
        r.winners[j] = i + 1;
      }
    }
  }
  return r;
}

int respond_scalarized(const Query& query, const ObjectiveFn& f, const NoiseProfile& noise,
                       const ScalarizationWeights& w, Rng& rng) {
  noise.validate();
  w.validate();
  const int q = query.size();
  if (q < 2) throw Error(ErrorKind::data, "a query needs at least two designs");
  int winner = 0;
  double best = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < q; ++i) {
    ObjectiveVector y = f(query.designs[i]);
    if (y.size() != noise.lambda.size()) throw Error(ErrorKind::dimension, "noise profile length differs from m");
    for (Eigen::Index j = 0; j < y.size(); ++j) y[j] += gumbel(rng, noise.lambda[j]);
    const double s = chebyshev(y, w);
    if (s > best) {
      best = s;
      winner = i + 1;
    }
  }
  return winner;
}

std::vector<double> top_objective_values(const TestProblem& problem, int objective, double top_fraction, int n,
                                         std::uint64_t seed) {
  if (objective < 0 || objective >= problem.m) throw Error(ErrorKind::index, "objective index out of range");
  if (!(top_fraction > 0.0 && top_fraction < 1.0))
    throw Error(ErrorKind::config, "top fraction must lie in (0, 1)", "top_fraction");
  const auto designs = sample_uniform_designs(problem.space, n, seed);
  const auto values = evaluate_rows(problem.evaluate, problem.m, designs);
  std::vector<double> column(values.col(objective).data(), values.col(objective).data() + n);
  const auto keep = std::max<std::size_t>(2, static_cast<std::size_t>(std::ceil(top_fraction * n)));
  std::partial_sort(column.begin(), column.begin() + static_cast<std::ptrdiff_t>(keep), column.end(),
                    std::greater<>());
  column.resize(keep);
  return column;
}

double pair_mistake_probability(double v, double v_other, double lambda) {
  return 1.0 / (1.0 + std::exp(std::abs(v - v_other) / lambda));
}

namespace {

// Draws up to `comparisons` index pairs with distinct values.
std::vector<std::pair<double, double>> draw_pairs(const std::vector<double>& values, int comparisons, Rng& rng) {
  const auto n = values.size();
  std::vector<std::pair<double, double>> pairs;
  pairs.reserve(static_cast<std::size_t>(comparisons));
  const int max_attempts = 20 * comparisons;
  for (int attempt = 0; attempt < max_attempts && static_cast<int>(pairs.size()) < comparisons; ++attempt) {
    const auto a = std::min(n - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)));
    const auto b = std::min(n - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)));
    if (a == b || values[a] == values[b]) continue;
    pairs.emplace_back(values[a], values[b]);
  }
  return pairs;
}

}  // namespace

double simulate_mistake_rate(const std::vector<double>& values, double lambda, int comparisons, Rng& rng) {
  const auto pairs = draw_pairs(values, comparisons, rng);
  if (pairs.empty()) throw Error(ErrorKind::calibration, "no comparable pairs: objective is constant");
  int mistakes = 0;
  for (const auto& [a, b] : pairs) {
    const double na = a + gumbel(rng, lambda);
    const double nb = b + gumbel(rng, lambda);
    const bool picked_a = na > nb;
    if (picked_a != (a > b)) ++mistakes;
  }
  return static_cast<double>(mistakes) / static_cast<double>(pairs.size());
}

double calibrate_noise(const TestProblem& problem, int objective, double target_rate, double top_fraction,
                       std::uint64_t seed, const CalibrationOptions& options) {
  if (!(target_rate > 0.0 && target_rate < 0.5))
    throw Error(ErrorKind::config, "target mistake rate must lie in (0, 0.5)", "target_rate");
  const auto values = top_objective_values(problem, objective, top_fraction, options.design_samples,
                                           derive_seed(seed, {stream::calibration, 0}));
  Rng rng = make_rng(seed, {stream::calibration, 1});
  const auto pairs = draw_pairs(values, options.comparisons, rng);
  if (pairs.empty()) throw Error(ErrorKind::calibration, "no comparable pairs: objective is constant");

  auto rate = [&](double lambda) {
    double total = 0.0;
    for (const auto& [a, b] : pairs) total += pair_mistake_probability(a, b, lambda);
    return total / static_cast<double>(pairs.size());
  };

  double lo = std::log(options.lambda_min);
  double hi = std::log(options.lambda_max);
  if (rate(std::exp(lo)) > target_rate + options.tolerance || rate(std::exp(hi)) < target_rate - options.tolerance)
    throw Error(ErrorKind::calibration, "target mistake rate unreachable within the lambda bracket");
  for (int step = 0; step < options.bisection_steps; ++step) {
    const double mid = 0.5 * (lo + hi);
    if (rate(std::exp(mid)) < target_rate)
      lo = mid;
    else
      hi = mid;
  }
  const double lambda = std::exp(0.5 * (lo + hi));
  if (std::abs(rate(lambda) - target_rate) > options.tolerance)
    throw Error(ErrorKind::calibration, "bisection did not reach the target mistake rate");
  return lambda;
}

double comparable_top_fraction(const TestProblem& problem, int objective, double top_fraction, std::uint64_t seed,
                               const CalibrationOptions& options) {
  double fraction = top_fraction;
  for (;;) {
    const auto values = top_objective_values(problem, objective, fraction, options.design_samples,
                                             derive_seed(seed, {stream::calibration, 0}));
    if (values.front() != values.back() || 2.0 * fraction >= 1.0) return fraction;
    fraction *= 2.0;
  }
}

NoiseProfile calibrate_profile(const TestProblem& problem, double target_rate, double top_fraction,
                               std::uint64_t seed, const CalibrationOptions& options) {
  NoiseProfile profile;
  profile.lambda.resize(problem.m);
  for (int j = 0; j < problem.m; ++j) {
    const auto sj = derive_seed(seed, {static_cast<std::uint64_t>(j)});
    profile.lambda[j] = calibrate_noise(problem, j, target_rate,
                                        comparable_top_fraction(problem, j, top_fraction, sj, options), sj, options);
  }
  return profile;
}

}  // namespace prefmo
