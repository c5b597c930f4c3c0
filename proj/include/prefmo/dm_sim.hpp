#pragma once

#include <vector>

#include "prefmo/core.hpp"
#include "prefmo/scalarization.hpp"
#include "prefmo/testbed.hpp"

namespace prefmo {

/// Per-objective Gumbel scales of the simulated decision-maker.
struct NoiseProfile {
  Eigen::VectorXd lambda;

  void validate() const;
};

/// Gumbel-corrupted argmax per objective. Objectives flagged in `observable`
/// get winner 0 and consume no noise.
Response respond(const Query& query, const ObjectiveFn& f, const NoiseProfile& noise, Rng& rng,
                 const std::vector<bool>& observable = {});

/// Single 1-based winner: argmax_i s(f(x_i) + eps_i; theta), with the same
/// Gumbel noise model as respond().
int respond_scalarized(const Query& query, const ObjectiveFn& f, const NoiseProfile& noise,
                       const ScalarizationWeights& w, Rng& rng);

struct CalibrationOptions {
  int design_samples = 1000000;
  int comparisons = 10000;
  int bisection_steps = 40;
  double lambda_min = 1e-4;
  double lambda_max = 1e3;
  double tolerance = 0.01;
};

/// Objective-j values of the top `top_fraction` of `n` uniform designs,
/// sorted descending.
std::vector<double> top_objective_values(const TestProblem& problem, int objective, double top_fraction, int n,
                                         std::uint64_t seed);

/// Pairwise mistake probability for values v, v': 1 / (1 + exp(|v - v'| / lambda)).
double pair_mistake_probability(double v, double v_other, double lambda);

/// Monte-Carlo mistake rate with explicit Gumbel draws: `comparisons` random
/// pairs from `values`, ties in true value skipped.
double simulate_mistake_rate(const std::vector<double>& values, double lambda, int comparisons, Rng& rng);

/// Finds lambda_j such that pairs among the top designs are mis-ordered at
/// `target_rate`. Pairs are drawn once and reused across bisection steps;
/// each pair contributes its exact Gumbel mistake probability.
double calibrate_noise(const TestProblem& problem, int objective, double target_rate, double top_fraction,
                       std::uint64_t seed, const CalibrationOptions& options = {});

/// Smallest top_fraction * 2^k (below 1) whose top designs do not all
/// share one objective value, using the same design sample as
/// calibrate_noise with this seed.
double comparable_top_fraction(const TestProblem& problem, int objective, double top_fraction, std::uint64_t seed,
                               const CalibrationOptions& options = {});

/// Calibrates every objective of `problem` with per-objective streams. An
/// objective that is constant over the top designs (a violation total on
/// feasible designs, say) is calibrated over comparable_top_fraction.
NoiseProfile calibrate_profile(const TestProblem& problem, double target_rate, double top_fraction,
                               std::uint64_t seed, const CalibrationOptions& options = {});

}  // namespace prefmo
