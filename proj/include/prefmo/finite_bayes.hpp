#pragma once

#include <string>
#include <utility>
#include <vector>

#include "prefmo/core.hpp"
#include "prefmo/scalarization.hpp"

namespace prefmo {

/// Finite support of candidate objective functions over a finite design list.
struct HypothesisSpace {
  std::vector<Design> designs;
  /// tables[k](i, j) = f_j(design i; hypothesis k).
  std::vector<Eigen::MatrixXd> tables;
  Eigen::VectorXd prior;
  /// Softmax scale per objective.
  Eigen::VectorXd lambda;

  int size() const { return static_cast<int>(tables.size()); }
  int n_designs() const { return static_cast<int>(designs.size()); }
  int m() const { return static_cast<int>(lambda.size()); }
  void validate() const;
  /// Objective oracle of hypothesis k, defined on `designs` only.
  ObjectiveFn oracle(int k) const;
  /// membership[k][i]: design i is Pareto-optimal under hypothesis k.
  std::vector<std::vector<bool>> pareto_membership() const;
};

struct PosteriorState {
  Eigen::VectorXd p;
};

/// Bayes update with the softmax likelihood, computed in log space.
/// `query` holds 0-based design indices; winners are 1-based.
PosteriorState exact_posterior_update(const PosteriorState& state, const std::vector<int>& query,
                                      const Response& response, const HypothesisSpace& space);

/// P_n(design i is Pareto-optimal) for every design.
Eigen::VectorXd pareto_probability(const PosteriorState& state, const HypothesisSpace& space);

/// Four designs, four single-objective hypotheses, prior (s/2, s/2, t/2, t/2)
/// with t = 1 - s.
HypothesisSpace qei_counterexample_instance(double s, double lambda);

struct PairAcquisition {
  int first = 0;  // 0-based design indices, first < second
  int second = 0;
  double value = 0.0;
};

/// E_n[{max(f(a), f(b)) - mu*}^+] for every pair a < b of objective 0, where
/// mu* is the largest posterior mean over `shown`.
std::vector<PairAcquisition> qei_discrete_acquisition(const PosteriorState& state, const HypothesisSpace& space,
                                                      const std::vector<int>& shown);

/// Pair maximizing qei_discrete_acquisition, earlier pairs winning exact ties.
PairAcquisition qei_argmax(const PosteriorState& state, const HypothesisSpace& space, const std::vector<int>& shown);

struct CounterexampleStep {
  int iter = 0;
  Eigen::VectorXd p;
  double mass_34 = 0.0;
  /// Pair maximizing qEI before this step's query, 0-based.
  std::pair<int, int> qei_choice{0, 0};
};

struct CounterexampleTrace {
  double s = 0.0;
  double lambda = 0.0;
  int truth = 0;
  std::vector<CounterexampleStep> steps;  // steps[0] is the prior
};

/// Shows query (3, 4) for N iterations under a truth drawn from the prior.
CounterexampleTrace run_counterexample(double s, double lambda, int n_iterations, std::uint64_t seed);

enum class FinitePolicy { dts, dsts_m };

struct ConsistencyOptions {
  FinitePolicy policy = FinitePolicy::dsts_m;
  double delta = 0.05;
  int x_ref = 0;
  double rho = kDefaultRho;
};

struct ConsistencyTrace {
  int truth = 0;
  /// Row n: P_n(design is Pareto-optimal), n = 0..N.
  Eigen::MatrixXd probability;
  std::vector<std::vector<int>> queries;
};

/// Exact posterior Thompson sampling on a finite space with responses
/// simulated from hypothesis `truth`.
ConsistencyTrace consistency_experiment(const HypothesisSpace& space, const ConsistencyOptions& options, int truth,
                                        int n_iterations, std::uint64_t seed);

/// Eight designs, six hypotheses, two objectives; uniform prior.
HypothesisSpace multi_objective_consistency_instance();
/// Five designs, four single-objective hypotheses; uniform prior.
HypothesisSpace single_objective_consistency_instance();

/// JSON-lines records `{iter, p, mass_34}`.
std::string counterexample_jsonl(const CounterexampleTrace& trace);
std::string consistency_jsonl(const ConsistencyTrace& trace);

}  // namespace prefmo
