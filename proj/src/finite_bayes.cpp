#include "prefmo/finite_bayes.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "prefmo/dm_sim.hpp"

namespace prefmo {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_softmax(const Eigen::MatrixXd& table, const std::vector<int>& query, int objective, int winner,
                   double lambda) {
  double zmax = kNegInf;
  for (int i : query) zmax = std::max(zmax, table(i, objective) / lambda);
  double total = 0.0;
  for (int i : query) total += std::exp(table(i, objective) / lambda - zmax);
  return table(query[static_cast<std::size_t>(winner)], objective) / lambda - zmax - std::log(total);
}

int draw_categorical(const Eigen::VectorXd& p, Rng& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (Eigen::Index k = 0; k < p.size(); ++k) {
    acc += p[k];
    if (u < acc) return static_cast<int>(k);
  }
  return static_cast<int>(p.size()) - 1;
}

int scalarized_argmax(const Eigen::MatrixXd& table, const ScalarizationWeights& w) {
  int best = 0;
  double best_value = kNegInf;
  for (Eigen::Index i = 0; i < table.rows(); ++i) {
    const double v = chebyshev(table.row(i).transpose(), w);
    if (v > best_value) {
      best_value = v;
      best = static_cast<int>(i);
    }
  }
  return best;
}

std::vector<Design> index_designs(int n) {
  std::vector<Design> out;
  for (int i = 1; i <= n; ++i) out.push_back(Design::Constant(1, static_cast<double>(i)));
  return out;
}

std::string vector_json(const Eigen::VectorXd& v) {
  return nlohmann::json(std::vector<double>(v.data(), v.data() + v.size())).dump();
}

}  // namespace

void HypothesisSpace::validate() const {
  if (designs.empty()) throw Error(ErrorKind::config, "hypothesis space needs at least one design", "designs");
  if (tables.empty()) throw Error(ErrorKind::config, "hypothesis space needs at least one hypothesis", "tables");
  if (prior.size() != size()) throw Error(ErrorKind::dimension, "prior length differs from hypothesis count", "prior");
  if ((prior.array() < 0.0).any() || std::abs(prior.sum() - 1.0) > 1e-12)
    throw Error(ErrorKind::config, "prior must be a probability vector", "prior");
  if (m() < 1 || (lambda.array() <= 0.0).any())
    throw Error(ErrorKind::config, "lambda must be positive per objective", "lambda");
  for (const auto& t : tables)
    if (t.rows() != n_designs() || t.cols() != m())
      throw Error(ErrorKind::dimension, "hypothesis table shape differs from designs x objectives", "tables");
}

ObjectiveFn HypothesisSpace::oracle(int k) const {
  if (k < 0 || k >= size()) throw Error(ErrorKind::index, "hypothesis index out of range");
  return [this, k](const Design& x) -> ObjectiveVector {
    for (int i = 0; i < n_designs(); ++i)
      if (same_design(designs[static_cast<std::size_t>(i)], x)) return tables[static_cast<std::size_t>(k)].row(i).transpose();
    throw Error(ErrorKind::domain, "design is not part of the hypothesis space");
  };
}

std::vector<std::vector<bool>> HypothesisSpace::pareto_membership() const {
  std::vector<std::vector<bool>> out;
  for (const auto& t : tables) {
    std::vector<ObjectiveVector> rows;
    for (Eigen::Index i = 0; i < t.rows(); ++i) rows.push_back(t.row(i).transpose());
    std::vector<bool> member(rows.size(), false);
    for (auto i : non_dominated_filter(rows)) member[i] = true;
    out.push_back(std::move(member));
  }
  return out;
}

PosteriorState exact_posterior_update(const PosteriorState& state, const std::vector<int>& query,
                                      const Response& response, const HypothesisSpace& space) {
  if (state.p.size() != space.size()) throw Error(ErrorKind::dimension, "state length differs from hypothesis count");
  if (query.size() < 2) throw Error(ErrorKind::config, "query needs at least two designs");
  for (int i : query)
    if (i < 0 || i >= space.n_designs()) throw Error(ErrorKind::index, "query design index out of range");
  if (static_cast<int>(response.winners.size()) != space.m())
    throw Error(ErrorKind::dimension, "response length differs from objective count");
  for (int w : response.winners)
    if (w < 1 || w > static_cast<int>(query.size())) throw Error(ErrorKind::index, "winner index out of range");

  Eigen::VectorXd logw(space.size());
  for (int k = 0; k < space.size(); ++k) {
    double lw = std::log(state.p[k]);
    for (int j = 0; j < space.m(); ++j)
      lw += log_softmax(space.tables[static_cast<std::size_t>(k)], query, j, response.winners[static_cast<std::size_t>(j)] - 1,
                        space.lambda[j]);
    logw[k] = lw;
  }
  const double top = logw.maxCoeff();
  if (!std::isfinite(top)) throw Error(ErrorKind::inconsistent_evidence, "every hypothesis has zero posterior mass");
  PosteriorState next;
  next.p = (logw.array() - top).exp();
  next.p /= next.p.sum();
  return next;
}

Eigen::VectorXd pareto_probability(const PosteriorState& state, const HypothesisSpace& space) {
  const auto member = space.pareto_membership();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(space.n_designs());
  for (int k = 0; k < space.size(); ++k)
    for (int i = 0; i < space.n_designs(); ++i)
      if (member[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)]) out[i] += state.p[k];
  return out;
}

HypothesisSpace qei_counterexample_instance(double s, double lambda) {
  if (!(s > 0.0 && s < 1.0 / 3.0)) throw Error(ErrorKind::config, "s must lie in (0, 1/3)", "s");
  if (!(lambda > 0.0)) throw Error(ErrorKind::config, "lambda must be positive", "lambda");
  const double t = 1.0 - s;
  HypothesisSpace space;
  space.designs = index_designs(4);
  const double f34[4][2] = {{1.0, 0.5}, {0.5, 1.0}, {-0.5, -1.0}, {-1.0, -0.5}};
  for (const auto& row : f34) {
    Eigen::MatrixXd table(4, 1);
    table << -1.0, 0.0, row[0], row[1];
    space.tables.push_back(table);
  }
  space.prior = Eigen::Vector4d(s / 2, s / 2, t / 2, t / 2);
  space.lambda = Eigen::VectorXd::Constant(1, lambda);
  return space;
}

namespace {

struct PairImprovements {
  std::vector<PairAcquisition> pairs;
  Eigen::MatrixXd gain;  // pairs x hypotheses
};

PairImprovements pair_improvements(const PosteriorState& state, const HypothesisSpace& space,
                                   const std::vector<int>& shown_in) {
  // The counterexample starts from an initial query of designs 1 and 2.
  const std::vector<int> shown = shown_in.empty() ? std::vector<int>{0, 1} : shown_in;
  double incumbent = kNegInf;
  for (int x : shown) {
    double mean = 0.0;
    for (int k = 0; k < space.size(); ++k) mean += state.p[k] * space.tables[static_cast<std::size_t>(k)](x, 0);
    incumbent = std::max(incumbent, mean);
  }
  const int n = space.n_designs();
  PairImprovements out;
  out.gain.resize(n * (n - 1) / 2, space.size());
  Eigen::Index row = 0;
  for (int a = 0; a < n; ++a) {
    for (int b = a + 1; b < n; ++b, ++row) {
      for (int k = 0; k < space.size(); ++k) {
        const auto& t = space.tables[static_cast<std::size_t>(k)];
        out.gain(row, k) = std::max(0.0, std::max(t(a, 0), t(b, 0)) - incumbent);
      }
      out.pairs.push_back({a, b, state.p.dot(out.gain.row(row).transpose())});
    }
  }
  return out;
}

}  // namespace

std::vector<PairAcquisition> qei_discrete_acquisition(const PosteriorState& state, const HypothesisSpace& space,
                                                      const std::vector<int>& shown) {
  return pair_improvements(state, space, shown).pairs;
}

PairAcquisition qei_argmax(const PosteriorState& state, const HypothesisSpace& space, const std::vector<int>& shown) {
  const auto all = pair_improvements(state, space, shown);
  // Candidates are compared through per-hypothesis differences, so a gap
  // carried by a tiny posterior mass is not lost to rounding in the totals.
  Eigen::Index best = 0;
  for (Eigen::Index r = 1; r < all.gain.rows(); ++r)
    if (state.p.dot((all.gain.row(r) - all.gain.row(best)).transpose()) > 0.0) best = r;
  return all.pairs[static_cast<std::size_t>(best)];
}

CounterexampleTrace run_counterexample(double s, double lambda, int n_iterations, std::uint64_t seed) {
  const auto space = qei_counterexample_instance(s, lambda);
  CounterexampleTrace trace;
  trace.s = s;
  trace.lambda = lambda;
  Rng truth_rng = make_rng(seed, {stream::policy});
  trace.truth = draw_categorical(space.prior, truth_rng);
  Rng response_rng = make_rng(seed, {stream::response});
  const auto oracle = space.oracle(trace.truth);
  const NoiseProfile noise{space.lambda};
  const std::vector<int> query{2, 3};

  PosteriorState state{space.prior};
  std::vector<int> shown{0, 1};
  for (int n = 0; n <= n_iterations; ++n) {
    const auto choice = qei_argmax(state, space, shown);
    trace.steps.push_back({n, state.p, state.p[2] + state.p[3], {choice.first, choice.second}});
    if (n == n_iterations) break;
    const Query shown_query{{space.designs[2], space.designs[3]}};
    const auto response = respond(shown_query, oracle, noise, response_rng);
    state = exact_posterior_update(state, query, response, space);
    if (shown.size() == 2) shown = {0, 1, 2, 3};
  }
  return trace;
}

ConsistencyTrace consistency_experiment(const HypothesisSpace& space, const ConsistencyOptions& options, int truth,
                                        int n_iterations, std::uint64_t seed) {
  space.validate();
  if (truth < 0 || truth >= space.size()) throw Error(ErrorKind::index, "truth hypothesis out of range");
  if (options.policy == FinitePolicy::dsts_m && (options.x_ref < 0 || options.x_ref >= space.n_designs()))
    throw Error(ErrorKind::index, "x_ref index out of range");
  const auto member = space.pareto_membership();
  const auto oracle = space.oracle(truth);
  const NoiseProfile noise{space.lambda};
  Rng policy_rng = make_rng(seed, {stream::policy});
  Rng theta_rng = make_rng(seed, {stream::theta});
  Rng mix_rng = make_rng(seed, {stream::mixing});
  Rng response_rng = make_rng(seed, {stream::response});

  ConsistencyTrace trace;
  trace.truth = truth;
  trace.probability.resize(n_iterations + 1, space.n_designs());
  PosteriorState state{space.prior};
  trace.probability.row(0) = pareto_probability(state, space).transpose();
  for (int n = 0; n < n_iterations; ++n) {
    const auto weights = sample_weights(theta_rng, space.m(), options.rho);
    std::vector<int> query;
    for (int slot = 0; slot < 2; ++slot) {
      const int k = draw_categorical(state.p, policy_rng);
      query.push_back(scalarized_argmax(space.tables[static_cast<std::size_t>(k)], weights));
    }
    if (options.policy == FinitePolicy::dsts_m && uniform01(mix_rng) < options.delta) query[1] = options.x_ref;
    Query shown{{space.designs[static_cast<std::size_t>(query[0])], space.designs[static_cast<std::size_t>(query[1])]}};
    const auto response = respond(shown, oracle, noise, response_rng);
    state = exact_posterior_update(state, query, response, space);
    Eigen::VectorXd prob = Eigen::VectorXd::Zero(space.n_designs());
    for (int k = 0; k < space.size(); ++k)
      for (int i = 0; i < space.n_designs(); ++i)
        if (member[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)]) prob[i] += state.p[k];
    trace.probability.row(n + 1) = prob.transpose();
    trace.queries.push_back(std::move(query));
  }
  return trace;
}

HypothesisSpace multi_objective_consistency_instance() {
  // Frozen tables: f_1 and f_2 per hypothesis over eight designs.
  static const double f[6][8][2] = {
      {{0.9, 0.1}, {0.7, 0.5}, {0.4, 0.8}, {0.1, 0.9}, {0.5, 0.4}, {0.3, 0.3}, {0.6, 0.2}, {0.2, 0.6}},
      {{0.9, 0.1}, {0.6, 0.3}, {0.4, 0.8}, {0.1, 0.9}, {0.7, 0.6}, {0.3, 0.3}, {0.6, 0.2}, {0.2, 0.6}},
      {{0.5, 0.2}, {0.7, 0.5}, {0.3, 0.7}, {0.1, 0.9}, {0.5, 0.4}, {0.8, 0.1}, {0.6, 0.2}, {0.4, 0.8}},
      {{0.9, 0.1}, {0.7, 0.5}, {0.2, 0.6}, {0.3, 0.4}, {0.5, 0.4}, {0.3, 0.3}, {0.6, 0.7}, {0.1, 0.95}},
      {{0.2, 0.3}, {0.4, 0.4}, {0.4, 0.8}, {0.1, 0.9}, {0.5, 0.4}, {0.95, 0.1}, {0.6, 0.6}, {0.2, 0.6}},
      {{0.8, 0.5}, {0.7, 0.2}, {0.3, 0.3}, {0.5, 0.7}, {0.2, 0.9}, {0.3, 0.3}, {0.1, 0.1}, {0.4, 0.4}},
  };
  HypothesisSpace space;
  space.designs = index_designs(8);
  for (const auto& h : f) {
    Eigen::MatrixXd table(8, 2);
    for (int i = 0; i < 8; ++i) table.row(i) << h[i][0], h[i][1];
    space.tables.push_back(table);
  }
  space.prior = Eigen::VectorXd::Constant(6, 1.0 / 6.0);
  space.lambda = Eigen::VectorXd::Constant(2, 0.2);
  return space;
}

HypothesisSpace single_objective_consistency_instance() {
  static const double f[4][5] = {
      {0.0, 0.3, 0.9, 0.5, 0.2},
      {0.8, 0.1, 0.4, 0.6, 0.3},
      {0.2, 0.7, 0.5, 0.1, 0.9},
      {0.5, 0.9, 0.2, 0.4, 0.6},
  };
  HypothesisSpace space;
  space.designs = index_designs(5);
  for (const auto& h : f) space.tables.push_back(Eigen::Map<const Eigen::VectorXd>(h, 5));
  space.prior = Eigen::VectorXd::Constant(4, 0.25);
  space.lambda = Eigen::VectorXd::Constant(1, 0.2);
  return space;
}

std::string counterexample_jsonl(const CounterexampleTrace& trace) {
  std::ostringstream out;
  for (const auto& step : trace.steps)
    out << "{\"iter\":" << step.iter << ",\"p\":" << vector_json(step.p)
        << ",\"mass_34\":" << nlohmann::json(step.mass_34).dump() << "}\n";
  return out.str();
}

std::string consistency_jsonl(const ConsistencyTrace& trace) {
  std::ostringstream out;
  for (Eigen::Index n = 0; n < trace.probability.rows(); ++n)
    out << "{\"iter\":" << n << ",\"p\":" << vector_json(trace.probability.row(n).transpose()) << "}\n";
  return out.str();
}

}  // namespace prefmo
