#include "prefmo/policies.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>

#include "prefmo/metrics.hpp"

namespace prefmo {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr int kInnerAttempts = 3;

Design default_reference(const DesignSpace& space) {
  if (space.is_finite()) return space.points().front();
  return 0.5 * (space.lower() + space.upper());
}

void require_models(const std::vector<const Posterior*>& models) {
  if (models.empty()) throw Error(ErrorKind::policy, "policy needs at least one fitted model");
  for (const auto* m : models)
    if (!m) throw Error(ErrorKind::policy, "null model passed to policy");
}

// Runs `maximize` for slot `slot`, retrying with fresh starts on failure.
MaximizeResult maximize_with_retries(const DesignObjective& f, bool has_gradient, const DesignSpace& space,
                                     const InnerOptions& inner, std::uint64_t seed, int slot) {
  std::string last;
  for (int attempt = 0; attempt < kInnerAttempts; ++attempt) {
    try {
      return maximize_sample(f, has_gradient, space, inner,
                             derive_seed(seed, {stream::inner, static_cast<std::uint64_t>(slot),
                                                static_cast<std::uint64_t>(attempt)}));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::optimizer) throw;
      last = e.what();
    }
  }
  throw Error(ErrorKind::policy, "inner maximization failed for slot " + std::to_string(slot) + " after " +
                                     std::to_string(kInnerAttempts) + " attempts: " + last);
}

// Runs body(i) for i in [0, n) in parallel and rethrows the first failure.
template <class Body>
void parallel_slots(int n, Body body) {
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    try {
      body(i);
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

// ---- config --------------------------------------------------------------------

const std::vector<std::string>& policy_names() {
  static const std::vector<std::string> names{"dsts", "dsts-m", "random", "pbo-dts-if", "qparego", "qehvi"};
  return names;
}

void PolicyConfig::validate() const {
  const auto& names = policy_names();
  if (std::find(names.begin(), names.end(), name) == names.end())
    throw Error(ErrorKind::config, "unknown policy '" + name + "'", "policy.name");
  if (q < 2) throw Error(ErrorKind::config, "q must be at least 2", "q");
  if (name == "dsts-m") {
    if (q != 2) throw Error(ErrorKind::config, "dsts-m is defined for q = 2 only", "q");
    if (!delta) throw Error(ErrorKind::config, "dsts-m requires delta", "policy.delta");
  } else if (delta) {
    throw Error(ErrorKind::config, "delta applies to dsts-m only", "policy.delta");
  }
  if (delta && !(*delta >= 0.0 && *delta <= 1.0))
    throw Error(ErrorKind::config, "delta must lie in [0, 1]", "policy.delta");
  if (inner.restarts < 1) throw Error(ErrorKind::config, "inner restarts must be positive", "policy.inner.restarts");
  if (inner.iterations < 0) throw Error(ErrorKind::config, "inner iterations must be non-negative", "policy.inner.iterations");
  if (inner.raw_samples < inner.restarts)
    throw Error(ErrorKind::config, "raw_samples must be at least restarts", "policy.inner.raw_samples");
  if (mc_samples < 1) throw Error(ErrorKind::config, "mc_samples must be positive", "policy.mc_samples");
  if (features < 1) throw Error(ErrorKind::config, "features must be positive", "policy.features");
  if (!(rho > 0.0)) throw Error(ErrorKind::config, "rho must be positive", "scalarization.rho");
}

nlohmann::json to_json(const PolicyConfig& c) {
  nlohmann::json j{{"name", c.name},
                   {"q", c.q},
                   {"inner", {{"restarts", c.inner.restarts}, {"iterations", c.inner.iterations},
                              {"raw_samples", c.inner.raw_samples}}},
                   {"mc_samples", c.mc_samples},
                   {"features", c.features},
                   {"rho", c.rho}};
  if (c.delta) j["delta"] = *c.delta;
  if (c.x_ref) j["x_ref"] = to_json(*c.x_ref);
  return j;
}

PolicyConfig policy_from_json(const nlohmann::json& j) {
  PolicyConfig c;
  c.name = j.value("name", c.name);
  c.q = j.value("q", c.q);
  if (j.contains("delta") && !j["delta"].is_null()) c.delta = j["delta"].get<double>();
  if (c.name == "dsts-m" && !c.delta) c.delta = 0.05;
  if (j.contains("x_ref") && !j["x_ref"].is_null()) c.x_ref = design_from_json(j["x_ref"]);
  if (j.contains("inner")) {
    const auto& in = j["inner"];
    c.inner.restarts = in.value("restarts", c.inner.restarts);
    c.inner.iterations = in.value("iterations", c.inner.iterations);
    c.inner.raw_samples = in.value("raw_samples", c.inner.raw_samples);
  }
  c.mc_samples = j.value("mc_samples", c.mc_samples);
  c.features = j.value("features", c.features);
  c.rho = j.value("rho", c.rho);
  return c;
}

// ---- inner maximizer -----------------------------------------------------------

MaximizeResult maximize_sample(const DesignObjective& f, bool has_gradient, const DesignSpace& space,
                               const InnerOptions& options, std::uint64_t seed) {
  MaximizeResult best{Design(), kNegInf};
  if (space.is_finite()) {
    for (const auto& x : space.points()) {
      const double v = f(x, nullptr);
      if (std::isfinite(v) && v > best.value) best = {x, v};
    }
    if (!std::isfinite(best.value)) throw Error(ErrorKind::optimizer, "objective is not finite at any design");
    return best;
  }

  Rng rng = make_rng(seed, {stream::inner});
  const auto pool = shifted_halton(options.raw_samples, space.lower(), space.upper(), rng);
  std::vector<double> values(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) values[i] = f(pool[i], nullptr);
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const bool fa = std::isfinite(values[a]), fb = std::isfinite(values[b]);
    if (fa != fb) return fa;
    return fa && values[a] > values[b];
  });

  const ValueGradFn with_grad = [&](const Eigen::VectorXd& x, Eigen::VectorXd* g) { return f(x, g); };
  const ValueFn without_grad = [&](const Eigen::VectorXd& x) { return f(x, nullptr); };
  const int starts = std::min<int>(options.restarts, static_cast<int>(order.size()));
  for (int s = 0; s < starts; ++s) {
    const auto idx = order[static_cast<std::size_t>(s)];
    if (!std::isfinite(values[idx])) break;
    MaximizeResult candidate{pool[idx], values[idx]};
    if (options.iterations > 0) {
      const auto local = has_gradient
                             ? lbfgs_box_ascent(with_grad, space.lower(), space.upper(), pool[idx], options.iterations, 1e-9)
                             : pattern_search_ascent(without_grad, space.lower(), space.upper(), pool[idx],
                                                     options.iterations);
      if (std::isfinite(local.value) && local.value > candidate.value) candidate = {local.x, local.value};
    }
    if (candidate.value > best.value) best = candidate;
  }
  if (!std::isfinite(best.value)) throw Error(ErrorKind::optimizer, "no start produced a finite objective value");
  return best;
}

// ---- DSTS family ---------------------------------------------------------------

Query dsts_next_query(const std::vector<const Posterior*>& models, const DesignSpace& space, const PolicyConfig& config,
                      std::uint64_t seed, DstsDiagnostics* diagnostics) {
  config.validate();
  require_models(models);
  const int m = static_cast<int>(models.size());
  Rng theta_rng = make_rng(seed, {stream::theta});
  const auto weights = sample_weights(theta_rng, m, config.rho);

  // Draw every sample before optimizing so stream use follows Algorithm 1.
  std::vector<std::vector<std::unique_ptr<SampledFunction>>> samples(static_cast<std::size_t>(config.q));
  std::vector<std::uint64_t> sample_seeds;
  for (int i = 0; i < config.q; ++i) {
    for (int j = 0; j < m; ++j) {
      const auto s = derive_seed(seed, {stream::sample, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j)});
      sample_seeds.push_back(s);
      Rng rng(s);
      samples[static_cast<std::size_t>(i)].push_back(models[static_cast<std::size_t>(j)]->sample(rng, config.features));
    }
  }

  Query query;
  query.designs.resize(static_cast<std::size_t>(config.q));
  std::vector<double> slot_values(static_cast<std::size_t>(config.q));
  parallel_slots(config.q, [&](int i) {
    const auto& fs = samples[static_cast<std::size_t>(i)];
    bool has_gradient = true;
    for (const auto& f : fs) has_gradient = has_gradient && f->has_gradient();
    const DesignObjective objective = [&](const Design& x, Eigen::VectorXd* grad) {
      ObjectiveVector y(m);
      Eigen::MatrixXd jac;
      if (grad) jac.resize(x.size(), m);
      for (int j = 0; j < m; ++j) {
        Eigen::VectorXd gj;
        y[j] = fs[static_cast<std::size_t>(j)]->evaluate(x, grad ? &gj : nullptr);
        if (grad) jac.col(j) = gj;
      }
      if (grad) *grad = jac * chebyshev_gradient(y, weights);
      return chebyshev(y, weights);
    };
    const auto best = maximize_with_retries(objective, has_gradient, space, config.inner, seed, i);
    query.designs[static_cast<std::size_t>(i)] = best.x;
    slot_values[static_cast<std::size_t>(i)] = best.value;
  });

  if (diagnostics) {
    diagnostics->weights = weights;
    diagnostics->weight_draws = 1;
    diagnostics->sample_seeds = std::move(sample_seeds);
    diagnostics->slot_values = std::move(slot_values);
  }
  return query;
}

Query dsts_modified_next_query(const std::vector<const Posterior*>& models, const DesignSpace& space,
                               const PolicyConfig& config, std::uint64_t seed) {
  if (config.q != 2) throw Error(ErrorKind::config, "dsts-m is defined for q = 2 only", "q");
  const double delta = config.delta.value_or(0.05);
  if (!(delta >= 0.0 && delta <= 1.0)) throw Error(ErrorKind::config, "delta must lie in [0, 1]", "policy.delta");
  PolicyConfig base = config;
  base.name = "dsts";
  base.delta.reset();
  const Design x_ref = config.x_ref.value_or(default_reference(space));
  if (!space.contains(x_ref)) throw Error(ErrorKind::config, "x_ref lies outside the design space", "policy.x_ref");

  Rng mix = make_rng(seed, {stream::mixing});
  const bool use_reference = uniform01(mix) < delta;
  auto query = dsts_next_query(models, space, base, seed);
  if (use_reference) query.designs[1] = x_ref;
  return query;
}

Query random_next_query(const DesignSpace& space, int q, std::uint64_t seed) {
  if (q < 2) throw Error(ErrorKind::config, "q must be at least 2", "q");
  Rng rng = make_rng(seed, {stream::policy});
  Query query;
  for (int i = 0; i < q; ++i) query.designs.push_back(space.sample(rng));
  return query;
}

Query pbo_dts_if_next_query(const Posterior& model, const DesignSpace& space, const PolicyConfig& config,
                            std::uint64_t seed) {
  PolicyConfig single = config;
  single.name = "dsts";
  single.delta.reset();
  // With m = 1 the weight simplex is a point, so DSTS is plain dueling TS.
  return dsts_next_query({&model}, space, single, seed);
}

// ---- adapted baselines ---------------------------------------------------------

Eigen::MatrixXd base_samples(int count, int dims, std::uint64_t seed) {
  Rng rng = make_rng(seed, {stream::sample});
  Eigen::MatrixXd z(count, dims);
  for (int s = 0; s < count; ++s)
    for (int k = 0; k < dims; ++k) z(s, k) = standard_normal(rng);
  return z;
}

std::vector<ObjectiveVector> posterior_mean_vectors(const std::vector<const Posterior*>& models,
                                                    const std::vector<Design>& designs) {
  std::vector<ObjectiveVector> out;
  out.reserve(designs.size());
  for (const auto& x : designs) {
    ObjectiveVector y(static_cast<Eigen::Index>(models.size()));
    for (std::size_t j = 0; j < models.size(); ++j) y[static_cast<Eigen::Index>(j)] = models[j]->mean(x);
    out.push_back(std::move(y));
  }
  return out;
}

double qparego_acquisition(const std::vector<const Posterior*>& models, const ScalarizationWeights& weights,
                           double incumbent, const Design& x, const Eigen::MatrixXd& base) {
  const auto m = static_cast<Eigen::Index>(models.size());
  if (base.cols() != m) throw Error(ErrorKind::dimension, "base samples need one column per objective");
  Eigen::VectorXd mu(m), sd(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    mu[j] = models[static_cast<std::size_t>(j)]->mean(x);
    sd[j] = std::sqrt(std::max(0.0, models[static_cast<std::size_t>(j)]->variance(x)));
  }
  double total = 0.0;
  for (Eigen::Index s = 0; s < base.rows(); ++s) {
    const ObjectiveVector y = mu + sd.cwiseProduct(base.row(s).transpose());
    total += std::max(0.0, chebyshev(y, weights) - incumbent);
  }
  return total / static_cast<double>(base.rows());
}

Query qparego_next_query(const std::vector<const Posterior*>& models, const DesignSpace& space,
                         const std::vector<Design>& shown, const PolicyConfig& config, std::uint64_t seed) {
  config.validate();
  require_models(models);
  if (shown.empty()) throw Error(ErrorKind::policy, "qparego needs at least one shown design");
  const int m = static_cast<int>(models.size());
  const auto means = posterior_mean_vectors(models, shown);
  Query query;
  for (int i = 0; i < config.q; ++i) {
    Rng theta_rng = make_rng(seed, {stream::theta, static_cast<std::uint64_t>(i)});
    const auto weights = sample_weights(theta_rng, m, config.rho);
    double incumbent = kNegInf;
    for (const auto& y : means) incumbent = std::max(incumbent, chebyshev(y, weights));
    const auto base = base_samples(config.mc_samples, m, derive_seed(seed, {stream::sample, static_cast<std::uint64_t>(i)}));
    const DesignObjective acq = [&](const Design& x, Eigen::VectorXd*) {
      return qparego_acquisition(models, weights, incumbent, x, base);
    };
    query.designs.push_back(maximize_with_retries(acq, false, space, config.inner, seed, i).x);
  }
  return query;
}

double qehvi_acquisition(const std::vector<const Posterior*>& models, const std::vector<ObjectiveVector>& front,
                         const ObjectiveVector& reference, const std::vector<Design>& pending, const Design& x,
                         const Eigen::MatrixXd& base) {
  const auto m = static_cast<Eigen::Index>(models.size());
  const auto k = static_cast<Eigen::Index>(pending.size() + 1);
  if (base.cols() != m * k) throw Error(ErrorKind::dimension, "base samples need (pending + 1) columns per objective");
  std::vector<Design> batch = pending;
  batch.push_back(x);

  // Per objective: joint mean and a factor of the joint covariance over the batch.
  std::vector<Eigen::VectorXd> mu(static_cast<std::size_t>(m));
  std::vector<Eigen::MatrixXd> factor(static_cast<std::size_t>(m));
  for (Eigen::Index j = 0; j < m; ++j) {
    const auto& model = *models[static_cast<std::size_t>(j)];
    Eigen::VectorXd mean(k);
    Eigen::MatrixXd cov(k, k);
    for (Eigen::Index a = 0; a < k; ++a) {
      mean[a] = model.mean(batch[static_cast<std::size_t>(a)]);
      for (Eigen::Index b = 0; b <= a; ++b)
        cov(a, b) = cov(b, a) = model.covariance(batch[static_cast<std::size_t>(a)], batch[static_cast<std::size_t>(b)]);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    factor[static_cast<std::size_t>(j)] =
        eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() * eig.eigenvectors().transpose();
    mu[static_cast<std::size_t>(j)] = mean;
  }

  const double base_hv = hypervolume_exact(front, reference);
  std::vector<ObjectiveVector> points = front;
  points.resize(front.size() + static_cast<std::size_t>(k));
  double total = 0.0;
  for (Eigen::Index s = 0; s < base.rows(); ++s) {
    for (Eigen::Index a = 0; a < k; ++a) points[front.size() + static_cast<std::size_t>(a)].resize(m);
    for (Eigen::Index j = 0; j < m; ++j) {
      const Eigen::VectorXd z = base.row(s).segment(j * k, k).transpose();
      const Eigen::VectorXd y = mu[static_cast<std::size_t>(j)] + factor[static_cast<std::size_t>(j)] * z;
      for (Eigen::Index a = 0; a < k; ++a) points[front.size() + static_cast<std::size_t>(a)][j] = y[a];
    }
    // Samples weakly dominated by the front, or not above the reference,
    // add nothing.
    bool improves = false;
    for (auto a = front.size(); a < points.size() && !improves; ++a) {
      const auto& y = points[a];
      if (!(y.array() > reference.array()).all()) continue;
      improves = std::none_of(front.begin(), front.end(),
                              [&](const ObjectiveVector& f) { return (f.array() >= y.array()).all(); });
    }
    if (improves) total += std::max(0.0, hypervolume_exact(points, reference) - base_hv);
  }
  return total / static_cast<double>(base.rows());
}

Query qehvi_next_query(const std::vector<const Posterior*>& models, const DesignSpace& space,
                       const std::vector<Design>& shown, const PolicyConfig& config, std::uint64_t seed) {
  config.validate();
  require_models(models);
  if (shown.empty()) throw Error(ErrorKind::policy, "qehvi needs at least one shown design");
  const int m = static_cast<int>(models.size());
  const auto means = posterior_mean_vectors(models, shown);
  ObjectiveVector reference = means.front();
  for (const auto& y : means) reference = reference.cwiseMin(y);
  std::vector<ObjectiveVector> front;
  for (auto i : non_dominated_filter(means)) front.push_back(means[i]);

  std::vector<Design> pending;
  for (int i = 0; i < config.q; ++i) {
    const auto base = base_samples(config.mc_samples, m * (i + 1),
                                   derive_seed(seed, {stream::sample, static_cast<std::uint64_t>(i)}));
    const DesignObjective acq = [&](const Design& x, Eigen::VectorXd*) {
      return qehvi_acquisition(models, front, reference, pending, x, base);
    };
    pending.push_back(maximize_with_retries(acq, false, space, config.inner, seed, i).x);
  }
  return Query{pending};
}

Query propose_query(const PolicyConfig& config, const std::vector<const Posterior*>& models, const DesignSpace& space,
                    const std::vector<Design>& shown, std::uint64_t seed) {
  config.validate();
  if (config.name == "random") return random_next_query(space, config.q, seed);
  if (config.name == "dsts") return dsts_next_query(models, space, config, seed);
  if (config.name == "dsts-m") return dsts_modified_next_query(models, space, config, seed);
  if (config.name == "pbo-dts-if") {
    if (models.size() != 1 || !models.front())
      throw Error(ErrorKind::policy, "pbo-dts-if operates on exactly one model");
    return pbo_dts_if_next_query(*models.front(), space, config, seed);
  }
  if (config.name == "qparego") return qparego_next_query(models, space, shown, config, seed);
  return qehvi_next_query(models, space, shown, config, seed);
}

}  // namespace prefmo
