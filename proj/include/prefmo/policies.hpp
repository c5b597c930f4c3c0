#pragma once

#include <optional>
#include <string>
#include <vector>

#include "prefmo/core.hpp"
#include "prefmo/optimize.hpp"
#include "prefmo/scalarization.hpp"
#include "prefmo/surrogate.hpp"

namespace prefmo {

/// Budget of the multi-start inner maximizer.
struct InnerOptions {
  int restarts = 10;
  int iterations = 200;
  /// Quasi-random pool from which the best `restarts` points seed local ascent.
  int raw_samples = 512;
};

struct PolicyConfig {
  std::string name = "dsts";
  int q = 2;
  /// dsts-m only: probability that the second slot shows x_ref.
  std::optional<double> delta;
  std::optional<Design> x_ref;
  InnerOptions inner;
  int mc_samples = 128;
  int features = kDefaultFourierFeatures;
  double rho = kDefaultRho;

  void validate() const;
};

nlohmann::json to_json(const PolicyConfig& config);
PolicyConfig policy_from_json(const nlohmann::json& j);
const std::vector<std::string>& policy_names();

/// Scalar objective on the design space; `grad` is filled when non-null and
/// the function is differentiable.
using DesignObjective = std::function<double(const Design& x, Eigen::VectorXd* grad)>;

struct MaximizeResult {
  Design x;
  double value = 0.0;
};

/// Multi-start local ascent. Finite spaces are enumerated instead.
/// Ties keep the first point found.
MaximizeResult maximize_sample(const DesignObjective& f, bool has_gradient, const DesignSpace& space,
                               const InnerOptions& options, std::uint64_t seed);

/// What one DSTS call drew, for auditing stream usage.
struct DstsDiagnostics {
  ScalarizationWeights weights;
  int weight_draws = 0;
  /// Seeds of the sample streams, one per (slot, objective).
  std::vector<std::uint64_t> sample_seeds;
  std::vector<double> slot_values;
};

/// Algorithm 1: one theta per call, q independent joint samples, each
/// slot maximizing its own scalarized sample.
Query dsts_next_query(const std::vector<const Posterior*>& models, const DesignSpace& space, const PolicyConfig& config,
                      std::uint64_t seed, DstsDiagnostics* diagnostics = nullptr);

/// DSTS with the second slot replaced by x_ref with probability delta.
Query dsts_modified_next_query(const std::vector<const Posterior*>& models, const DesignSpace& space,
                               const PolicyConfig& config, std::uint64_t seed);

Query random_next_query(const DesignSpace& space, int q, std::uint64_t seed);

/// Single-objective dueling Thompson sampling on one model.
Query pbo_dts_if_next_query(const Posterior& model, const DesignSpace& space, const PolicyConfig& config,
                            std::uint64_t seed);

/// Standard normal base samples, `count` rows by `dims` columns.
Eigen::MatrixXd base_samples(int count, int dims, std::uint64_t seed);

/// E[{s(f(x); theta) - incumbent}^+] with f(x) drawn from independent
/// marginal posteriors using base samples (rows: samples, cols: objectives).
double qparego_acquisition(const std::vector<const Posterior*>& models, const ScalarizationWeights& weights,
                           double incumbent, const Design& x, const Eigen::MatrixXd& base);

Query qparego_next_query(const std::vector<const Posterior*>& models, const DesignSpace& space,
                         const std::vector<Design>& shown, const PolicyConfig& config, std::uint64_t seed);

/// Expected hypervolume improvement of the batch `pending` plus x over the
/// front `front` with reference `reference`. Samples are joint over the
/// batch per objective; `base` holds one block of (pending + 1) columns per
/// objective.
double qehvi_acquisition(const std::vector<const Posterior*>& models, const std::vector<ObjectiveVector>& front,
                         const ObjectiveVector& reference, const std::vector<Design>& pending, const Design& x,
                         const Eigen::MatrixXd& base);

Query qehvi_next_query(const std::vector<const Posterior*>& models, const DesignSpace& space,
                       const std::vector<Design>& shown, const PolicyConfig& config, std::uint64_t seed);

/// Posterior-mean vector of each design across objectives.
std::vector<ObjectiveVector> posterior_mean_vectors(const std::vector<const Posterior*>& models,
                                                    const std::vector<Design>& designs);

/// Dispatches on config.name. `models` holds one posterior per objective,
/// or the single scalarized-feedback model for pbo-dts-if.
Query propose_query(const PolicyConfig& config, const std::vector<const Posterior*>& models, const DesignSpace& space,
                    const std::vector<Design>& shown, std::uint64_t seed);

}  // namespace prefmo
