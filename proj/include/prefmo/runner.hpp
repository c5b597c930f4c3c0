#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "prefmo/dm_sim.hpp"
#include "prefmo/policies.hpp"
#include "prefmo/surrogate.hpp"
#include "prefmo/testbed.hpp"

namespace prefmo {

struct ExperimentConfig {
  std::string problem = "dtlz2";
  std::vector<PolicyConfig> policies{PolicyConfig{}};
  int q = 2;
  /// Defaults to 2(d + 1).
  std::optional<int> n_init_queries;
  int n_iterations = 40;
  int n_replications = 10;
  std::uint64_t seed = 0;
  double mistake_rate = 0.2;
  double top_fraction = 0.01;
  CalibrationOptions calibration;
  /// Preset Gumbel scales; skips calibration when set.
  std::optional<Eigen::VectorXd> lambda;
  /// Per objective; empty means all latent.
  std::vector<bool> observable;
  /// Gaussian noise sd of observable objectives; defaults to 1% of each
  /// objective's sampled range.
  std::optional<Eigen::VectorXd> observation_noise;
  int fit_restarts = 5;
  int fit_max_iter = 30;
  /// Full hyperparameter search every k iterations; in between only the
  /// Laplace step reruns at the previous hyperparameters.
  int refit_every = 1;
  std::filesystem::path output_dir = "runs";

  int init_queries(int dim) const { return n_init_queries.value_or(2 * (dim + 1)); }
  void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& config);
ExperimentConfig experiment_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment(const std::filesystem::path& path);

struct TraceRecord {
  int iter = 0;  // 0 for initial queries, then 1..n_iterations
  Query query;
  /// Per-objective winners (0 for observable objectives), or the single
  /// scalarized winner under pbo-dts-if.
  Response response;
  bool scalarized = false;
  /// Measured values per objective; empty for latent objectives.
  std::vector<std::vector<double>> values;
  double hv = 0.0;
  int n_shown = 0;
  double seconds = 0.0;
};

/// Summary of one surrogate fit, kept for numerical audits.
struct FitRecord {
  int iter = 0;
  int objective = 0;
  double noise = 0.0;  // lambda for preference fits, sigma^2 for regression
  Eigen::VectorXd lengthscales;
  double log_marginal_likelihood = 0.0;
  /// Smallest eigenvalue of the anchor covariance.
  double min_cov_eigenvalue = 0.0;
};

struct RunTrace {
  std::string policy;
  int replication = 0;
  std::uint64_t seed = 0;
  Eigen::VectorXd lambda;
  std::vector<TraceRecord> records;
  std::vector<FitRecord> fits;

  /// Final hypervolume after each iteration, index 0 = after initial data.
  std::vector<double> hv_by_iteration() const;
  /// JSON-lines, one record per line; excludes wall times.
  std::string to_jsonl() const;
};

/// Per-replication seed, derived from (master seed, replication index).
std::uint64_t replication_seed(std::uint64_t master, int replication);

/// Calibrated or preset Gumbel scales for the configured problem.
NoiseProfile experiment_noise(const ExperimentConfig& config);
/// Observable-objective noise sd (config value or 1% of sampled range).
Eigen::VectorXd experiment_observation_noise(const ExperimentConfig& config);

RunTrace run_replication(const ExperimentConfig& config, const PolicyConfig& policy, int replication,
                         const NoiseProfile& noise, const Eigen::VectorXd& observation_noise);

struct SummaryRow {
  int iter = 0;
  double mean = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

/// Mean and mean +- 1.96 standard errors (sample sd / sqrt(N)) per
/// iteration. Every trace must have the same length.
std::vector<SummaryRow> aggregate_hv(const std::vector<std::vector<double>>& traces);
std::string summary_csv(const std::vector<SummaryRow>& rows);

struct PolicyOutcome {
  std::string policy;
  std::vector<SummaryRow> rows;
  int effective_n = 0;
  std::vector<std::string> failures;
};

struct ExperimentOutcome {
  Eigen::VectorXd lambda;
  std::vector<PolicyOutcome> policies;
  bool all_succeeded() const;
};

/// Runs every (policy, replication) pair on up to `workers` threads and
/// writes traces, timings and summaries under config.output_dir.
ExperimentOutcome run_experiment(const ExperimentConfig& config, int workers = 1);

/// Rebuilds summary CSVs from the traces in an output directory.
std::vector<PolicyOutcome> summarize_directory(const std::filesystem::path& dir);

/// Writes via a temporary file and rename.
void write_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace prefmo
