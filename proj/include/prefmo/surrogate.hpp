#pragma once

#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "prefmo/core.hpp"
#include "prefmo/kernel.hpp"

namespace prefmo {

/// A single draw of an objective function from a posterior.
class SampledFunction {
 public:
  virtual ~SampledFunction() = default;
  /// Value at x; fills `grad` when non-null and has_gradient() is true.
  virtual double evaluate(const Design& x, Eigen::VectorXd* grad = nullptr) const = 0;
  virtual bool has_gradient() const { return true; }
};

/// Posterior over one objective function. Policies only see this interface.
class Posterior {
 public:
  virtual ~Posterior() = default;
  virtual double mean(const Design& x) const = 0;
  virtual double covariance(const Design& x, const Design& y) const = 0;
  double variance(const Design& x) const { return covariance(x, x); }
  virtual std::unique_ptr<SampledFunction> sample(Rng& rng, int features) const = 0;
};

inline constexpr int kDefaultFourierFeatures = 1000;

/// Pathwise posterior sample: a random-Fourier-feature prior draw plus a
/// kernel-weighted correction that pins the values at the anchors to one
/// Gaussian draw of the anchor posterior.
class FunctionSample final : public SampledFunction {
 public:
  FunctionSample(KernelConfig kernel, double nugget, Eigen::MatrixXd frequencies, Eigen::VectorXd phases,
                 Eigen::VectorXd weights, Eigen::MatrixXd anchors, Eigen::VectorXd correction, double offset,
                 double scale);

  double evaluate(const Design& x, Eigen::VectorXd* grad = nullptr) const override;
  /// Prior (feature) part only.
  double prior_part(const Design& x) const;

  int features() const { return static_cast<int>(phases_.size()); }
  const Eigen::VectorXd& correction() const { return correction_; }

 private:
  KernelConfig kernel_;
  double nugget_;
  Eigen::MatrixXd frequencies_;  // F x d
  Eigen::VectorXd phases_;
  Eigen::VectorXd weights_;
  double feature_scale_;
  Eigen::MatrixXd anchors_;  // n x d
  Eigen::VectorXd correction_;
  double offset_;
  double scale_;
};

/// GP posterior represented by a Gaussian N(mean, cov) over latent values at
/// the anchors and the prior conditional of f given those values. Outputs
/// are mapped through offset + scale * f.
class LatentPosterior final : public Posterior {
 public:
  /// Prior with no anchors.
  LatentPosterior(KernelConfig kernel, double nugget);
  LatentPosterior(KernelConfig kernel, double nugget, Eigen::MatrixXd anchors, Eigen::VectorXd anchor_mean,
                  Eigen::MatrixXd anchor_cov, double offset = 0.0, double scale = 1.0);

  double mean(const Design& x) const override;
  /// Gradient of mean() with respect to x.
  Eigen::VectorXd mean_gradient(const Design& x) const;
  double covariance(const Design& x, const Design& y) const override;
  std::unique_ptr<SampledFunction> sample(Rng& rng, int features) const override;
  /// Concrete type, for callers that need the stored weights.
  FunctionSample sample_path(Rng& rng, int features = kDefaultFourierFeatures) const;

  const KernelConfig& kernel() const { return kernel_; }
  double nugget() const { return nugget_; }
  const Eigen::MatrixXd& anchors() const { return anchors_; }
  const Eigen::VectorXd& anchor_mean() const { return anchor_mean_; }
  const Eigen::MatrixXd& anchor_cov() const { return anchor_cov_; }
  double offset() const { return offset_; }
  double scale() const { return scale_; }
  int dim() const { return kernel_.dim(); }

 private:
  void prepare();

  KernelConfig kernel_;
  double nugget_;
  Eigen::MatrixXd anchors_;
  Eigen::VectorXd anchor_mean_;
  Eigen::MatrixXd anchor_cov_;
  double offset_ = 0.0;
  double scale_ = 1.0;
  Eigen::LLT<Eigen::MatrixXd> gram_llt_;
  Eigen::VectorXd alpha_;          // K^{-1} mean
  Eigen::MatrixXd reduction_;      // K^{-1} - K^{-1} cov K^{-1}
  Eigen::MatrixXd cov_factor_;     // lower factor of cov, jittered if needed
};

/// log P(winner | values) under the softmax choice model with scale lambda.
/// `winner` is 0-based here.
double preference_log_likelihood(std::span<const double> values, int winner, double lambda);

struct PreferenceFitOptions {
  int restarts = 5;
  int max_iter = 30;
  int newton_max_iter = 100;
  double signal_variance = 1.0;
  double lambda_min = 1e-3;
  double lambda_max = 1e2;
  double initial_lengthscale = 0.3;
  double initial_lambda = 0.1;
  /// Starting hyperparameters, typically the previous fit.
  std::optional<KernelConfig> warm_kernel;
  std::optional<double> warm_lambda;
  /// When set, hyperparameters are held fixed and only the Laplace step runs.
  bool fixed_hyperparameters = false;
};

/// Preference GP for one latent objective, Laplace approximation at the MAP.
struct PreferenceModel {
  KernelConfig kernel;
  double noise_scale = 0.0;
  double nugget = 0.0;
  Eigen::MatrixXd anchors;
  Eigen::VectorXd laplace_mean;
  Eigen::MatrixXd laplace_cov;
  /// K^{-1} f at the MAP, i.e. the likelihood gradient there.
  Eigen::VectorXd likelihood_gradient;
  double log_marginal_likelihood = 0.0;
  double initial_log_marginal_likelihood = 0.0;
  int newton_iterations = 0;

  LatentPosterior posterior() const;
};

/// Fits objective `objective` of `data` (records whose winner for it is
/// non-zero). Deterministic given `seed`.
PreferenceModel fit_preference(const InteractionDataset& data, int objective, const PreferenceFitOptions& options = {},
                               std::uint64_t seed = 0);

/// Laplace log marginal likelihood at fixed hyperparameters. `grad`, if
/// given, receives its gradient in (log lengthscales, log lambda).
double preference_log_marginal(const InteractionDataset& data, int objective, const KernelConfig& kernel,
                               double lambda, Eigen::VectorXd* grad = nullptr);

struct RegressionFitOptions {
  int restarts = 3;
  int max_iter = 40;
  double noise_min = 1e-8;
  double noise_max = 1.0;
  std::optional<double> fixed_noise_variance;
  std::optional<KernelConfig> warm_kernel;
  std::optional<double> warm_noise;
};

/// Exact GP regression in standardized output units.
struct RegressionModel {
  KernelConfig kernel;
  double noise_variance = 0.0;  // standardized units
  double nugget = 0.0;
  double y_mean = 0.0;
  double y_scale = 1.0;
  Eigen::MatrixXd anchors;
  Eigen::VectorXd latent_mean;
  Eigen::MatrixXd latent_cov;
  double log_marginal_likelihood = 0.0;

  LatentPosterior posterior() const;
};

RegressionModel fit_regression(std::span<const Observation> observations, const RegressionFitOptions& options = {},
                               std::uint64_t seed = 0);

double posterior_mean(const LatentPosterior& posterior, const Design& x);

nlohmann::json to_json(const LatentPosterior& posterior);
LatentPosterior posterior_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PreferenceModel& model);

}  // namespace prefmo
