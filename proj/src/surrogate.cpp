#include "prefmo/surrogate.hpp"

#include <cmath>
#include <limits>

#include "prefmo/optimize.hpp"

namespace prefmo {
namespace {

constexpr double kPreferenceNugget = 1e-6;
constexpr double kRegressionNugget = 1e-8;
constexpr double kMaxNugget = 1e-4;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Eigen::MatrixXd to_rows(const std::vector<Design>& xs) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(xs.size()), xs.empty() ? 0 : xs.front().size());
  for (std::size_t i = 0; i < xs.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = xs[i].transpose();
  return out;
}

// Index of x among `anchors` within 1e-12, appending it when new.
int anchor_index(std::vector<Design>& anchors, const Design& x) {
  for (std::size_t i = 0; i < anchors.size(); ++i)
    if (same_design(anchors[i], x)) return static_cast<int>(i);
  anchors.push_back(x);
  return static_cast<int>(anchors.size()) - 1;
}

// Gram matrix and its factor, escalating the nugget by 10x up to kMaxNugget.
struct FactoredGram {
  Eigen::MatrixXd gram;
  Eigen::LLT<Eigen::MatrixXd> llt;
  double nugget = 0.0;
};

FactoredGram factor_gram(const KernelConfig& kernel, const Eigen::MatrixXd& anchors, double base_nugget) {
  FactoredGram out;
  for (double rel = base_nugget; rel <= kMaxNugget * 1.0000001; rel *= 10.0) {
    out.nugget = rel * kernel.signal_variance;
    out.gram = gram(kernel, anchors, out.nugget);
    out.llt.compute(out.gram);
    if (out.llt.info() == Eigen::Success) return out;
  }
  throw Error(ErrorKind::fit, "kernel matrix is singular even with nugget 1e-4");
}

// Lower factor of a PSD matrix, adding jitter up to 1e-8 and falling back to
// a clipped eigendecomposition.
Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& cov) {
  const auto n = cov.rows();
  const double scale = std::max(1.0, cov.diagonal().cwiseAbs().maxCoeff());
  for (double jitter : {0.0, 1e-12, 1e-10, 1e-8}) {
    Eigen::LLT<Eigen::MatrixXd> llt(cov + jitter * scale * Eigen::MatrixXd::Identity(n, n));
    if (llt.info() == Eigen::Success) return llt.matrixL();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (cov + cov.transpose()));
  return eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

// ---- softmax choice likelihood -------------------------------------------

struct ChoiceData {
  Eigen::MatrixXd anchors;
  std::vector<std::vector<int>> members;
  std::vector<int> winner;  // 0-based position within members
};

ChoiceData collect_choices(const InteractionDataset& data, int objective) {
  if (objective < 0 || objective >= data.m) throw Error(ErrorKind::index, "objective index out of range");
  std::vector<Design> anchors;
  ChoiceData out;
  for (const auto& rec : data.records) {
    const int w = rec.response.winners.at(objective);
    if (w == 0) continue;
    std::vector<int> idx;
    for (const auto& x : rec.query.designs) idx.push_back(anchor_index(anchors, x));
    out.members.push_back(std::move(idx));
    out.winner.push_back(w - 1);
  }
  if (out.members.empty()) throw Error(ErrorKind::data, "no preference records for this objective");
  out.anchors = to_rows(anchors);
  return out;
}

// Log-likelihood; optionally its gradient and the negative Hessian W.
double choice_terms(const ChoiceData& data, const Eigen::VectorXd& f, double lambda, Eigen::VectorXd* grad,
                    Eigen::MatrixXd* neg_hessian) {
  const auto n = f.size();
  if (grad) grad->setZero(n);
  if (neg_hessian) neg_hessian->setZero(n, n);
  double ll = 0.0;
  std::vector<double> p;
  for (std::size_t r = 0; r < data.members.size(); ++r) {
    const auto& idx = data.members[r];
    const int q = static_cast<int>(idx.size());
    double zmax = kNegInf;
    for (int i : idx) zmax = std::max(zmax, f[i] / lambda);
    double total = 0.0;
    p.assign(q, 0.0);
    for (int i = 0; i < q; ++i) total += (p[i] = std::exp(f[idx[i]] / lambda - zmax));
    for (auto& v : p) v /= total;
    ll += f[idx[data.winner[r]]] / lambda - zmax - std::log(total);
    if (grad)
      for (int i = 0; i < q; ++i) (*grad)[idx[i]] += ((i == data.winner[r] ? 1.0 : 0.0) - p[i]) / lambda;
    if (neg_hessian) {
      const double inv_l2 = 1.0 / (lambda * lambda);
      for (int i = 0; i < q; ++i)
        for (int k = 0; k < q; ++k)
          (*neg_hessian)(idx[i], idx[k]) += ((i == k ? p[i] : 0.0) - p[i] * p[k]) * inv_l2;
    }
  }
  return ll;
}

struct LaplaceFit {
  Eigen::VectorXd mode;
  Eigen::VectorXd likelihood_gradient;
  Eigen::MatrixXd cov;
  Eigen::MatrixXd reduction;
  Eigen::MatrixXd gram;
  double log_marginal = kNegInf;
  double nugget = 0.0;
  int iterations = 0;
};

LaplaceFit laplace(const ChoiceData& data, const KernelConfig& kernel, double lambda, int max_iter,
                   const Eigen::VectorXd* warm) {
  const auto n = data.anchors.rows();
  const auto fg = factor_gram(kernel, data.anchors, kPreferenceNugget);
  const Eigen::MatrixXd L = fg.llt.matrixL();
  const auto I = Eigen::MatrixXd::Identity(n, n);

  auto objective = [&](const Eigen::VectorXd& f) {
    const Eigen::VectorXd v = L.triangularView<Eigen::Lower>().solve(f);
    return choice_terms(data, f, lambda, nullptr, nullptr) - 0.5 * v.squaredNorm();
  };

  Eigen::VectorXd f = (warm && warm->size() == n) ? *warm : Eigen::VectorXd::Zero(n);
  double psi = objective(f);
  Eigen::VectorXd g(n);
  Eigen::MatrixXd W(n, n);
  LaplaceFit out;
  bool converged = false;
  for (out.iterations = 0; out.iterations < max_iter; ++out.iterations) {
    choice_terms(data, f, lambda, &g, &W);
    const Eigen::VectorXd b = W * f + g;
    const Eigen::MatrixXd A = I + L.transpose() * W * L;
    Eigen::LLT<Eigen::MatrixXd> C(A);
    const Eigen::VectorXd f_newton = L * C.solve(L.transpose() * b);
    const Eigen::VectorXd step = f_newton - f;
    double t = 1.0, psi_new = psi;
    Eigen::VectorXd f_new = f_newton;
    for (int bt = 0; bt < 30; ++bt, t *= 0.5) {
      f_new = f + t * step;
      psi_new = objective(f_new);
      if (psi_new >= psi - 1e-12 * std::abs(psi)) break;
    }
    const double change = (f_new - f).lpNorm<Eigen::Infinity>();
    f = f_new;
    psi = psi_new;
    if (change < 1e-9 * (1.0 + f.lpNorm<Eigen::Infinity>())) {
      converged = true;
      ++out.iterations;
      break;
    }
  }
  if (!converged || !f.allFinite())
    throw Error(ErrorKind::fit, "Newton iterations for the Laplace mode did not converge after " +
                                    std::to_string(max_iter) + " steps (lambda=" + std::to_string(lambda) + ")");

  const double ll = choice_terms(data, f, lambda, &g, &W);
  const Eigen::MatrixXd A = I + L.transpose() * W * L;
  Eigen::LLT<Eigen::MatrixXd> C(A);
  const Eigen::MatrixXd V = C.matrixL().solve(L.transpose());
  out.cov = V.transpose() * V;
  out.reduction = W - W * out.cov * W;
  const Eigen::VectorXd v = L.triangularView<Eigen::Lower>().solve(f);
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) logdet += std::log(Eigen::MatrixXd(C.matrixL())(i, i));
  out.log_marginal = ll - 0.5 * v.squaredNorm() - logdet;
  out.mode = f;
  out.likelihood_gradient = g;
  out.gram = fg.gram;
  out.nugget = fg.nugget;
  return out;
}

// Gradient of the Laplace log marginal with respect to (log lengthscales,
// log lambda), including the implicit dependence of the mode.
Eigen::VectorXd laplace_gradient(const ChoiceData& data, const KernelConfig& kernel, double lambda,
                                 const LaplaceFit& fit) {
  const auto n = fit.mode.size();
  const int d = kernel.dim();
  const Eigen::VectorXd& f = fit.mode;
  const Eigen::VectorXd& alpha = fit.likelihood_gradient;
  const Eigen::MatrixXd& S = fit.cov;
  const double l2 = lambda * lambda, l3 = l2 * lambda;

  // s = -1/2 d log|I + KW| / df, plus the explicit lambda terms.
  Eigen::VectorXd s = Eigen::VectorXd::Zero(n), dgrad = Eigen::VectorXd::Zero(n);
  double dpsi = 0.0, dtrace = 0.0;
  std::vector<double> p, sp;
  for (std::size_t r = 0; r < data.members.size(); ++r) {
    const auto& idx = data.members[r];
    const int q = static_cast<int>(idx.size());
    const int w = data.winner[r];
    double zmax = kNegInf;
    for (int i : idx) zmax = std::max(zmax, f[i] / lambda);
    double total = 0.0;
    p.assign(q, 0.0);
    for (int i = 0; i < q; ++i) total += (p[i] = std::exp(f[idx[i]] / lambda - zmax));
    for (auto& v : p) v /= total;
    double fbar = 0.0, diag_p = 0.0, psp = 0.0;
    sp.assign(q, 0.0);
    for (int a = 0; a < q; ++a) {
      fbar += p[a] * f[idx[a]];
      diag_p += S(idx[a], idx[a]) * p[a];
      for (int b = 0; b < q; ++b) sp[a] += S(idx[a], idx[b]) * p[b];
    }
    for (int a = 0; a < q; ++a) psp += p[a] * sp[a];
    double diag_dp = 0.0, dp_sp = 0.0;
    for (int c = 0; c < q; ++c) {
      const double t = p[c] * (S(idx[c], idx[c]) - diag_p - 2.0 * sp[c] + 2.0 * psp) / l3;
      s[idx[c]] -= 0.5 * t;
      const double dp = -p[c] * (f[idx[c]] - fbar) / l2;
      diag_dp += S(idx[c], idx[c]) * dp;
      dp_sp += dp * sp[c];
      dgrad[idx[c]] += -((c == w ? 1.0 : 0.0) - p[c]) / l2 + p[c] * (f[idx[c]] - fbar) / l3;
    }
    dpsi += (fbar - f[idx[w]]) / l2;
    dtrace += -2.0 / lambda * (diag_p - psp) / l2 + (diag_dp - 2.0 * dp_sp) / l2;
  }

  Eigen::VectorXd out(d + 1);
  const double root5 = std::sqrt(5.0);
  Eigen::MatrixXd dk(n, n);
  for (int k = 0; k < d; ++k) {
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j <= i; ++j) {
        const Eigen::ArrayXd diff =
            (data.anchors.row(i) - data.anchors.row(j)).transpose().array() / kernel.lengthscales.array();
        const double rr = std::sqrt(diff.square().sum());
        dk(i, j) = dk(j, i) =
            kernel.signal_variance * (5.0 / 3.0) * (1.0 + root5 * rr) * std::exp(-root5 * rr) * diff[k] * diff[k];
      }
    const Eigen::VectorXd b = dk * alpha;
    const Eigen::VectorXd df = b - fit.gram * (fit.reduction * b);
    out[k] = 0.5 * alpha.dot(b) - 0.5 * (fit.reduction.cwiseProduct(dk)).sum() + s.dot(df);
  }
  out[d] = lambda * (dpsi - 0.5 * dtrace + s.dot(S * dgrad));
  return out;
}

}  // namespace

// ---- FunctionSample --------------------------------------------------------

FunctionSample::FunctionSample(KernelConfig kernel, double nugget, Eigen::MatrixXd frequencies, Eigen::VectorXd phases,
                               Eigen::VectorXd weights, Eigen::MatrixXd anchors, Eigen::VectorXd correction,
                               double offset, double scale)
    : kernel_(std::move(kernel)),
      nugget_(nugget),
      frequencies_(std::move(frequencies)),
      phases_(std::move(phases)),
      weights_(std::move(weights)),
      feature_scale_(std::sqrt(2.0 * kernel_.signal_variance / static_cast<double>(phases_.size()))),
      anchors_(std::move(anchors)),
      correction_(std::move(correction)),
      offset_(offset),
      scale_(scale) {}

double FunctionSample::prior_part(const Design& x) const {
  const Eigen::ArrayXd proj = (frequencies_ * x + phases_).array();
  return feature_scale_ * (weights_.array() * proj.cos()).sum();
}

double FunctionSample::evaluate(const Design& x, Eigen::VectorXd* grad) const {
  const Eigen::ArrayXd proj = (frequencies_ * x + phases_).array();
  double value = feature_scale_ * (weights_.array() * proj.cos()).sum();
  if (grad) *grad = -feature_scale_ * (frequencies_.transpose() * (weights_.array() * proj.sin()).matrix());
  if (anchors_.rows() > 0) {
    value += cross(kernel_, x, anchors_, nugget_).dot(correction_);
    if (grad) *grad += cross_gradient(kernel_, x, anchors_) * correction_;
  }
  if (grad) *grad *= scale_;
  return offset_ + scale_ * value;
}

// ---- LatentPosterior -------------------------------------------------------

LatentPosterior::LatentPosterior(KernelConfig kernel, double nugget)
    : kernel_(std::move(kernel)), nugget_(nugget), anchors_(0, kernel_.dim()) {}

LatentPosterior::LatentPosterior(KernelConfig kernel, double nugget, Eigen::MatrixXd anchors,
                                 Eigen::VectorXd anchor_mean, Eigen::MatrixXd anchor_cov, double offset, double scale)
    : kernel_(std::move(kernel)),
      nugget_(nugget),
      anchors_(std::move(anchors)),
      anchor_mean_(std::move(anchor_mean)),
      anchor_cov_(std::move(anchor_cov)),
      offset_(offset),
      scale_(scale) {
  const auto n = anchors_.rows();
  if (anchor_mean_.size() != n || anchor_cov_.rows() != n || anchor_cov_.cols() != n)
    throw Error(ErrorKind::dimension, "anchor moments do not match the anchor count");
  prepare();
  if (n > 0) {
    alpha_ = gram_llt_.solve(anchor_mean_);
    const Eigen::MatrixXd k_inv = gram_llt_.solve(Eigen::MatrixXd::Identity(n, n));
    const Eigen::MatrixXd b = gram_llt_.solve(anchor_cov_);
    reduction_ = k_inv - gram_llt_.solve(b.transpose());
    reduction_ = 0.5 * (reduction_ + reduction_.transpose());
  }
}

void LatentPosterior::prepare() {
  if (anchors_.rows() == 0) return;
  gram_llt_.compute(gram(kernel_, anchors_, nugget_));
  if (gram_llt_.info() != Eigen::Success) throw Error(ErrorKind::fit, "anchor kernel matrix is not positive definite");
  cov_factor_ = psd_factor(anchor_cov_);
}

double LatentPosterior::mean(const Design& x) const {
  if (anchors_.rows() == 0) return offset_;
  return offset_ + scale_ * cross(kernel_, x, anchors_, nugget_).dot(alpha_);
}

Eigen::VectorXd LatentPosterior::mean_gradient(const Design& x) const {
  if (anchors_.rows() == 0) return Eigen::VectorXd::Zero(x.size());
  return scale_ * (cross_gradient(kernel_, x, anchors_) * alpha_);
}

double LatentPosterior::covariance(const Design& x, const Design& y) const {
  double prior = matern52(kernel_, x, y);
  if (anchors_.rows() == 0) return scale_ * scale_ * prior;
  const Eigen::VectorXd kx = cross(kernel_, x, anchors_, nugget_);
  const Eigen::VectorXd ky = same_design(x, y) ? kx : cross(kernel_, y, anchors_, nugget_);
  if (same_design(x, y)) {
    for (Eigen::Index i = 0; i < anchors_.rows(); ++i)
      if (same_design(anchors_.row(i).transpose(), x)) {
        prior += nugget_;
        break;
      }
  }
  return scale_ * scale_ * (prior - kx.dot(reduction_ * ky));
}

FunctionSample LatentPosterior::sample_path(Rng& rng, int features) const {
  const int d = dim();
  Eigen::MatrixXd freq(features, d);
  for (int i = 0; i < features; ++i) {
    // Matern-5/2 spectral density: Student-t with 5 degrees of freedom.
    const double mix = std::sqrt(5.0 / chi_squared(rng, 5.0));
    for (int k = 0; k < d; ++k) freq(i, k) = standard_normal(rng) * mix / kernel_.lengthscales[k];
  }
  Eigen::VectorXd phases(features), weights(features);
  for (int i = 0; i < features; ++i) phases[i] = 2.0 * M_PI * uniform01(rng);
  for (int i = 0; i < features; ++i) weights[i] = standard_normal(rng);

  const auto n = anchors_.rows();
  Eigen::VectorXd correction;
  FunctionSample prior(kernel_, nugget_, freq, phases, weights, Eigen::MatrixXd(0, d), Eigen::VectorXd(), 0.0, 1.0);
  if (n > 0) {
    Eigen::VectorXd z(n);
    for (Eigen::Index i = 0; i < n; ++i) z[i] = standard_normal(rng);
    const Eigen::VectorXd target = anchor_mean_ + cov_factor_ * z;
    Eigen::VectorXd residual(n);
    for (Eigen::Index i = 0; i < n; ++i) residual[i] = target[i] - prior.prior_part(anchors_.row(i).transpose());
    correction = gram_llt_.solve(residual);
  }
  return FunctionSample(kernel_, nugget_, std::move(freq), std::move(phases), std::move(weights), anchors_,
                        std::move(correction), offset_, scale_);
}

std::unique_ptr<SampledFunction> LatentPosterior::sample(Rng& rng, int features) const {
  return std::make_unique<FunctionSample>(sample_path(rng, features));
}

double posterior_mean(const LatentPosterior& posterior, const Design& x) { return posterior.mean(x); }

// ---- preference fitting ------------------------------------------------------

double preference_log_likelihood(std::span<const double> values, int winner, double lambda) {
  if (!(lambda > 0.0)) throw Error(ErrorKind::config, "lambda must be positive");
  if (winner < 0 || winner >= static_cast<int>(values.size()))
    throw Error(ErrorKind::index, "winner index out of range");
  double zmax = kNegInf;
  for (double v : values) zmax = std::max(zmax, v / lambda);
  double total = 0.0;
  for (double v : values) total += std::exp(v / lambda - zmax);
  return values[winner] / lambda - zmax - std::log(total);
}

LatentPosterior PreferenceModel::posterior() const {
  return LatentPosterior(kernel, nugget, anchors, laplace_mean, laplace_cov);
}

double preference_log_marginal(const InteractionDataset& data, int objective, const KernelConfig& kernel,
                               double lambda, Eigen::VectorXd* grad) {
  const auto choices = collect_choices(data, objective);
  const auto fit = laplace(choices, kernel, lambda, 100, nullptr);
  if (grad) *grad = laplace_gradient(choices, kernel, lambda, fit);
  return fit.log_marginal;
}

PreferenceModel fit_preference(const InteractionDataset& data, int objective, const PreferenceFitOptions& options,
                               std::uint64_t seed) {
  const auto choices = collect_choices(data, objective);
  const int d = static_cast<int>(choices.anchors.cols());
  const int p = d + 1;

  Eigen::VectorXd lo(p), hi(p);
  lo.head(d).setConstant(std::log(kLengthscaleMin));
  hi.head(d).setConstant(std::log(kLengthscaleMax));
  lo[d] = std::log(options.lambda_min);
  hi[d] = std::log(options.lambda_max);

  auto unpack = [&](const Eigen::VectorXd& v) {
    KernelConfig k;
    k.lengthscales = v.head(d).array().exp();
    k.signal_variance = options.signal_variance;
    return std::make_pair(k, std::exp(v[d]));
  };

  Eigen::VectorXd start(p);
  if (options.warm_kernel && options.warm_kernel->dim() == d)
    start.head(d) = options.warm_kernel->lengthscales.array().log();
  else
    start.head(d).setConstant(std::log(options.initial_lengthscale));
  start[d] = std::log(options.warm_lambda.value_or(options.initial_lambda));
  start = start.cwiseMax(lo).cwiseMin(hi);

  Eigen::VectorXd warm_mode;
  auto log_marginal = [&](const Eigen::VectorXd& v, Eigen::VectorXd* grad) {
    const auto [k, lambda] = unpack(v);
    try {
      auto fit = laplace(choices, k, lambda, options.newton_max_iter, warm_mode.size() ? &warm_mode : nullptr);
      warm_mode = fit.mode;
      if (grad) *grad = laplace_gradient(choices, k, lambda, fit);
      return fit.log_marginal;
    } catch (const Error&) {
      return kNegInf;
    }
  };

  PreferenceModel model;
  model.initial_log_marginal_likelihood = log_marginal(start, nullptr);
  Eigen::VectorXd best = start;
  double best_value = model.initial_log_marginal_likelihood;

  if (!options.fixed_hyperparameters) {
    Rng rng = make_rng(seed, {stream::fit, static_cast<std::uint64_t>(objective)});
    std::vector<Eigen::VectorXd> starts{start};
    for (int r = 1; r < options.restarts; ++r) {
      Eigen::VectorXd s(p);
      for (int k = 0; k < d; ++k) s[k] = std::log(0.05) + uniform01(rng) * (std::log(2.0) - std::log(0.05));
      s[d] = std::log(0.01) + uniform01(rng) * (std::log(1.0) - std::log(0.01));
      starts.push_back(s.cwiseMax(lo).cwiseMin(hi));
    }
    const ValueGradFn objective_fn = log_marginal;
    for (const auto& s : starts) {
      warm_mode.resize(0);
      const auto res = lbfgs_box_ascent(objective_fn, lo, hi, s, options.max_iter, 1e-6, 1e-9);
      if (std::isfinite(res.value) && res.value > best_value) {
        best_value = res.value;
        best = res.x;
      }
    }
  }

  const auto [kernel, lambda] = unpack(best);
  const auto fit = laplace(choices, kernel, lambda, options.newton_max_iter, nullptr);
  model.kernel = kernel;
  model.noise_scale = lambda;
  model.nugget = fit.nugget;
  model.anchors = choices.anchors;
  model.laplace_mean = fit.mode;
  model.laplace_cov = fit.cov;
  model.likelihood_gradient = fit.likelihood_gradient;
  model.log_marginal_likelihood = fit.log_marginal;
  model.newton_iterations = fit.iterations;
  return model;
}

// ---- regression --------------------------------------------------------------

LatentPosterior RegressionModel::posterior() const {
  return LatentPosterior(kernel, nugget, anchors, latent_mean, latent_cov, y_mean, y_scale);
}

namespace {

struct RegressionData {
  Eigen::MatrixXd anchors;
  std::vector<int> index;  // observation -> anchor
  Eigen::VectorXd y;       // standardized
  double mean = 0.0;
  double scale = 1.0;
};

struct RegressionFit {
  Eigen::VectorXd latent_mean;
  Eigen::MatrixXd latent_cov;
  double log_marginal = kNegInf;
  double nugget = 0.0;
};

RegressionFit regression_posterior(const RegressionData& data, const KernelConfig& kernel, double noise) {
  const auto fg = factor_gram(kernel, data.anchors, kRegressionNugget);
  const auto n_obs = static_cast<Eigen::Index>(data.index.size());
  const auto n = data.anchors.rows();
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(n_obs, n);
  for (Eigen::Index o = 0; o < n_obs; ++o) H(o, data.index[o]) = 1.0;
  const Eigen::MatrixXd KHt = fg.gram * H.transpose();
  Eigen::MatrixXd S = H * KHt;
  S.diagonal().array() += noise;
  Eigen::LLT<Eigen::MatrixXd> llt(S);
  if (llt.info() != Eigen::Success) throw Error(ErrorKind::fit, "observation covariance is not positive definite");
  const Eigen::VectorXd beta = llt.solve(data.y);
  RegressionFit out;
  out.nugget = fg.nugget;
  out.latent_mean = KHt * beta;
  out.latent_cov = fg.gram - KHt * llt.solve(KHt.transpose());
  out.latent_cov = 0.5 * (out.latent_cov + out.latent_cov.transpose());
  double logdet = 0.0;
  const Eigen::MatrixXd Lf = llt.matrixL();
  for (Eigen::Index i = 0; i < n_obs; ++i) logdet += std::log(Lf(i, i));
  out.log_marginal = -0.5 * data.y.dot(beta) - logdet - 0.5 * static_cast<double>(n_obs) * std::log(2.0 * M_PI);
  return out;
}

}  // namespace

RegressionModel fit_regression(std::span<const Observation> observations, const RegressionFitOptions& options,
                               std::uint64_t seed) {
  if (observations.size() < 2) throw Error(ErrorKind::data, "regression needs at least two observations");
  RegressionData data;
  std::vector<Design> anchors;
  Eigen::VectorXd raw(static_cast<Eigen::Index>(observations.size()));
  for (std::size_t o = 0; o < observations.size(); ++o) {
    data.index.push_back(anchor_index(anchors, observations[o].design));
    raw[static_cast<Eigen::Index>(o)] = observations[o].value;
  }
  data.anchors = to_rows(anchors);
  data.mean = raw.mean();
  const double sd = std::sqrt((raw.array() - data.mean).square().mean());
  data.scale = sd > 1e-12 ? sd : 1.0;
  data.y = (raw.array() - data.mean) / data.scale;

  const int d = static_cast<int>(data.anchors.cols());
  const int p = d + 2;
  Eigen::VectorXd lo(p), hi(p);
  lo.head(d).setConstant(std::log(kLengthscaleMin));
  hi.head(d).setConstant(std::log(kLengthscaleMax));
  lo[d] = std::log(1e-2);
  hi[d] = std::log(1e2);
  lo[d + 1] = std::log(options.fixed_noise_variance.value_or(options.noise_min));
  hi[d + 1] = std::log(options.fixed_noise_variance.value_or(options.noise_max));

  auto unpack = [&](const Eigen::VectorXd& v) {
    KernelConfig k;
    k.lengthscales = v.head(d).array().exp();
    k.signal_variance = std::exp(v[d]);
    return std::make_pair(k, std::exp(v[d + 1]));
  };
  const ValueFn log_marginal = [&](const Eigen::VectorXd& v) {
    const auto [k, noise] = unpack(v);
    try {
      return regression_posterior(data, k, noise).log_marginal;
    } catch (const Error&) {
      return kNegInf;
    }
  };
  const ValueGradFn objective_fn = [&](const Eigen::VectorXd& v, Eigen::VectorXd* grad) {
    const double value = log_marginal(v);
    if (grad && std::isfinite(value)) *grad = finite_difference_gradient(log_marginal, v, 1e-5, lo, hi);
    return value;
  };

  Eigen::VectorXd start(p);
  if (options.warm_kernel && options.warm_kernel->dim() == d) {
    start.head(d) = options.warm_kernel->lengthscales.array().log();
    start[d] = std::log(options.warm_kernel->signal_variance);
  } else {
    start.head(d).setConstant(std::log(0.3));
    start[d] = 0.0;
  }
  start[d + 1] = std::log(options.fixed_noise_variance.value_or(options.warm_noise.value_or(1e-2)));
  start = start.cwiseMax(lo).cwiseMin(hi);

  Rng rng = make_rng(seed, {stream::fit});
  Eigen::VectorXd best = start;
  double best_value = log_marginal(start);
  for (int r = 0; r < options.restarts; ++r) {
    Eigen::VectorXd s = start;
    if (r > 0) {
      for (int k = 0; k < d; ++k) s[k] = std::log(0.05) + uniform01(rng) * (std::log(2.0) - std::log(0.05));
      s[d] = std::log(0.3) + uniform01(rng) * (std::log(3.0) - std::log(0.3));
      s[d + 1] = lo[d + 1] + uniform01(rng) * (hi[d + 1] - lo[d + 1]);
    }
    const auto res = lbfgs_box_ascent(objective_fn, lo, hi, s, options.max_iter, 1e-6, 1e-9);
    if (std::isfinite(res.value) && res.value > best_value) {
      best_value = res.value;
      best = res.x;
    }
  }

  const auto [kernel, noise] = unpack(best);
  const auto fit = regression_posterior(data, kernel, noise);
  RegressionModel model;
  model.kernel = kernel;
  model.noise_variance = noise;
  model.nugget = fit.nugget;
  model.y_mean = data.mean;
  model.y_scale = data.scale;
  model.anchors = data.anchors;
  model.latent_mean = fit.latent_mean;
  model.latent_cov = fit.latent_cov;
  model.log_marginal_likelihood = fit.log_marginal;
  return model;
}

// ---- serialization -----------------------------------------------------------

namespace {
nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  auto rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index k = 0; k < m.cols(); ++k) row[static_cast<std::size_t>(k)] = m(i, k);
    rows.push_back(row);
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, Eigen::Index cols_if_empty) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  const auto cols = rows.empty() ? cols_if_empty : static_cast<Eigen::Index>(rows.front().size());
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), cols);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (Eigen::Index k = 0; k < cols; ++k) m(static_cast<Eigen::Index>(i), k) = rows[i][static_cast<std::size_t>(k)];
  return m;
}
}  // namespace

nlohmann::json to_json(const LatentPosterior& posterior) {
  const auto& mean = posterior.anchor_mean();
  return {{"kernel", to_json(posterior.kernel())},
          {"nugget", posterior.nugget()},
          {"anchors", matrix_json(posterior.anchors())},
          {"mean", std::vector<double>(mean.data(), mean.data() + mean.size())},
          {"cov", matrix_json(posterior.anchor_cov())},
          {"offset", posterior.offset()},
          {"scale", posterior.scale()}};
}

LatentPosterior posterior_from_json(const nlohmann::json& j) {
  auto kernel = kernel_from_json(j.at("kernel"));
  const double nugget = j.at("nugget").get<double>();
  auto anchors = matrix_from_json(j.at("anchors"), kernel.dim());
  if (anchors.rows() == 0) return LatentPosterior(kernel, nugget);
  const auto mean = j.at("mean").get<std::vector<double>>();
  Eigen::VectorXd mu = Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
  return LatentPosterior(std::move(kernel), nugget, std::move(anchors), std::move(mu),
                         matrix_from_json(j.at("cov"), 0), j.at("offset").get<double>(), j.at("scale").get<double>());
}

nlohmann::json to_json(const PreferenceModel& model) {
  auto j = to_json(model.posterior());
  j["noise_scale"] = model.noise_scale;
  j["log_marginal_likelihood"] = model.log_marginal_likelihood;
  return j;
}

}  // namespace prefmo
