#include "prefmo/optimize.hpp"

#include <cmath>
#include <deque>
#include <limits>

#include "prefmo/error.hpp"

namespace prefmo {
namespace {

constexpr int kMemory = 8;

Eigen::VectorXd project(const Eigen::VectorXd& x, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  return x.cwiseMax(lo).cwiseMin(hi);
}

// Zeroes components of a descent-space gradient that push against an active bound.
Eigen::VectorXd free_gradient(const Eigen::VectorXd& x, const Eigen::VectorXd& g, const Eigen::VectorXd& lo,
                              const Eigen::VectorXd& hi) {
  Eigen::VectorXd out = g;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const bool at_lo = x[i] <= lo[i];
    const bool at_hi = x[i] >= hi[i];
    // Minimizing: a step -g moves toward lo when g > 0.
    if ((at_lo && g[i] > 0.0) || (at_hi && g[i] < 0.0)) out[i] = 0.0;
  }
  return out;
}

}  // namespace

LocalResult lbfgs_box_ascent(const ValueGradFn& f, const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                             const Eigen::VectorXd& start, int max_iter, double tol, double ftol) {
  const auto d = start.size();
  LocalResult res;
  res.x = project(start, lower, upper);
  Eigen::VectorXd grad(d);
  // Internally minimize phi = -f.
  double phi = -f(res.x, &grad);
  Eigen::VectorXd gphi = -grad;
  res.evaluations = 1;
  if (!std::isfinite(phi) || !gphi.allFinite()) {
    res.value = -std::numeric_limits<double>::infinity();
    return res;
  }

  const double width = (upper - lower).minCoeff();
  std::deque<Eigen::VectorXd> s_hist, y_hist;
  for (res.iterations = 0; res.iterations < max_iter; ++res.iterations) {
    const Eigen::VectorXd pg = free_gradient(res.x, gphi, lower, upper);
    if (pg.lpNorm<Eigen::Infinity>() < tol) break;

    // Two-loop recursion on the free components.
    Eigen::VectorXd dir = pg;
    std::vector<double> alpha(s_hist.size());
    for (int k = static_cast<int>(s_hist.size()) - 1; k >= 0; --k) {
      alpha[k] = s_hist[k].dot(dir) / y_hist[k].dot(s_hist[k]);
      dir -= alpha[k] * y_hist[k];
    }
    if (!s_hist.empty()) dir *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    for (std::size_t k = 0; k < s_hist.size(); ++k) {
      const double beta = y_hist[k].dot(dir) / y_hist[k].dot(s_hist[k]);
      dir += (alpha[k] - beta) * s_hist[k];
    }
    dir = -free_gradient(res.x, dir, lower, upper);
    if (dir.dot(pg) >= 0.0 || !dir.allFinite()) {
      s_hist.clear();
      y_hist.clear();
      dir = -pg;
    }

    double t = 1.0;
    if (s_hist.empty()) t = std::min(1.0, 0.25 * width / dir.lpNorm<Eigen::Infinity>());
    bool accepted = false;
    Eigen::VectorXd x_new, g_new(d);
    double phi_new = phi;
    for (int bt = 0; bt < 40; ++bt, t *= 0.5) {
      x_new = project(res.x + t * dir, lower, upper);
      const double f_new = f(x_new, &g_new);
      ++res.evaluations;
      phi_new = -f_new;
      if (std::isfinite(phi_new) && phi_new <= phi + 1e-4 * gphi.dot(x_new - res.x)) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (s_hist.empty()) break;
      s_hist.clear();
      y_hist.clear();
      continue;
    }

    const Eigen::VectorXd s = x_new - res.x;
    const Eigen::VectorXd y = -g_new - gphi;
    const double improvement = phi - phi_new;
    res.x = x_new;
    phi = phi_new;
    gphi = -g_new;
    if (s.dot(y) > 1e-12 * s.norm() * y.norm()) {
      s_hist.push_back(s);
      y_hist.push_back(y);
      if (static_cast<int>(s_hist.size()) > kMemory) {
        s_hist.pop_front();
        y_hist.pop_front();
      }
    }
    if (s.lpNorm<Eigen::Infinity>() < 1e-12 * std::max(1.0, width) ||
        improvement <= ftol * std::max(1.0, std::abs(phi)))
      break;
  }
  res.value = -phi;
  return res;
}

LocalResult pattern_search_ascent(const ValueFn& f, const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                                  const Eigen::VectorXd& start, int max_iter, double initial_step, double tol) {
  LocalResult res;
  res.x = project(start, lower, upper);
  res.value = f(res.x);
  res.evaluations = 1;
  const Eigen::VectorXd width = upper - lower;
  double step = initial_step;
  for (res.iterations = 0; res.iterations < max_iter && step >= tol; ++res.iterations) {
    bool improved = false;
    Eigen::VectorXd best_x = res.x;
    double best = res.value;
    for (Eigen::Index i = 0; i < res.x.size(); ++i) {
      for (double sign : {1.0, -1.0}) {
        Eigen::VectorXd trial = res.x;
        trial[i] += sign * step * width[i];
        trial = project(trial, lower, upper);
        if (trial[i] == res.x[i]) continue;
        const double v = f(trial);
        ++res.evaluations;
        if (std::isfinite(v) && v > best) {
          best = v;
          best_x = trial;
          improved = true;
        }
      }
    }
    if (improved) {
      res.x = best_x;
      res.value = best;
    } else {
      step *= 0.5;
    }
  }
  if (!std::isfinite(res.value)) res.value = -std::numeric_limits<double>::infinity();
  return res;
}

Eigen::VectorXd finite_difference_gradient(const ValueFn& f, const Eigen::VectorXd& x, double h,
                                           const Eigen::VectorXd& lower, const Eigen::VectorXd& upper) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd up = x, down = x;
    up[i] = std::min(x[i] + h, upper[i]);
    down[i] = std::max(x[i] - h, lower[i]);
    g[i] = (f(up) - f(down)) / (up[i] - down[i]);
  }
  return g;
}

std::vector<Eigen::VectorXd> shifted_halton(int n, const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                                            Rng& rng) {
  static constexpr int kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};
  const auto d = lower.size();
  if (d > static_cast<Eigen::Index>(std::size(kPrimes)))
    throw Error(ErrorKind::unsupported, "Halton generator supports at most 16 dimensions");
  Eigen::VectorXd shift(d);
  for (Eigen::Index k = 0; k < d; ++k) shift[k] = uniform01(rng);

  std::vector<Eigen::VectorXd> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 1; i <= n; ++i) {
    Eigen::VectorXd p(d);
    for (Eigen::Index k = 0; k < d; ++k) {
      const int base = kPrimes[k];
      double inv = 1.0 / base, v = 0.0;
      for (int idx = i; idx > 0; idx /= base, inv /= base) v += (idx % base) * inv;
      v += shift[k];
      v -= std::floor(v);
      p[k] = lower[k] + (upper[k] - lower[k]) * v;
    }
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace prefmo
