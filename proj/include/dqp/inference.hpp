#pragma once

// Posterior summaries: mean quantile-regression curves, linearized fits with
// credible intervals for the slopes, and prediction at new covariate values
// by conditional (kriging) draws of the latent processes.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "dqp/error.hpp"
#include "dqp/mcmc.hpp"
#include "dqp/piecewise.hpp"
#include "dqp/prior.hpp"

namespace dqp {

// Elementwise one-pass mean over the thinned draws.
inline QuantileSurface posterior_mean_curves(const PosteriorDraws& draws) {
  if (draws.draws.empty()) throw invalid_argument("posterior_mean_curves: no draws");
  QuantileSurface mean;
  mean.scale = Scale::real;
  mean.q = Eigen::MatrixXd::Zero(draws.draws.front().q.rows(), draws.draws.front().q.cols());
  double k = 0.0;
  for (const Draw& d : draws.draws) {
    k += 1.0;
    mean.q += (d.q - mean.q) / k;
  }
  return mean;
}

// Coefficients of the best linear quantile curve at one level, with
// credible bounds for each coefficient.
struct LinearFit {
  Eigen::VectorXd coef;
  Eigen::VectorXd lower, upper;
};

namespace detail {

// Weighted least squares of values on the design; weights form a probability
// distribution over the sites.
inline Eigen::VectorXd wls(const Eigen::MatrixXd& design, const Eigen::VectorXd& values,
                           const Eigen::VectorXd& weights) {
  Eigen::MatrixXd wd = weights.asDiagonal() * design;
  Eigen::MatrixXd xtx = design.transpose() * wd;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(xtx);
  if (lu.rank() < xtx.rows())
    throw numerical_error("linearize: singular design, rank " + std::to_string(lu.rank()) +
                          " of " + std::to_string(xtx.rows()));
  return lu.solve(wd.transpose() * values);
}

}  // namespace detail

// Empirical covariate weights: each site weighted by its observation count.
inline Eigen::VectorXd empirical_weights(const Dataset& data) {
  Eigen::VectorXd w = Eigen::VectorXd::Zero(data.sites.size());
  for (int s : data.site) w(s) += 1.0;
  if (data.count() == 0) w.setOnes();
  w /= w.sum();
  return w;
}

// Least squares of the posterior mean curve at level index t on (1, x),
// weighted by a probability distribution G over the observed sites.
inline Eigen::VectorXd linearize(const QuantileSurface& mean_surface, const Eigen::MatrixXd& design,
                                 int t, const Eigen::VectorXd& weights) {
  if (t < 0 || t >= mean_surface.q.rows()) throw invalid_argument("linearize: level index out of range");
  return detail::wls(design, mean_surface.q.row(t).transpose(), weights);
}

// Per-draw least squares coefficients at level index t.
inline std::vector<Eigen::VectorXd> per_draw_fits(const PosteriorDraws& draws,
                                                  const Eigen::MatrixXd& design, int t,
                                                  const Eigen::VectorXd& weights) {
  std::vector<Eigen::VectorXd> fits;
  fits.reserve(draws.draws.size());
  for (const Draw& d : draws.draws)
    fits.push_back(detail::wls(design, d.q.row(t).transpose(), weights));
  return fits;
}

// Percentile interval with the inclusive linear-interpolation convention.
inline std::pair<double, double> percentile_interval(std::vector<double> xs, double level) {
  std::sort(xs.begin(), xs.end());
  auto interp = [&](double p) {
    double h = p * (static_cast<double>(xs.size()) - 1.0);
    std::size_t lo = static_cast<std::size_t>(h);
    if (lo + 1 >= xs.size()) return xs.back();
    return xs[lo] + (h - static_cast<double>(lo)) * (xs[lo + 1] - xs[lo]);
  };
  double a = 0.5 * (1.0 - level);
  return {interp(a), interp(1.0 - a)};
}

// Credible intervals of the per-draw least-squares coefficients.
inline LinearFit slope_intervals(const PosteriorDraws& draws, const Eigen::MatrixXd& design, int t,
                                 const Eigen::VectorXd& weights, double level = 0.95) {
  if (draws.draws.size() < 40)
    throw invalid_argument("slope_intervals: needs at least 40 thinned draws");
  auto fits = per_draw_fits(draws, design, t, weights);
  Eigen::Index p = fits.front().size();
  LinearFit out;
  out.coef = Eigen::VectorXd::Zero(p);
  out.lower.resize(p);
  out.upper.resize(p);
  for (const auto& f : fits) out.coef += f;
  out.coef /= static_cast<double>(fits.size());
  for (Eigen::Index j = 0; j < p; ++j) {
    std::vector<double> xs;
    xs.reserve(fits.size());
    for (const auto& f : fits) xs.push_back(f(j));
    auto [lo, hi] = percentile_interval(std::move(xs), level);
    out.lower(j) = lo;
    out.upper(j) = hi;
  }
  return out;
}

// Per-draw predictive quantile grid at a new covariate value: kriging draw
// of each level's latent process given its values at the data sites, then
// the forward pyramid construction at x*.
inline std::vector<QuantileGrid> predict_new_x(const DqpModel& m, const PosteriorDraws& draws,
                                               const Eigen::RowVectorXd& x_star, Rng& rng) {
  if (!m.layout) throw invalid_argument("predict_new_x: model has no quantile levels");
  Eigen::Index n = m.sites.size();
  Eigen::VectorXd lam_star(n);
  for (Eigen::Index i = 0; i < n; ++i) lam_star(i) = m.kernel(m.sites.points.row(i), x_star);
  Eigen::VectorXd w = m.chol.solve(lam_star);  // Lambda^{-1} lambda_*
  double cond_var = 1.0 - lam_star.dot(w);
  if (cond_var < -1e-10)
    throw numerical_error("predict_new_x: negative conditional variance " + std::to_string(cond_var));
  double cond_sd = std::sqrt(std::max(0.0, cond_var));

  Eigen::MatrixXd design_star(1, m.design.cols());
  design_star(0, 0) = 1.0;
  design_star.row(0).rightCols(x_star.size()) = x_star;
  double sigma0_star = m.scale.at(m.sites, x_star);

  std::size_t T = m.level_count();
  std::vector<QuantileGrid> out;
  out.reserve(draws.draws.size());
  for (const Draw& d : draws.draws) {
    std::vector<double> uniform(T, 0.0);
    for (int t : m.layout->pyramid_order()) {
      double zs = d.z.row(t) * w + cond_sd * rng.normal();
      double u = u_from_z(zs);
      double y = beta_quantile(m.betas.a[static_cast<std::size_t>(t)],
                               m.betas.b[static_cast<std::size_t>(t)], u);
      const ParentIndex& par = m.parents[static_cast<std::size_t>(t)];
      double uL = (par.left < 0) ? 0.0 : uniform[static_cast<std::size_t>(par.left)];
      double uR = (par.right < 0) ? 1.0 : uniform[static_cast<std::size_t>(par.right)];
      uniform[static_cast<std::size_t>(t)] = uL + y * (uR - uL);
    }
    double mu_star = (design_star * d.beta)(0);
    double sig_star = std::exp(d.log_scale) * sigma0_star;
    std::vector<double> vals(T);
    for (std::size_t t = 0; t < T; ++t) vals[t] = mu_star + sig_star * norm_quantile(uniform[t]);
    out.emplace_back(m.layout->levels(), std::move(vals), Scale::real);
  }
  return out;
}

}  // namespace dqp
