#pragma once

// Piecewise-normal conditional density of responses given a real-scale
// quantile surface and mapping parameters.

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "dqp/error.hpp"
#include "dqp/kernel.hpp"
#include "dqp/levels.hpp"
#include "dqp/prior.hpp"
#include "dqp/special.hpp"

namespace dqp {

// Observations (x_i, y_i) mapped onto the distinct covariate sites that the
// surface is defined over.
struct Dataset {
  CovariateSet sites;       // distinct covariate values
  Eigen::VectorXd y;        // responses
  std::vector<int> site;    // per observation, index into sites

  // Covariate sites with no observations; used for prior-only chains.
  static Dataset prior_only(CovariateSet sites) {
    return Dataset{std::move(sites), Eigen::VectorXd(0), {}};
  }

  static Dataset from_xy(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.empty()) throw invalid_argument("Dataset: x/y size mismatch");
    std::vector<double> uniq(x);
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    Dataset d{CovariateSet::from_scalar(uniq), Eigen::VectorXd(static_cast<Eigen::Index>(y.size())),
              std::vector<int>(y.size())};
    for (std::size_t i = 0; i < y.size(); ++i) {
      d.y(static_cast<Eigen::Index>(i)) = y[i];
      d.site[i] = static_cast<int>(std::lower_bound(uniq.begin(), uniq.end(), x[i]) - uniq.begin());
    }
    return d;
  }

  Eigen::Index count() const { return y.size(); }
};

namespace detail {

// Piece index of y within a column: pieces are (Q_{t-1}, Q_t] for t = 0..T
// with Q_{-1} = -inf and Q_T = +inf, so index t means y <= Q_t, y > Q_{t-1}.
inline int piece_index(double y, const Eigen::MatrixXd& q, Eigen::Index col) {
  int lo = 0, hi = static_cast<int>(q.rows());
  while (lo < hi) {
    int mid = (lo + hi) / 2;
    if (y <= q(mid, col))
      hi = mid;
    else
      lo = mid + 1;
  }
  return lo;
}

}  // namespace detail

// Log density of one observation inside the piece (q_lo, q_hi] carrying
// probability mass tau_hi - tau_lo; q_lo/q_hi may be -inf/+inf.
inline double piece_log_density(double y, double tau_lo, double tau_hi, double q_lo, double q_hi,
                                double mu, double sigma) {
  double flo = (q_lo == kNegInf) ? 0.0 : norm_cdf((q_lo - mu) / sigma);
  double fhi = (q_hi == kInf) ? 1.0 : norm_cdf((q_hi - mu) / sigma);
  double denom = fhi - flo;
  if (!(denom > kDenomFloor)) return kNegInf;
  return std::log(tau_hi - tau_lo) + norm_log_pdf((y - mu) / sigma) - std::log(sigma) -
         std::log(denom);
}

// tau sentinels: tau_0 = 0 and tau_{T+1} = 1 around the specified levels.
inline double piecewise_obs_log_density(double y, int piece, const Eigen::MatrixXd& q,
                                        Eigen::Index col, const QuantileLevels* levels, double mu,
                                        double sigma) {
  int T = static_cast<int>(q.rows());
  double tau_lo = (piece == 0) ? 0.0 : (*levels)[static_cast<std::size_t>(piece - 1)];
  double tau_hi = (piece == T) ? 1.0 : (*levels)[static_cast<std::size_t>(piece)];
  double q_lo = (piece == 0) ? kNegInf : q(piece - 1, col);
  double q_hi = (piece == T) ? kInf : q(piece, col);
  return piece_log_density(y, tau_lo, tau_hi, q_lo, q_hi, mu, sigma);
}

// Joint log likelihood of the data. Returns -inf when any piece has a
// numerically vanished normal mass, which callers treat as a rejection.
inline double log_likelihood(const Dataset& data, const QuantileSurface& surface,
                             const MappingParams& params, const QuantileLevels* levels) {
  if (surface.scale != Scale::real) throw invalid_argument("log_likelihood: real-scale surface required");
  if (surface.q.rows() > 0 && levels == nullptr)
    throw invalid_argument("log_likelihood: levels required for a non-empty surface");
  double total = 0.0;
  for (Eigen::Index i = 0; i < data.count(); ++i) {
    Eigen::Index c = data.site[static_cast<std::size_t>(i)];
    int piece = detail::piece_index(data.y(i), surface.q, c);
    double term = piecewise_obs_log_density(data.y(i), piece, surface.q, c, levels, params.mu(c),
                                            params.sigma(c));
    if (term == kNegInf) return kNegInf;
    total += term;
  }
  return total;
}

// Conditional cdf of y at one site under the piecewise-normal density;
// equals tau*_t exactly at the knots.
inline double piecewise_cdf_at(double y, const QuantileSurface& surface, Eigen::Index col,
                               const MappingParams& params, const QuantileLevels* levels) {
  if (surface.scale != Scale::real) throw invalid_argument("piecewise_cdf_at: real-scale surface required");
  int T = static_cast<int>(surface.q.rows());
  double mu = params.mu(col), sigma = params.sigma(col);
  int piece = detail::piece_index(y, surface.q, col);
  double tau_lo = (piece == 0) ? 0.0 : (*levels)[static_cast<std::size_t>(piece - 1)];
  double tau_hi = (piece == T) ? 1.0 : (*levels)[static_cast<std::size_t>(piece)];
  double flo = (piece == 0) ? 0.0 : norm_cdf((surface.q(piece - 1, col) - mu) / sigma);
  double fhi = (piece == T) ? 1.0 : norm_cdf((surface.q(piece, col) - mu) / sigma);
  double denom = fhi - flo;
  if (!(denom > kDenomFloor)) return tau_lo;
  double f = tau_lo + (tau_hi - tau_lo) * (norm_cdf((y - mu) / sigma) - flo) / denom;
  return std::min(1.0, std::max(0.0, f));
}

}  // namespace dqp
