#pragma once

// Covariate-indexed randomness behind the pyramid: Gaussian-process draws,
// the U-processes they induce, and simplex-valued V-processes built from
// them by the gamma and by the beta (stick-breaking) routes.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "dqp/error.hpp"
#include "dqp/kernel.hpp"
#include "dqp/layout.hpp"
#include "dqp/rng.hpp"
#include "dqp/special.hpp"

namespace dqp {

// Clamp applied to U so downstream inverse cdfs stay on open intervals.
inline constexpr double kUClamp = 1e-12;

// One zero-mean unit-variance GP draw at the covariate set: L * eta.
inline Eigen::VectorXd sample_gp(const CholeskyFactor& chol, Rng& rng) {
  Eigen::VectorXd eta(chol.L.rows());
  for (Eigen::Index i = 0; i < eta.size(); ++i) eta(i) = rng.normal();
  return chol.L.triangularView<Eigen::Lower>() * eta;
}

inline double u_from_z(double z) {
  double u = norm_cdf(z);
  return std::min(1.0 - kUClamp, std::max(kUClamp, u));
}

inline Eigen::VectorXd u_from_z(const Eigen::VectorXd& z) {
  Eigen::VectorXd u(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    if (!std::isfinite(z(i))) throw invalid_argument("u_from_z: non-finite z");
    u(i) = u_from_z(z(i));
  }
  return u;
}

// Dirichlet vector from K+1 uniforms via gamma quantiles, V_k = Y_k / sum Y.
inline std::vector<double> v_from_u_gamma(std::span<const double> u, std::span<const double> alpha) {
  if (u.size() != alpha.size() || u.empty())
    throw invalid_argument("v_from_u_gamma: need K+1 matching u and alpha values");
  std::vector<double> y(u.size());
  double total = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    if (!(u[k] > 0.0 && u[k] < 1.0)) throw invalid_argument("v_from_u_gamma: u outside (0,1)");
    if (!(alpha[k] > 0.0)) throw invalid_argument("v_from_u_gamma: alpha must be positive");
    y[k] = gamma_quantile(alpha[k], u[k]);
    total += y[k];
  }
  if (!(total > 0.0)) throw numerical_error("v_from_u_gamma: all gamma variates underflowed");
  if (u.size() == 1) return {1.0};
  std::vector<double> v(u.size());
  for (std::size_t k = 0; k < u.size(); ++k) v[k] = y[k] / total;
  return v;
}

// Dirichlet vector from K uniforms via beta quantiles (stick-breaking):
// Y_k ~ beta(alpha_k, sum_{j>k} alpha_j), V_k = Y_k prod_{j<k} (1-Y_j).
inline std::vector<double> v_from_u_beta(std::span<const double> u, std::span<const double> alpha) {
  if (u.size() + 1 != alpha.size())
    throw invalid_argument("v_from_u_beta: need K u values and K+1 alphas");
  for (double a : alpha)
    if (!(a > 0.0)) throw invalid_argument("v_from_u_beta: alpha must be positive");
  std::size_t K = u.size();
  std::vector<double> v(K + 1);
  double stick = 1.0;
  double tail = 0.0;
  for (std::size_t j = 0; j < alpha.size(); ++j) tail += alpha[j];
  for (std::size_t k = 0; k < K; ++k) {
    if (!(u[k] > 0.0 && u[k] < 1.0)) throw invalid_argument("v_from_u_beta: u outside (0,1)");
    tail -= alpha[k];
    double y = beta_quantile(alpha[k], tail, u[k]);
    v[k] = y * stick;
    stick *= (1.0 - y);
  }
  v[K] = stick;  // equals 1 - sum of the others
  if (!(stick > 0.0)) throw numerical_error("v_from_u_beta: stick underflowed to zero");
  return v;
}

using ConcentrationRule = std::function<double(int)>;

// Default concentration c_m = (m+5)^2.
inline ConcentrationRule default_concentration() {
  return [](int m) { return (m + 5.0) * (m + 5.0); };
}

inline ConcentrationRule constant_concentration(double c) {
  return [c](int) { return c; };
}

// Martingale Dirichlet concentrations: alpha_k = c_m (tau_k - tau_{k-1}),
// one vector of K+1 values per node.
struct AlphaSchedule {
  std::vector<std::vector<double>> node_alpha;  // indexed like layout.nodes()

  const std::vector<double>& at(int node) const { return node_alpha[static_cast<std::size_t>(node)]; }
};

inline AlphaSchedule martingale_alphas(const PyramidLayout& layout, const ConcentrationRule& c) {
  AlphaSchedule sched;
  sched.node_alpha.reserve(layout.nodes().size());
  for (const auto& node : layout.nodes()) {
    double cm = c(node.level());
    if (!(cm > 0.0)) throw invalid_argument("martingale_alphas: concentration must be positive");
    std::vector<double> alpha;
    alpha.reserve(node.interior.size() + 1);
    double prev = node.tau_left;
    for (double tau : node.interior) {
      alpha.push_back(cm * (tau - prev));
      prev = tau;
    }
    alpha.push_back(cm * (node.tau_right - prev));
    sched.node_alpha.push_back(std::move(alpha));
  }
  return sched;
}

inline AlphaSchedule martingale_alphas(const PyramidLayout& layout) {
  return martingale_alphas(layout, default_concentration());
}

}  // namespace dqp
