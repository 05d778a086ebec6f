#pragma once

// Forward construction of FDQP draws over a covariate set, the uniform-to-
// real mapping, and the exact prior density of a surface with its Jacobian.

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "dqp/error.hpp"
#include "dqp/kernel.hpp"
#include "dqp/layout.hpp"
#include "dqp/piecewise.hpp"
#include "dqp/rng.hpp"
#include "dqp/special.hpp"
#include "dqp/stochastic.hpp"

namespace dqp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kDenomFloor = 1e-300;
inline constexpr double kRatioClamp = 1e-15;

// Conditional quantiles as a T x n matrix: row t = level tau*_t across sites.
struct QuantileSurface {
  Eigen::MatrixXd q;
  Scale scale = Scale::uniform;

  bool non_crossing() const {
    for (Eigen::Index i = 0; i < q.cols(); ++i)
      for (Eigen::Index t = 1; t < q.rows(); ++t)
        if (!(q(t, i) > q(t - 1, i))) return false;
    return true;
  }

  QuantileGrid column(const QuantileLevels& levels, Eigen::Index i) const {
    std::vector<double> vals(static_cast<std::size_t>(q.rows()));
    for (Eigen::Index t = 0; t < q.rows(); ++t) vals[static_cast<std::size_t>(t)] = q(t, i);
    return QuantileGrid(levels, std::move(vals), scale);
  }
};

// Trend and scale of the uniform-to-real transformation, per site.
struct MappingParams {
  Eigen::VectorXd mu;
  Eigen::VectorXd sigma;

  MappingParams(Eigen::VectorXd m, Eigen::VectorXd s) : mu(std::move(m)), sigma(std::move(s)) {
    if (mu.size() != sigma.size()) throw invalid_argument("MappingParams: mu/sigma size mismatch");
    for (Eigen::Index i = 0; i < sigma.size(); ++i)
      if (!(sigma(i) > 0.0)) throw invalid_argument("MappingParams: sigma must be positive");
  }
};

// Design matrix (1, x) for linear trends mu_x = x~' beta.
inline Eigen::MatrixXd trend_design(const CovariateSet& X) {
  Eigen::MatrixXd d(X.size(), X.dim() + 1);
  d.col(0).setOnes();
  d.rightCols(X.dim()) = X.points;
  return d;
}

// GP dependence shared by all nodes, with an optional per-node override
// keyed by node address.
struct GpDependence {
  CholeskyFactor shared;
  std::map<std::string, CholeskyFactor> per_node;

  const CholeskyFactor& for_node(const NodeAddress& addr) const {
    auto it = per_node.find(addr.str());
    return it == per_node.end() ? shared : it->second;
  }
};

enum class VRoute { beta, gamma };

// One forward draw: the uniform-scale surface plus the latent Z and simplex
// V matrices per node that generated it.
struct FdqpDraw {
  QuantileSurface uniform;
  std::vector<Eigen::MatrixXd> node_z;  // per node: K x n (beta) or (K+1) x n (gamma)
  std::vector<Eigen::MatrixXd> node_v;  // per node: (K+1) x n
  VRoute route = VRoute::beta;
};

// Sequential top-down construction: per node draw one GP per within-node
// index, push through the normal cdf and the chosen inverse-cdf route, and
// place the node's quantiles between its endpoint values at every site.
inline FdqpDraw sample_fdqp_uniform(const PyramidLayout& layout, const AlphaSchedule& alphas,
                                    const GpDependence& dep, Eigen::Index n, Rng& rng,
                                    VRoute route = VRoute::beta) {
  FdqpDraw draw;
  draw.route = route;
  draw.uniform.scale = Scale::uniform;
  draw.uniform.q.resize(static_cast<Eigen::Index>(layout.level_count()), n);
  draw.node_z.reserve(layout.nodes().size());
  draw.node_v.reserve(layout.nodes().size());

  for (std::size_t ni = 0; ni < layout.nodes().size(); ++ni) {
    const LayoutNode& node = layout.node(static_cast<int>(ni));
    const auto& alpha = alphas.at(static_cast<int>(ni));
    const CholeskyFactor& chol = dep.for_node(node.addr);
    int K = node.interior_count();
    int gp_count = (route == VRoute::beta) ? K : K + 1;

    Eigen::MatrixXd z(gp_count, n), u(gp_count, n);
    for (int k = 0; k < gp_count; ++k) {
      Eigen::VectorXd zk = sample_gp(chol, rng);
      z.row(k) = zk.transpose();
      u.row(k) = u_from_z(zk).transpose();
    }

    int lp = layout.level_index(node.tau_left);
    int rp = layout.level_index(node.tau_right);
    Eigen::MatrixXd v(K + 1, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      std::vector<double> ui(static_cast<std::size_t>(gp_count));
      for (int k = 0; k < gp_count; ++k) ui[static_cast<std::size_t>(k)] = u(k, i);
      std::vector<double> vi = (route == VRoute::beta) ? v_from_u_beta(ui, alpha)
                                                       : v_from_u_gamma(ui, alpha);
      for (int k = 0; k <= K; ++k) v(k, i) = vi[static_cast<std::size_t>(k)];
      double left = (lp < 0) ? 0.0 : draw.uniform.q(lp, i);
      double right = (rp < 0) ? 1.0 : draw.uniform.q(rp, i);
      std::vector<double> qv = place_quantiles(left, right, vi);
      for (int k = 0; k < K; ++k) draw.uniform.q(node.interior_index[static_cast<std::size_t>(k)], i) = qv[static_cast<std::size_t>(k)];
    }
    draw.node_z.push_back(std::move(z));
    draw.node_v.push_back(std::move(v));
  }
  return draw;
}

// Latent Z as a T x n matrix; defined for beta-route draws on binary layouts,
// where each specified level has exactly one latent process.
inline Eigen::MatrixXd latent_matrix(const FdqpDraw& draw, const PyramidLayout& layout) {
  if (draw.route != VRoute::beta || !layout.is_binary())
    throw invalid_argument("latent_matrix: beta-route draw on a binary layout required");
  Eigen::MatrixXd z(static_cast<Eigen::Index>(layout.level_count()), draw.uniform.q.cols());
  for (std::size_t t = 0; t < layout.level_count(); ++t) {
    const auto& pl = layout.placement(static_cast<int>(t));
    z.row(static_cast<Eigen::Index>(t)) = draw.node_z[static_cast<std::size_t>(pl.node)].row(pl.k - 1);
  }
  return z;
}

// Componentwise Q^R = mu + sigma * Phi^{-1}(Q).
inline QuantileSurface map_to_real(const QuantileSurface& uniform, const MappingParams& params) {
  if (uniform.scale != Scale::uniform) throw invalid_argument("map_to_real: uniform-scale input required");
  if (params.mu.size() != uniform.q.cols())
    throw invalid_argument("map_to_real: params do not match surface width");
  QuantileSurface real;
  real.scale = Scale::real;
  real.q.resize(uniform.q.rows(), uniform.q.cols());
  for (Eigen::Index i = 0; i < uniform.q.cols(); ++i)
    for (Eigen::Index t = 0; t < uniform.q.rows(); ++t) {
      double qu = uniform.q(t, i);
      if (!(qu > 0.0 && qu < 1.0))
        throw invalid_argument("map_to_real: uniform quantile at 0 or 1 maps to infinity");
      real.q(t, i) = params.mu(i) + params.sigma(i) * norm_quantile(qu);
    }
  return real;
}

// Beta parameters (a_tau, b_tau) per specified level of a binary layout.
enum class BetaParamRule {
  martingale,       // a = alpha_1, b = alpha_2
  unit_complement,  // a = alpha_1, b = 1 - alpha_1
};

struct BetaLevelParams {
  std::vector<double> a, b;  // indexed by specified-level index t
};

inline BetaLevelParams beta_level_params(const PyramidLayout& layout, const AlphaSchedule& alphas,
                                         BetaParamRule rule = BetaParamRule::martingale) {
  if (!layout.is_binary()) throw invalid_argument("beta_level_params: binary layout required");
  BetaLevelParams bp;
  bp.a.resize(layout.level_count());
  bp.b.resize(layout.level_count());
  for (std::size_t t = 0; t < layout.level_count(); ++t) {
    const auto& pl = layout.placement(static_cast<int>(t));
    const auto& alpha = alphas.at(pl.node);
    double a = alpha[0];
    double b = (rule == BetaParamRule::martingale) ? alpha[1] : 1.0 - alpha[0];
    if (!(a > 0.0 && b > 0.0))
      throw invalid_argument("beta_level_params: nonpositive beta parameter (rule incompatible "
                             "with the concentration schedule)");
    bp.a[t] = a;
    bp.b[t] = b;
  }
  return bp;
}

// Endpoint level indices per specified level; -1 marks the 0/1 anchors.
struct ParentIndex {
  int left = -1;
  int right = -1;
};

inline std::vector<ParentIndex> parent_indices(const PyramidLayout& layout) {
  std::vector<ParentIndex> out(layout.level_count());
  for (std::size_t t = 0; t < layout.level_count(); ++t) {
    const LayoutNode& node = layout.node(layout.placement(static_cast<int>(t)).node);
    out[t] = {layout.level_index(node.tau_left), layout.level_index(node.tau_right)};
  }
  return out;
}

struct HResult {
  double z = std::numeric_limits<double>::quiet_NaN();
  double log_jac = kNegInf;
  double ratio = std::numeric_limits<double>::quiet_NaN();
  bool ok = false;
};

// Back-transform of a real-scale quantile to its latent Gaussian coordinate,
// together with the log derivative |dz/dq|. qL/qR may be -inf/+inf.
inline HResult h_with_jacobian(double q, double qL, double qR, double mu, double sigma, double a,
                               double b) {
  HResult r;
  double fl = (qL == kNegInf) ? 0.0 : norm_cdf((qL - mu) / sigma);
  double fr = (qR == kInf) ? 1.0 : norm_cdf((qR - mu) / sigma);
  double denom = fr - fl;
  if (!(denom > kDenomFloor)) return r;
  double ratio = (norm_cdf((q - mu) / sigma) - fl) / denom;
  if (ratio < -1e-12 || ratio > 1.0 + 1e-12) return r;  // ordering violated
  ratio = std::min(1.0 - kRatioClamp, std::max(kRatioClamp, ratio));
  double p = inc_beta(a, b, ratio);
  p = std::min(1.0 - 1e-16, std::max(1e-300, p));
  r.z = norm_quantile(p);
  r.ratio = ratio;
  double zs = (q - mu) / sigma;
  r.log_jac = -norm_log_pdf(r.z) + beta_log_pdf(ratio, a, b) + norm_log_pdf(zs) -
              std::log(sigma) - std::log(denom);
  r.ok = std::isfinite(r.z) && std::isfinite(r.log_jac);
  return r;
}

inline double h_transform(double q, double qL, double qR, double mu, double sigma, double a,
                          double b) {
  if (!(qL < q && q < qR)) throw invalid_argument("h_transform: requires qL < q < qR");
  HResult r = h_with_jacobian(q, qL, qR, mu, sigma, a, b);
  if (!r.ok) throw numerical_error("h_transform: degenerate subinterval");
  return r.z;
}

// Forward map, the exact inverse of h_transform: latent z to a real-scale
// quantile inside (qL, qR). May return non-finite values when the band has
// numerically collapsed; callers treat that as a rejection.
inline double forward_from_z(double z, double qL, double qR, double mu, double sigma, double a,
                             double b) {
  double u = u_from_z(z);
  double y = beta_quantile(a, b, u);
  double fl = (qL == kNegInf) ? 0.0 : norm_cdf((qL - mu) / sigma);
  double fr = (qR == kInf) ? 1.0 : norm_cdf((qR - mu) / sigma);
  double fq = fl + y * (fr - fl);
  if (!(fq > 0.0 && fq < 1.0)) return std::numeric_limits<double>::quiet_NaN();
  return mu + sigma * norm_quantile(fq);
}

// Multivariate normal log density with zero mean and covariance L L'.
inline double mvn_log_pdf(const Eigen::VectorXd& z, const CholeskyFactor& chol) {
  Eigen::VectorXd w = chol.solve_lower(z);
  return -0.5 * static_cast<double>(z.size()) * std::log(2.0 * kPi) - chol.log_det_half() -
         0.5 * w.squaredNorm();
}

// Prior terms contributed by one specified level across all sites.
struct LevelPriorTerms {
  Eigen::VectorXd z;
  double mvn = kNegInf;
  double jac = kNegInf;
  bool ok = false;
};

inline LevelPriorTerms level_prior_terms(const Eigen::VectorXd& q_row, const Eigen::VectorXd& qL,
                                         const Eigen::VectorXd& qR, const MappingParams& params,
                                         double a, double b, const CholeskyFactor& chol) {
  LevelPriorTerms out;
  Eigen::Index n = q_row.size();
  out.z.resize(n);
  out.jac = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    HResult r = h_with_jacobian(q_row(i), qL(i), qR(i), params.mu(i), params.sigma(i), a, b);
    if (!r.ok) {
      out.jac = kNegInf;
      return out;
    }
    out.z(i) = r.z;
    out.jac += r.log_jac;
  }
  out.mvn = mvn_log_pdf(out.z, chol);
  out.ok = std::isfinite(out.mvn) && std::isfinite(out.jac);
  return out;
}

namespace detail {
inline Eigen::VectorXd endpoint_row(const QuantileSurface& s, int idx, double anchor,
                                    Eigen::Index n) {
  if (idx >= 0) return s.q.row(idx).transpose();
  return Eigen::VectorXd::Constant(n, anchor);
}
}  // namespace detail

// Sum of the log |dh/dq| factors over all sites and specified levels.
inline double log_jacobian(const QuantileSurface& surface, const MappingParams& params,
                           const PyramidLayout& layout, const BetaLevelParams& betas) {
  if (surface.scale != Scale::real) throw invalid_argument("log_jacobian: real-scale surface required");
  auto parents = parent_indices(layout);
  Eigen::Index n = surface.q.cols();
  double total = 0.0;
  for (int t : layout.pyramid_order()) {
    Eigen::VectorXd qL = detail::endpoint_row(surface, parents[static_cast<std::size_t>(t)].left, kNegInf, n);
    Eigen::VectorXd qR = detail::endpoint_row(surface, parents[static_cast<std::size_t>(t)].right, kInf, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      HResult r = h_with_jacobian(surface.q(t, i), qL(i), qR(i), params.mu(i), params.sigma(i),
                                  betas.a[static_cast<std::size_t>(t)], betas.b[static_cast<std::size_t>(t)]);
      if (!r.ok) return kNegInf;
      total += r.log_jac;
    }
  }
  return total;
}

// Exact log prior density of a real-scale surface over the covariate set:
// per level, an n-variate normal density of the back-transformed latents
// times the Jacobian of the transformation, evaluated top-down so each
// node's endpoints are available. Crossing or degenerate surfaces get -inf.
inline double log_prior_density(const QuantileSurface& surface, const CholeskyFactor& chol,
                                const MappingParams& params, const PyramidLayout& layout,
                                const BetaLevelParams& betas) {
  if (surface.scale != Scale::real)
    throw invalid_argument("log_prior_density: real-scale surface required");
  if (!layout.is_binary()) throw invalid_argument("log_prior_density: binary layout required");
  if (!surface.non_crossing()) return kNegInf;
  auto parents = parent_indices(layout);
  Eigen::Index n = surface.q.cols();
  double total = 0.0;
  for (int t : layout.pyramid_order()) {
    Eigen::VectorXd qL = detail::endpoint_row(surface, parents[static_cast<std::size_t>(t)].left, kNegInf, n);
    Eigen::VectorXd qR = detail::endpoint_row(surface, parents[static_cast<std::size_t>(t)].right, kInf, n);
    LevelPriorTerms terms = level_prior_terms(surface.q.row(t).transpose(), qL, qR, params,
                                              betas.a[static_cast<std::size_t>(t)],
                                              betas.b[static_cast<std::size_t>(t)], chol);
    if (!terms.ok) return kNegInf;
    total += terms.mvn + terms.jac;
  }
  return total;
}

}  // namespace dqp
