#pragma once

// Uniform-scale quantile grids, the piecewise-linear distribution functions
// they induce, and the Levy distance between two such distributions.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "dqp/error.hpp"
#include "dqp/levels.hpp"

namespace dqp {

enum class Scale { uniform, real };

// Quantile values at the specified levels for a single covariate value.
// On the uniform scale Q(0)=0 and Q(1)=1 are implicit anchors.
struct QuantileGrid {
  QuantileLevels levels;
  std::vector<double> values;
  Scale scale = Scale::uniform;

  QuantileGrid(QuantileLevels lv, std::vector<double> vals, Scale sc = Scale::uniform)
      : levels(std::move(lv)), values(std::move(vals)), scale(sc) {
    if (values.size() != levels.size())
      throw invalid_argument("QuantileGrid: level/value size mismatch");
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (i > 0 && !(values[i] > values[i - 1]))
        throw invalid_argument("QuantileGrid: values must be strictly increasing");
      if (scale == Scale::uniform && !(values[i] > 0.0 && values[i] < 1.0))
        throw invalid_argument("QuantileGrid: uniform-scale values must lie in (0,1)");
    }
  }
};

// Eq-2 placement: K quantiles inside (left, right) from a simplex vector of
// length K+1; Q_k = left (1 - sum_{j<=k} v_j) + right sum_{j<=k} v_j.
inline std::vector<double> place_quantiles(double left, double right, std::span<const double> v) {
  if (!(left < right)) throw invalid_argument("place_quantiles: left must be below right");
  if (v.size() < 2) throw invalid_argument("place_quantiles: simplex vector needs K+1 >= 2 entries");
  double sum = 0.0;
  for (double vk : v) {
    if (!(vk > 0.0 && vk < 1.0)) throw invalid_argument("place_quantiles: v outside open simplex");
    sum += vk;
  }
  if (std::fabs(sum - 1.0) > 1e-9) throw invalid_argument("place_quantiles: v does not sum to 1");
  std::vector<double> q;
  q.reserve(v.size() - 1);
  double cum = 0.0;
  for (std::size_t k = 0; k + 1 < v.size(); ++k) {
    cum += v[k];
    q.push_back(left * (1.0 - cum) + right * cum);
  }
  return q;
}

// Linear interpolation of a uniform-scale grid at tau, anchored at (0,0), (1,1).
inline double interpolate(const QuantileGrid& grid, double tau) {
  if (grid.scale != Scale::uniform) throw invalid_argument("interpolate: uniform-scale grid required");
  if (!(tau > 0.0 && tau < 1.0)) throw invalid_argument("interpolate: tau outside (0,1)");
  const auto& lv = grid.levels.values();
  auto it = std::lower_bound(lv.begin(), lv.end(), tau);
  std::size_t hi = static_cast<std::size_t>(it - lv.begin());
  if (it != lv.end() && *it == tau) return grid.values[hi];
  double tau_lo = (hi == 0) ? 0.0 : lv[hi - 1];
  double tau_hi = (hi == lv.size()) ? 1.0 : lv[hi];
  double q_lo = (hi == 0) ? 0.0 : grid.values[hi - 1];
  double q_hi = (hi == lv.size()) ? 1.0 : grid.values[hi];
  return q_lo + (q_hi - q_lo) * (tau - tau_lo) / (tau_hi - tau_lo);
}

// Continuous piecewise-linear distribution function on [0,1], stored as
// breakpoints (y_i, F(y_i)) with (0,0) and (1,1) always present.
struct PiecewiseCdf {
  std::vector<double> y;
  std::vector<double> p;

  double operator()(double yy) const {
    if (yy <= y.front()) return p.front();
    if (yy >= y.back()) return p.back();
    auto it = std::upper_bound(y.begin(), y.end(), yy);
    std::size_t hi = static_cast<std::size_t>(it - y.begin());
    double w = (yy - y[hi - 1]) / (y[hi] - y[hi - 1]);
    return p[hi - 1] + w * (p[hi] - p[hi - 1]);
  }
};

// The distribution function induced by a uniform-scale grid: the inverse of
// the interpolated quantile function, so F(Q(tau*_t)) = tau*_t.
inline PiecewiseCdf induced_cdf(const QuantileGrid& grid) {
  if (grid.scale != Scale::uniform) throw invalid_argument("induced_cdf: uniform-scale grid required");
  PiecewiseCdf f;
  f.y.reserve(grid.values.size() + 2);
  f.p.reserve(grid.values.size() + 2);
  f.y.push_back(0.0);
  f.p.push_back(0.0);
  for (std::size_t t = 0; t < grid.values.size(); ++t) {
    f.y.push_back(grid.values[t]);
    f.p.push_back(grid.levels[t]);
  }
  f.y.push_back(1.0);
  f.p.push_back(1.0);
  return f;
}

namespace detail {

// max over y of g(y) - f(y + eps) - eps; piecewise linear between the
// breakpoints of g and the shifted breakpoints of f.
inline double levy_gap(const PiecewiseCdf& g, const PiecewiseCdf& f, double eps) {
  double worst = -1.0;
  auto probe = [&](double yy) { worst = std::max(worst, g(yy) - f(yy + eps) - eps); };
  for (double yy : g.y) probe(yy);
  for (double yy : f.y) probe(yy - eps);
  return worst;
}

}  // namespace detail

// Levy distance between two piecewise-linear cdfs supported on [0,1]:
// inf{eps > 0 : F(y-eps)-eps <= G(y) <= F(y+eps)+eps for all y}, by
// bisection on eps with feasibility checked on the breakpoint lattice.
inline double levy_distance(const PiecewiseCdf& f, const PiecewiseCdf& g, double tol = 1e-9) {
  auto feasible = [&](double eps) {
    return detail::levy_gap(g, f, eps) <= 0.0 && detail::levy_gap(f, g, eps) <= 0.0;
  };
  if (feasible(0.0)) return 0.0;
  double lo = 0.0, hi = 1.0;
  while (hi - lo > tol) {
    double mid = 0.5 * (lo + hi);
    (feasible(mid) ? hi : lo) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace dqp
