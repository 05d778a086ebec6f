#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "dqp/error.hpp"

namespace dqp {

// Covariate points x_1..x_n in R^p, one row per point.
struct CovariateSet {
  Eigen::MatrixXd points;

  CovariateSet() = default;
  explicit CovariateSet(Eigen::MatrixXd pts) : points(std::move(pts)) {
    if (points.rows() < 1 || points.cols() < 1)
      throw invalid_argument("CovariateSet: needs at least one point and one dimension");
  }

  static CovariateSet from_scalar(const std::vector<double>& xs) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(xs.size()), 1);
    for (std::size_t i = 0; i < xs.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = xs[i];
    return CovariateSet(m);
  }

  Eigen::Index size() const { return points.rows(); }
  Eigen::Index dim() const { return points.cols(); }

  bool distinct() const {
    for (Eigen::Index i = 0; i < points.rows(); ++i)
      for (Eigen::Index j = i + 1; j < points.rows(); ++j)
        if ((points.row(i) - points.row(j)).norm() == 0.0) return false;
    return true;
  }
};

enum class KernelFamily { gaussian, exponential };

inline KernelFamily kernel_family_from_string(const std::string& s) {
  if (s == "gaussian") return KernelFamily::gaussian;
  if (s == "exponential") return KernelFamily::exponential;
  throw invalid_argument("unknown kernel family: " + s);
}

// Stationary correlation function: exp(-|x-x'|^2/phi) or exp(-|x-x'|/phi).
struct CorrelationKernel {
  KernelFamily family = KernelFamily::gaussian;
  double range = 1.0;

  CorrelationKernel() = default;
  CorrelationKernel(KernelFamily f, double phi) : family(f), range(phi) {
    if (!(range > 0.0)) throw invalid_argument("CorrelationKernel: range must be positive");
  }

  double operator()(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) const {
    double d = (a - b).norm();
    return (family == KernelFamily::gaussian) ? std::exp(-d * d / range) : std::exp(-d / range);
  }
};

inline Eigen::MatrixXd correlation_matrix(const CorrelationKernel& kernel, const CovariateSet& X) {
  Eigen::Index n = X.size();
  Eigen::MatrixXd lam(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    lam(i, i) = 1.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      double v = kernel(X.points.row(i), X.points.row(j));
      lam(i, j) = v;
      lam(j, i) = v;
    }
  }
  return lam;
}

// Lower-triangular Cholesky factor plus whatever diagonal jitter was needed.
struct CholeskyFactor {
  Eigen::MatrixXd L;
  double jitter = 0.0;

  double log_det_half() const {  // sum of log diagonal entries, = 0.5 log det
    double s = 0.0;
    for (Eigen::Index i = 0; i < L.rows(); ++i) s += std::log(L(i, i));
    return s;
  }

  Eigen::VectorXd solve_lower(const Eigen::VectorXd& b) const {
    return L.triangularView<Eigen::Lower>().solve(b);
  }

  // Full solve (L L^T) w = b.
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const {
    Eigen::VectorXd w = L.triangularView<Eigen::Lower>().solve(b);
    return L.transpose().triangularView<Eigen::Upper>().solve(w);
  }
};

// Cholesky with a jitter ladder 1e-10 .. 1e-6 (x10 per retry) on the diagonal.
inline CholeskyFactor cholesky_with_jitter(const Eigen::MatrixXd& m) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() == Eigen::Success) return {Eigen::MatrixXd(llt.matrixL()), 0.0};
  for (double jitter = 1e-10; jitter <= 1.0000001e-6; jitter *= 10.0) {
    Eigen::MatrixXd jm = m;
    jm.diagonal().array() += jitter;
    llt.compute(jm);
    if (llt.info() == Eigen::Success) return {Eigen::MatrixXd(llt.matrixL()), jitter};
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  throw numerical_error("cholesky_with_jitter: factorization failed after max jitter; "
                        "smallest eigenvalue ~ " +
                        std::to_string(es.eigenvalues().minCoeff()));
}

}  // namespace dqp
