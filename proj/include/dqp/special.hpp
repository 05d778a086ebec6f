#pragma once

// Scalar special functions: normal cdf/quantile, regularized incomplete
// gamma and beta functions with their inverses, Student-t quantiles.
// Inverses are Newton iterations bracketed by bisection so they cannot
// escape their domain; absolute tolerance ~1e-14.

#include <cmath>
#include <limits>

#include "dqp/error.hpp"

namespace dqp {

inline constexpr double kPi = 3.141592653589793238462643383279502884;
inline constexpr double kLogSqrt2Pi = 0.9189385332046727417803297364056176;

inline double norm_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * kPi); }

inline double norm_log_pdf(double z) { return -0.5 * z * z - kLogSqrt2Pi; }

inline double norm_cdf(double z) { return 0.5 * std::erfc(-z * 0.7071067811865475244); }

// Acklam's rational approximation followed by one Halley step.
inline double norm_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    if (p == 1.0) return std::numeric_limits<double>::infinity();
    throw invalid_argument("norm_quantile: p outside [0,1]");
  }
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double x;
  if (p < plow) {
    double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - plow) {
    double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  double e = norm_cdf(x) - p;
  double u = e * std::sqrt(2.0 * kPi) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

inline double log_beta(double a, double b) {
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

inline double beta_log_pdf(double x, double a, double b) {
  if (x <= 0.0 || x >= 1.0) return -std::numeric_limits<double>::infinity();
  return (a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x) - log_beta(a, b);
}

namespace detail {

inline constexpr double kConvEps = 1e-15;
inline constexpr double kTiny = 1e-300;
inline constexpr int kMaxIter = 500;

// Lower incomplete gamma by power series, valid for x < a+1.
inline double gamma_p_series(double a, double x) {
  double ap = a, sum = 1.0 / a, del = sum;
  for (int n = 0; n < kMaxIter; ++n) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::fabs(del) < std::fabs(sum) * kConvEps)
      return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
  }
  throw numerical_error("gamma_p: series failed to converge");
}

// Upper incomplete gamma by modified Lentz continued fraction, x >= a+1.
inline double gamma_q_contfrac(double a, double x) {
  double b = x + 1.0 - a, c = 1.0 / kTiny, d = 1.0 / b, h = d;
  for (int i = 1; i <= kMaxIter; ++i) {
    double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = b + an / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kConvEps)
      return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
  }
  throw numerical_error("gamma_q: continued fraction failed to converge");
}

// Incomplete beta continued fraction (Lentz).
inline double beta_contfrac(double a, double b, double x) {
  double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0, d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kConvEps) return h;
  }
  throw numerical_error("inc_beta: continued fraction failed to converge");
}

}  // namespace detail

// Regularized lower incomplete gamma P(a, x).
inline double gamma_p(double a, double x) {
  if (a <= 0.0) throw invalid_argument("gamma_p: a must be positive");
  if (x < 0.0) throw invalid_argument("gamma_p: x must be nonnegative");
  if (x == 0.0) return 0.0;
  return (x < a + 1.0) ? detail::gamma_p_series(a, x) : 1.0 - detail::gamma_q_contfrac(a, x);
}

// Regularized incomplete beta I_x(a, b).
inline double inc_beta(double a, double b, double x) {
  if (a <= 0.0 || b <= 0.0) throw invalid_argument("inc_beta: parameters must be positive");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  double lbt = a * std::log(x) + b * std::log1p(-x) - log_beta(a, b);
  double bt = std::exp(lbt);
  if (x < (a + 1.0) / (a + b + 2.0)) return bt * detail::beta_contfrac(a, b, x) / a;
  return 1.0 - bt * detail::beta_contfrac(b, a, 1.0 - x) / b;
}

// Quantile of gamma(shape a, scale 1): solves P(a, x) = p.
inline double gamma_quantile(double a, double p) {
  if (a <= 0.0) throw invalid_argument("gamma_quantile: a must be positive");
  if (!(p >= 0.0 && p < 1.0)) throw invalid_argument("gamma_quantile: p outside [0,1)");
  if (p == 0.0) return 0.0;
  // Wilson-Hilferty start, clipped away from zero.
  double z = norm_quantile(p);
  double g = 1.0 - 1.0 / (9.0 * a) + z / (3.0 * std::sqrt(a));
  double x = a * g * g * g;
  if (!(x > 0.0) || !std::isfinite(x)) x = a;
  double lo = 0.0, hi = std::numeric_limits<double>::infinity();
  double lgam = std::lgamma(a);
  for (int it = 0; it < 200; ++it) {
    double f = gamma_p(a, x) - p;
    if (f > 0.0)
      hi = x;
    else
      lo = x;
    double dens = std::exp((a - 1.0) * std::log(x) - x - lgam);
    double step = (dens > 0.0) ? f / dens : 0.0;
    double xn = x - step;
    if (!(xn > lo && xn < hi) || dens <= 0.0)
      xn = std::isinf(hi) ? 2.0 * x : 0.5 * (lo + hi);
    if (std::fabs(xn - x) <= 1e-14 * std::max(1.0, std::fabs(x))) return xn;
    x = xn;
  }
  return x;
}

// Quantile of beta(a, b): solves I_x(a, b) = p.
inline double beta_quantile(double a, double b, double p) {
  if (a <= 0.0 || b <= 0.0) throw invalid_argument("beta_quantile: parameters must be positive");
  if (!(p >= 0.0 && p <= 1.0)) throw invalid_argument("beta_quantile: p outside [0,1]");
  if (p == 0.0) return 0.0;
  if (p == 1.0) return 1.0;
  double x;
  if (a >= 1.0 && b >= 1.0) {
    // Abramowitz & Stegun 26.5.22 start.
    double y = norm_quantile(p);
    double lam = (y * y - 3.0) / 6.0;
    double h = 2.0 / (1.0 / (2.0 * a - 1.0) + 1.0 / (2.0 * b - 1.0));
    double w = y * std::sqrt(h + lam) / h -
               (1.0 / (2.0 * b - 1.0) - 1.0 / (2.0 * a - 1.0)) * (lam + 5.0 / 6.0 - 2.0 / (3.0 * h));
    x = a / (a + b * std::exp(2.0 * w));
  } else {
    x = a / (a + b);
  }
  if (!(x > 0.0 && x < 1.0)) x = 0.5;
  double lo = 0.0, hi = 1.0;
  double lb = log_beta(a, b);
  for (int it = 0; it < 200; ++it) {
    double f = inc_beta(a, b, x) - p;
    if (f > 0.0)
      hi = x;
    else
      lo = x;
    double dens = std::exp((a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x) - lb);
    double xn = (dens > 0.0 && std::isfinite(dens)) ? x - f / dens : 0.5 * (lo + hi);
    if (!(xn > lo && xn < hi)) xn = 0.5 * (lo + hi);
    if (std::fabs(xn - x) <= 1e-15 * std::max(1.0, std::fabs(x))) return xn;
    x = xn;
  }
  return x;
}

// Student-t quantile via the inverse incomplete beta.
inline double student_t_quantile(double df, double p) {
  if (df <= 0.0) throw invalid_argument("student_t_quantile: df must be positive");
  if (!(p > 0.0 && p < 1.0)) throw invalid_argument("student_t_quantile: p outside (0,1)");
  if (p == 0.5) return 0.0;
  double tail = 2.0 * std::min(p, 1.0 - p);
  double x = beta_quantile(0.5 * df, 0.5, tail);
  double t = std::sqrt(df * (1.0 - x) / x);
  return (p < 0.5) ? -t : t;
}

}  // namespace dqp
