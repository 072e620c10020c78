#pragma once

// Scalar special functions for Gaussian measure computations.
//
// Everything here is dimension-parametric in n (ambient dimension) and uses
// double precision throughout.  The radial profile
//     psi_n(r) = gaussian measure of the centered ball of radius r
// is the regularized lower incomplete gamma P(n/2, r^2/2); its density
// constant c_n satisfies 1/c_n = 2^(n/2-1) * Gamma(n/2).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace gbm {

inline constexpr double kPi = 3.14159265358979323846264338327950288;
inline constexpr double kSqrt2 = 1.41421356237309504880168872420969808;
inline constexpr double kInf = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------- normal CDF

inline double phi(double x) { return 0.5 * std::erfc(-x / kSqrt2); }

inline double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * kPi);
}

// Inverse normal CDF: Acklam's rational approximation polished by one Halley
// step, which brings the round-trip |phi(phi_inv(p)) - p| to ~1 ulp.
inline double phi_inv(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -kInf;
    if (p == 1.0) return kInf;
    throw std::domain_error("phi_inv: p outside [0,1]");
  }
  static const double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                              -2.759285104469687e+02, 1.383577518672690e+02,
                              -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                              -1.556989798598866e+02, 6.680131188771972e+01,
                              -1.328068155288572e+01};
  static const double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                              -2.400758277161838e+00, -2.549732539343734e+00,
                              4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                              2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double x;
  if (p < plow) {
    double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - plow) {
    double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) *
        q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // Halley polish on f(x) = phi(x) - p.
  double e = phi(x) - p;
  double u = e / normal_pdf(x);
  x -= u / (1.0 + 0.5 * x * u);
  return x;
}

// --------------------------------------------- regularized incomplete gamma

// P(a, x) by power series, valid (and fast) for x < a + 1.
inline double gamma_p_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double del = sum;
  for (int i = 0; i < 500; ++i) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::fabs(del) < std::fabs(sum) * 1e-17)
      return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
  }
  throw std::runtime_error("gamma_p_series: no convergence");
}

// Q(a, x) by modified Lentz continued fraction, valid for x >= a + 1.
inline double gamma_q_cf(double a, double x) {
  const double tiny = 1e-300, eps = 1e-16;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 500; ++i) {
    double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < eps)
      return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
  }
  throw std::runtime_error("gamma_q_cf: no convergence");
}

// Regularized lower incomplete gamma P(a, x).
inline double gamma_p(double a, double x) {
  if (!(a > 0.0) || x < 0.0) throw std::domain_error("gamma_p: bad arguments");
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) return gamma_p_series(a, x);
  return 1.0 - gamma_q_cf(a, x);
}

inline double gamma_q(double a, double x) {
  if (!(a > 0.0) || x < 0.0) throw std::domain_error("gamma_q: bad arguments");
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
  return gamma_q_cf(a, x);
}

// ----------------------------------------------------------- radial profile

// 1/c_n = 2^(n/2-1) Gamma(n/2); c_n r^(n-1) exp(-r^2/2) is d/dr of psi_n.
inline double c_n(int n) {
  if (n < 1) throw std::domain_error("c_n: n must be >= 1");
  return std::exp(-((0.5 * n - 1.0) * std::log(2.0) + std::lgamma(0.5 * n)));
}

// Gaussian measure of the centered ball of radius r in dimension n.
inline double psi_n(int n, double r) {
  if (r < 0.0) throw std::domain_error("psi_n: r must be >= 0");
  if (r == 0.0) return 0.0;
  return gamma_p(0.5 * n, 0.5 * r * r);
}

inline double psi_n_prime(int n, double r) {
  if (r <= 0.0) return (n == 1 && r == 0.0) ? c_n(1) : 0.0;
  return std::exp(std::log(c_n(n)) + (n - 1) * std::log(r) - 0.5 * r * r);
}

// Inverse of psi_n on [0, 1): safeguarded Newton with a bisection bracket.
inline double psi_n_inv(int n, double p) {
  if (p == 0.0) return 0.0;
  if (!(p > 0.0 && p < 1.0))
    throw std::domain_error("psi_n_inv: p must lie in [0,1)");
  double lo = 0.0, hi = 1.0;
  while (psi_n(n, hi) < p) {
    hi *= 2.0;
    if (hi > 64.0) throw std::runtime_error("psi_n_inv: bracket failure");
  }
  // Initial guess: small-r leading order for tiny p, midpoint otherwise.
  double r = std::pow(p * n / c_n(n), 1.0 / n);
  if (!(r > lo && r < hi)) r = 0.5 * (lo + hi);
  for (int it = 0; it < 128; ++it) {
    double f = psi_n(n, r) - p;
    if (f > 0.0)
      hi = r;
    else
      lo = r;
    double dpdr = psi_n_prime(n, r);
    double step = (dpdr > 0.0) ? f / dpdr : 0.0;
    double rn = r - step;
    if (!(rn > lo && rn < hi)) rn = 0.5 * (lo + hi);
    if (std::fabs(rn - r) <= 1e-15 * (1.0 + r)) return rn;
    r = rn;
  }
  return r;
}

// ------------------------------------------------------- convexity margin

// margin_n(r) = 1 - c_n r^n exp(-r^2/2) / (n psi_n(r)).
//
// This quantity is the normalized curvature bound for y -> sigma_n(y^n) and
// also equals (second moment of the ball of radius r) / (n psi_n(r)).  It
// vanishes like r^2/(n+2) at zero, so for small r it is computed from two
// power series sharing the expansion of the radial integral; that avoids the
// catastrophic cancellation of the direct formula.
inline double pow_convexity_margin(int n, double r) {
  if (r < 0.0) throw std::domain_error("pow_convexity_margin: r >= 0");
  if (r == 0.0) return 0.0;
  if (r < 1.0) {
    // S = n psi / (c_n r^n) = sum_k (-r^2/2)^k n/(k! (n+2k)),
    // T = S - exp(-r^2/2) = sum_{k>=1} (-1)^(k+1) (r^2/2)^k 2k/(k! (n+2k)).
    double z = 0.5 * r * r;
    double S = 0.0, T = 0.0;
    double zk = 1.0;  // z^k / k!
    for (int k = 0; k <= 40; ++k) {
      double sgn = (k % 2 == 0) ? 1.0 : -1.0;
      S += sgn * zk * n / double(n + 2 * k);
      if (k >= 1) T += -sgn * zk * 2.0 * k / double(n + 2 * k);
      zk *= z / double(k + 1);
      if (k > 3 && zk < 1e-20) break;
    }
    return T / S;
  }
  double ratio = std::exp(std::log(c_n(n)) + n * std::log(r) - 0.5 * r * r) /
                 (n * psi_n(n, r));
  return 1.0 - ratio;
}

// Second moment of the centered ball: integral of |x|^2 over the ball of
// radius rho against the standard Gaussian, unnormalized.  Equals
// n psi_n(rho) - c_n rho^n exp(-rho^2/2) = n psi_n(rho) * margin_n(rho).
inline double ball_second_moment(int n, double rho) {
  if (rho < 0.0) throw std::domain_error("ball_second_moment: rho >= 0");
  if (rho == 0.0) return 0.0;
  return n * psi_n(n, rho) * pow_convexity_margin(n, rho);
}

// ------------------------------------------------------------- quadrature

// Gauss-Legendre nodes/weights on [-1, 1] by Newton iteration.
inline void gauss_legendre(int m, std::vector<double>& x,
                           std::vector<double>& w) {
  x.assign(m, 0.0);
  w.assign(m, 0.0);
  int half = (m + 1) / 2;
  for (int i = 0; i < half; ++i) {
    double z = std::cos(kPi * (i + 0.75) / (m + 0.5));
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 0; j < m; ++j) {
        double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * z * p1 - j * p2) / (j + 1.0);
      }
      pp = m * (z * p0 - p1) / (z * z - 1.0);
      double dz = p0 / pp;
      z -= dz;
      if (std::fabs(dz) < 1e-15) break;
    }
    x[i] = -z;
    x[m - 1 - i] = z;
    w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
    w[m - 1 - i] = w[i];
  }
}

// Finite-difference weights on arbitrary nodes (Fornberg's recursion).
// Returns weights so that sum_j w[j] f(xs[j]) approximates f^(order)(x0).
inline std::vector<double> fd_weights(double x0, const std::vector<double>& xs,
                                      int order) {
  int nn = int(xs.size());
  std::vector<std::vector<double>> c(nn, std::vector<double>(order + 1, 0.0));
  double c1 = 1.0, c4 = xs[0] - x0;
  c[0][0] = 1.0;
  for (int i = 1; i < nn; ++i) {
    int mn = std::min(i, order);
    double c2 = 1.0, c5 = c4;
    c4 = xs[i] - x0;
    for (int j = 0; j < i; ++j) {
      double c3 = xs[i] - xs[j];
      c2 *= c3;
      if (j == i - 1) {
        for (int k = mn; k >= 1; --k)
          c[i][k] = c1 * (k * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
        c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
      }
      for (int k = mn; k >= 1; --k)
        c[j][k] = (c4 * c[j][k] - k * c[j][k - 1]) / c3;
      c[j][0] = c4 * c[j][0] / c3;
    }
    c1 = c2;
  }
  std::vector<double> w(nn);
  for (int i = 0; i < nn; ++i) w[i] = c[i][order];
  return w;
}

}  // namespace gbm
