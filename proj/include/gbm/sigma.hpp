#pragma once

// Tabulation of the dimensional comparison function sigma_n.
//
// sigma_n is defined (up to increasing affine maps) on probabilities y by
//
//   1 + sigma''(y) y / sigma'(y) = 2/n - c_n r^n e^{-r^2/2} / (n^2 y),
//   y = psi_n(r),
//
// which we integrate along the radial parameter.  Writing
// w(r) = log[sigma'(psi(r)) (psi(r)/psi(1))^{(n-1)/n}] turns the equation
// into w'(r) = margin(r) (1 - margin(r)) / r with
// margin(r) = 1 - c_n r^n e^{-r^2/2} / (n psi_n(r)), a form that is regular
// at r = 0 (w' ~ r/(n+2)) and stays conditioned where psi saturates.  The
// table integrates (w, sigma) with classical Runge-Kutta from the anchor
// r = 1 in both directions and fixes the normalization
// sigma(psi(1)) = 0, sigma'(psi(1)) = 1.

#include "gbm/math.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace gbm {

struct SigmaNormalization {
  double anchor_r = 1.0;
  double sigma_value = 0.0;
  double sigma_slope = 1.0;
};

struct SigmaTable {
  int n = 0;
  std::vector<double> r_grid;       // increasing radii
  std::vector<double> psi;          // psi_n(r) per node
  std::vector<double> sigma;        // sigma(psi(r)) per node
  std::vector<double> sigma_prime;  // sigma'(psi(r)) per node
  std::vector<double> tangent;      // d sigma / d psi used by the interpolant
  size_t anchor_index = 0;
  SigmaNormalization normalization;
};

namespace detail {

// w'(r); the two factors are the normalized second moment of the ball and
// its complement, so the product is regular at both ends of the range.
inline double sigma_w_rate(int n, double r) {
  double m = pow_convexity_margin(n, r);
  return m * (1.0 - m) / r;
}

// d/dr of (w, sigma) at radius r given w.
inline void sigma_derivs(int n, double psi_anchor, double r, double w,
                         double& dw, double& ds) {
  dw = sigma_w_rate(n, r);
  double sp = std::pow(psi_n(n, r) / psi_anchor, -(n - 1.0) / n) * std::exp(w);
  ds = sp * psi_n_prime(n, r);
}

inline void sigma_rk4_step(int n, double psi_anchor, double r0, double r1,
                           double& w, double& s) {
  double h = r1 - r0;
  double kw1, ks1, kw2, ks2, kw3, ks3, kw4, ks4;
  sigma_derivs(n, psi_anchor, r0, w, kw1, ks1);
  sigma_derivs(n, psi_anchor, r0 + 0.5 * h, w + 0.5 * h * kw1, kw2, ks2);
  sigma_derivs(n, psi_anchor, r0 + 0.5 * h, w + 0.5 * h * kw2, kw3, ks3);
  sigma_derivs(n, psi_anchor, r1, w + h * kw3, kw4, ks4);
  w += h / 6.0 * (kw1 + 2.0 * kw2 + 2.0 * kw3 + kw4);
  s += h / 6.0 * (ks1 + 2.0 * ks2 + 2.0 * ks3 + ks4);
}

// Hermite basis evaluation on one interval of the table.
inline double hermite_value(double y0, double y1, double f0, double f1,
                            double m0, double m1, double y) {
  double h = y1 - y0, t = (y - y0) / h;
  double t2 = t * t, t3 = t2 * t;
  return f0 * (2.0 * t3 - 3.0 * t2 + 1.0) + h * m0 * (t3 - 2.0 * t2 + t) +
         f1 * (-2.0 * t3 + 3.0 * t2) + h * m1 * (t3 - t2);
}

inline double hermite_slope(double y0, double y1, double f0, double f1,
                            double m0, double m1, double y) {
  double h = y1 - y0, t = (y - y0) / h;
  double t2 = t * t;
  return (f0 * (6.0 * t2 - 6.0 * t) + h * m0 * (3.0 * t2 - 4.0 * t + 1.0) +
          f1 * (-6.0 * t2 + 6.0 * t) + h * m1 * (3.0 * t2 - 2.0 * t)) / h;
}

inline size_t table_interval(const std::vector<double>& keys, double y) {
  // Largest i with keys[i] <= y, clamped to a valid interval start.
  size_t i = size_t(std::upper_bound(keys.begin(), keys.end(), y) -
                    keys.begin());
  if (i > 0) --i;
  return std::min(i, keys.size() - 2);
}

inline void warn_sigma_clamp(double y, double lo, double hi) {
  static std::atomic<bool> warned{false};
  if (!warned.exchange(true))
    std::fprintf(stderr,
                 "sigma table: query %.6g outside tabulated range "
                 "[%.6g, %.6g]; clamping (further clamps are silent)\n",
                 y, lo, hi);
}

}  // namespace detail

// Builds the table on a grid that is geometric on [1e-3, 0.5) to resolve the
// y^{1/n} cusp and uniform on [0.5, r_max], with r = 1 present exactly.  The
// uniform part stops early if the Gaussian tail drops below 3e-13: past that
// point psi saturates and sigma increments would fall below double
// resolution, producing spurious ties.
inline SigmaTable build_sigma(int n, double r_max = 6.0, int nodes = 4096) {
  if (n < 1 || n > 64)
    throw std::invalid_argument("build_sigma: n must lie in [1, 64]");
  if (!(r_max >= 3.0 && r_max <= 8.0))
    throw std::invalid_argument("build_sigma: r_max must lie in [3, 8]");
  if (nodes < 1000) throw std::invalid_argument("build_sigma: nodes >= 1000");

  SigmaTable t;
  t.n = n;
  const double r_min = 1e-3, r_split = 0.5;
  int n_geo = (2 * nodes) / 5;
  int n_uni = nodes - n_geo;
  for (int i = 0; i < n_geo; ++i)
    t.r_grid.push_back(r_min * std::pow(r_split / r_min, double(i) / n_geo));
  double h = (r_max - r_split) / (n_uni - 1);
  int snap = int(std::lround((1.0 - r_split) / h));
  for (int j = 0; j < n_uni; ++j) {
    double r = (j == snap) ? 1.0 : r_split + j * h;
    if (gamma_q(0.5 * n, 0.5 * r * r) < 3e-13 && r > 3.0) break;
    t.r_grid.push_back(r);
  }
  t.anchor_index = size_t(n_geo + snap);

  size_t m = t.r_grid.size();
  t.psi.resize(m);
  t.sigma.resize(m);
  t.sigma_prime.resize(m);
  for (size_t i = 0; i < m; ++i) t.psi[i] = psi_n(n, t.r_grid[i]);

  double psi_anchor = t.psi[t.anchor_index];
  auto record = [&](size_t i, double w, double s) {
    t.sigma[i] = s;
    t.sigma_prime[i] =
        std::pow(t.psi[i] / psi_anchor, -(n - 1.0) / n) * std::exp(w);
  };
  record(t.anchor_index, 0.0, 0.0);
  double w = 0.0, s = 0.0;
  for (size_t i = t.anchor_index; i + 1 < m; ++i) {
    detail::sigma_rk4_step(n, psi_anchor, t.r_grid[i], t.r_grid[i + 1], w, s);
    record(i + 1, w, s);
  }
  w = 0.0;
  s = 0.0;
  for (size_t i = t.anchor_index; i > 0; --i) {
    detail::sigma_rk4_step(n, psi_anchor, t.r_grid[i], t.r_grid[i - 1], w, s);
    record(i - 1, w, s);
  }

  for (size_t i = 0; i < m; ++i) {
    bool bad = !(t.sigma_prime[i] > 0.0) ||
               (i > 0 && !(t.sigma[i] > t.sigma[i - 1]));
    if (bad)
      throw std::runtime_error(
          "build_sigma: integration produced non-monotone output at node " +
          std::to_string(i) + " (r = " + std::to_string(t.r_grid[i]) +
          ", sigma = " + std::to_string(t.sigma[i]) +
          ", sigma' = " + std::to_string(t.sigma_prime[i]) + ")");
  }

  // Interpolation tangents are the exact slopes, limited where they would
  // break monotonicity of the cubic (inactive for this smooth data, kept as
  // a guard).
  t.tangent = t.sigma_prime;
  for (size_t i = 0; i + 1 < m; ++i) {
    double d = (t.sigma[i + 1] - t.sigma[i]) / (t.psi[i + 1] - t.psi[i]);
    double a = t.tangent[i] / d, b = t.tangent[i + 1] / d;
    double q = a * a + b * b;
    if (q > 9.0) {
      double sc = 3.0 / std::sqrt(q);
      t.tangent[i] *= sc;
      t.tangent[i + 1] *= sc;
    }
  }
  return t;
}

// Monotone cubic evaluation of sigma at probability y; queries outside the
// tabulated psi range clamp to the end values (one warning per process).
inline double sigma_eval(const SigmaTable& t, double y) {
  if (y <= t.psi.front() || y >= t.psi.back()) {
    if (y < t.psi.front() || y > t.psi.back())
      detail::warn_sigma_clamp(y, t.psi.front(), t.psi.back());
    return y <= t.psi.front() ? t.sigma.front() : t.sigma.back();
  }
  size_t i = detail::table_interval(t.psi, y);
  return detail::hermite_value(t.psi[i], t.psi[i + 1], t.sigma[i],
                               t.sigma[i + 1], t.tangent[i], t.tangent[i + 1],
                               y);
}

inline double sigma_prime_eval(const SigmaTable& t, double y) {
  if (y <= t.psi.front() || y >= t.psi.back()) {
    if (y < t.psi.front() || y > t.psi.back())
      detail::warn_sigma_clamp(y, t.psi.front(), t.psi.back());
    return y <= t.psi.front() ? t.tangent.front() : t.tangent.back();
  }
  size_t i = detail::table_interval(t.psi, y);
  return detail::hermite_slope(t.psi[i], t.psi[i + 1], t.sigma[i],
                               t.sigma[i + 1], t.tangent[i], t.tangent[i + 1],
                               y);
}

// tau(x) = sigma^{-1}(x)^{1/n}: invert the cubic on its bracketing interval
// (safeguarded Newton), then take the n-th root.
inline double tau_eval(const SigmaTable& t, double x) {
  if (x <= t.sigma.front())
    return std::pow(t.psi.front(), 1.0 / t.n);
  if (x >= t.sigma.back())
    return std::pow(t.psi.back(), 1.0 / t.n);
  size_t i = detail::table_interval(t.sigma, x);
  double lo = t.psi[i], hi = t.psi[i + 1], y = lo;
  double secant = (x - t.sigma[i]) / (t.sigma[i + 1] - t.sigma[i]);
  y = lo + secant * (hi - lo);
  for (int it = 0; it < 100; ++it) {
    double f = detail::hermite_value(t.psi[i], t.psi[i + 1], t.sigma[i],
                                     t.sigma[i + 1], t.tangent[i],
                                     t.tangent[i + 1], y) - x;
    if (f > 0.0) hi = y; else lo = y;
    double fp = detail::hermite_slope(t.psi[i], t.psi[i + 1], t.sigma[i],
                                      t.sigma[i + 1], t.tangent[i],
                                      t.tangent[i + 1], y);
    double step = fp > 0.0 ? f / fp : 0.0;
    double next = y - step;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::fabs(next - y) < 1e-16 * (1.0 + std::fabs(y))) {
      y = next;
      break;
    }
    y = next;
  }
  return std::pow(y, 1.0 / t.n);
}

// Certificate that y -> sigma(y^n) is convex: per node the analytic margin
// 1 - c_n r^n e^{-r^2/2} / (n psi) must be nonnegative (the equation makes
// this exactly the normalized curvature excess over the critical power law),
// and discrete second divided differences of sigma(y^n) over a spaced-out
// subset of nodes must clear a roundoff floor.  The subset enforces a
// minimum spacing in y because divided differences amplify rounding in
// sigma by 1/spacing^2.
struct ConvexityCertificate {
  bool pass = false;
  std::vector<double> margins;         // analytic margin per node
  double min_margin = 0.0;
  double argmin_r = 0.0;
  double interior_min_margin = 0.0;    // over r in [0.1, 3]
  double min_second_difference = 0.0;  // scaled like a second derivative
};

inline ConvexityCertificate certify_pow_convexity(const SigmaTable& t) {
  ConvexityCertificate c;
  size_t m = t.r_grid.size();
  c.margins.resize(m);
  c.min_margin = kInf;
  c.interior_min_margin = kInf;
  for (size_t i = 0; i < m; ++i) {
    double r = t.r_grid[i];
    c.margins[i] = pow_convexity_margin(t.n, r);
    if (c.margins[i] < c.min_margin) {
      c.min_margin = c.margins[i];
      c.argmin_r = r;
    }
    if (r >= 0.1 && r <= 3.0)
      c.interior_min_margin = std::min(c.interior_min_margin, c.margins[i]);
  }

  std::vector<double> ys, fs;
  double y_last = -1.0;
  for (size_t i = 0; i < m; ++i) {
    double y = std::pow(t.psi[i], 1.0 / t.n);
    if (y - y_last >= 2e-3) {
      ys.push_back(y);
      fs.push_back(t.sigma[i]);
      y_last = y;
    }
  }
  c.min_second_difference = kInf;
  for (size_t i = 1; i + 1 < ys.size(); ++i) {
    double d = 2.0 *
               ((fs[i + 1] - fs[i]) / (ys[i + 1] - ys[i]) -
                (fs[i] - fs[i - 1]) / (ys[i] - ys[i - 1])) /
               (ys[i + 1] - ys[i - 1]);
    c.min_second_difference = std::min(c.min_second_difference, d);
  }
  c.pass = c.min_margin >= 0.0 && c.min_second_difference >= -1e-9;
  return c;
}

inline void sigma_to_csv(const SigmaTable& t, std::ostream& out) {
  out << "r,psi,sigma,sigma_prime\n";
  char line[160];
  for (size_t i = 0; i < t.r_grid.size(); ++i) {
    std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g,%.17g\n", t.r_grid[i],
                  t.psi[i], t.sigma[i], t.sigma_prime[i]);
    out << line;
  }
}

}  // namespace gbm
