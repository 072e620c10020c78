#pragma once

// Gaussian measure and second moments of bodies: closed forms wherever the
// simplified body admits one, low-dimensional quadrature for ellipsoids, and
// seeded Monte Carlo with binomial error bars otherwise.  Estimates are pure
// functions of (body, samples, seed); worker count never changes the bits.

#include "gbm/bodies.hpp"
#include "gbm/math.hpp"
#include "gbm/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace gbm {

// SamplingBudget {samples, seed} comes from rng.hpp.

enum class MeasureMethod { kExactClosedForm, kQuadrature1d, kMonteCarlo };

inline const char* method_name(MeasureMethod m) {
  switch (m) {
    case MeasureMethod::kExactClosedForm: return "exact-closed-form";
    case MeasureMethod::kQuadrature1d: return "quadrature-1d";
    case MeasureMethod::kMonteCarlo: return "monte-carlo";
  }
  return "?";
}

struct MeasureEstimate {
  double value = 0.0;
  double std_error = 0.0;
  MeasureMethod method = MeasureMethod::kExactClosedForm;
  int64_t samples = 0;             // 0 unless Monte Carlo
  std::optional<uint64_t> seed;    // engaged only for Monte Carlo
};

struct GaussConstants {
  int n;
  double c_n;
};

inline GaussConstants gauss_constants(int n) { return {n, c_n(n)}; }

namespace detail {

inline double ellipsoid_radial_from_unit(const std::vector<double>& ax,
                                         const double* u, int n) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    double t = u[i] / ax[i];
    s += t * t;
  }
  return 1.0 / std::sqrt(s);
}

// Mean of psi_2 over uniformly spaced polar angles; spectrally accurate for
// the smooth ellipse radial profile.
inline double ellipse_measure_polar(const std::vector<double>& ax, int nodes) {
  double sum = 0.0;
  for (int i = 0; i < nodes; ++i) {
    double th = 2.0 * kPi * i / nodes;
    double u[2] = {std::cos(th), std::sin(th)};
    sum += psi_n(2, ellipsoid_radial_from_unit(ax, u, 2));
  }
  return sum / nodes;
}

// Uniform spherical average of psi_3(radial): Gauss-Legendre in the polar
// cosine times a periodic trapezoid in azimuth.
inline double ellipsoid_measure_sphere(const std::vector<double>& ax, int nz,
                                       int nphi) {
  std::vector<double> z, w;
  gauss_legendre(nz, z, w);
  double sum = 0.0;
  for (int i = 0; i < nz; ++i) {
    double rr = std::sqrt(std::max(0.0, 1.0 - z[i] * z[i]));
    double inner = 0.0;
    for (int j = 0; j < nphi; ++j) {
      double ph = 2.0 * kPi * j / nphi;
      double u[3] = {rr * std::cos(ph), rr * std::sin(ph), z[i]};
      inner += psi_n(3, ellipsoid_radial_from_unit(ax, u, 3));
    }
    sum += w[i] * inner / nphi;
  }
  return sum / 2.0;  // Legendre weights integrate to 2 over [-1, 1]
}

inline std::optional<MeasureEstimate> measure_closed_form(const Body& s) {
  MeasureEstimate e;
  switch (s.kind()) {
    case BodyKind::kBall:
      e.value = psi_n(s.dim(), s.radius());
      return e;
    case BodyKind::kBox: {
      double p = 1.0;
      for (double a : s.half_widths()) p *= 2.0 * phi(a) - 1.0;
      e.value = p;
      return e;
    }
    case BodyKind::kHalfspacePair:
      e.value = phi(s.offset());
      return e;
    case BodyKind::kSlab:
      // Axis interval times a Gaussian disc in the perpendicular slice.
      e.value = (2.0 * phi(s.slab_half_width()) - 1.0) *
                psi_n(s.dim() - 1, s.radial_cap());
      return e;
    case BodyKind::kEllipsoid: {
      const auto& ax = s.semi_axes();
      if (s.dim() == 1) {
        e.value = 2.0 * phi(ax[0]) - 1.0;
        return e;
      }
      if (s.dim() == 2) {
        double v = ellipse_measure_polar(ax, 2048);
        double v2 = ellipse_measure_polar(ax, 1024);
        e.value = v;
        e.std_error = std::fabs(v - v2);
        e.method = MeasureMethod::kQuadrature1d;
        return e;
      }
      if (s.dim() == 3) {
        double v = ellipsoid_measure_sphere(ax, 64, 128);
        double v2 = ellipsoid_measure_sphere(ax, 32, 64);
        e.value = v;
        e.std_error = std::fabs(v - v2);
        e.method = MeasureMethod::kQuadrature1d;
        return e;
      }
      return std::nullopt;
    }
    default:
      return std::nullopt;
  }
}

inline void require_budget(const SamplingBudget& budget, const Body& b) {
  if (budget.samples <= 0)
    throw std::invalid_argument(
        std::string("measure: body of kind ") + kind_name(b.kind()) +
        " has no closed form; a positive sampling budget is required");
}

inline void require_hits(double hits) {
  if (hits < 100.0)
    throw std::runtime_error(
        "measure: fewer than 100 Monte Carlo hits (p*N = " +
        std::to_string(hits) + "); the estimate would be unreliable");
}

struct McMoments {
  double n, p, m2, m4;  // sample count, hit rate, |x|^2 moments over 1_K
};

inline McMoments mc_moments(const Body& b, const SamplingBudget& budget) {
  auto sums = mc_accumulate(budget.seed, budget.samples, b.dim(), 3,
                            [&](const double* x, double* acc) {
                              if (!b.contains_raw(x)) return;
                              double r2 = dot(x, x, b.dim());
                              acc[0] += 1.0;
                              acc[1] += r2;
                              acc[2] += r2 * r2;
                            });
  require_hits(sums[0]);
  double n = double(budget.samples);
  return {n, sums[0] / n, sums[1] / n, sums[2] / n};
}

}  // namespace detail

// Gaussian measure of a body.  Closed form / quadrature when the simplified
// body admits one, Monte Carlo with std_error = sqrt(p(1-p)/N) otherwise.
inline MeasureEstimate measure(const BodyPtr& body,
                               const SamplingBudget& budget = {}) {
  BodyPtr s = simplify(body);
  if (auto m = detail::measure_closed_form(*s)) return *m;
  detail::require_budget(budget, *body);
  const Body& b = *body;
  auto sums = mc_accumulate(budget.seed, budget.samples, b.dim(), 1,
                            [&](const double* x, double* acc) {
                              if (b.contains_raw(x)) acc[0] += 1.0;
                            });
  detail::require_hits(sums[0]);
  double n = double(budget.samples);
  double p = sums[0] / n;
  MeasureEstimate e;
  e.value = p;
  e.std_error = std::sqrt(std::max(0.0, p * (1.0 - p) / n));
  e.method = MeasureMethod::kMonteCarlo;
  e.samples = budget.samples;
  e.seed = budget.seed;
  return e;
}

// Unnormalized second moment \int_K |x|^2 dgamma_n.
inline MeasureEstimate second_moment(const BodyPtr& body,
                                     const SamplingBudget& budget = {}) {
  BodyPtr s = simplify(body);
  if (s->kind() == BodyKind::kBall) {
    MeasureEstimate e;
    e.value = ball_second_moment(s->dim(), s->radius());
    return e;
  }
  detail::require_budget(budget, *body);
  auto m = detail::mc_moments(*body, budget);
  MeasureEstimate e;
  e.value = m.m2;
  e.std_error = std::sqrt(std::max(0.0, (m.m4 - m.m2 * m.m2) / m.n));
  e.method = MeasureMethod::kMonteCarlo;
  e.samples = budget.samples;
  e.seed = budget.seed;
  return e;
}

// Second moment of the normalized restriction gamma_K: the ratio
// second_moment / measure, with a delta-method error bar.
inline MeasureEstimate normalized_second_moment(const BodyPtr& body,
                                                const SamplingBudget& budget = {}) {
  BodyPtr s = simplify(body);
  if (s->kind() == BodyKind::kBall) {
    MeasureEstimate e;
    e.value = ball_second_moment(s->dim(), s->radius()) /
              psi_n(s->dim(), s->radius());
    return e;
  }
  detail::require_budget(budget, *body);
  auto m = detail::mc_moments(*body, budget);
  // Delta method for g(p, m) = m/p with per-sample moments of (1_K, |x|^2 1_K):
  // Var(1_K) = p(1-p), Var(|x|^2 1_K) = m4 - m2^2, Cov = m2(1 - p).
  double gp = -m.m2 / (m.p * m.p);
  double gm = 1.0 / m.p;
  double var = gm * gm * (m.m4 - m.m2 * m.m2) + gp * gp * m.p * (1.0 - m.p) +
               2.0 * gm * gp * m.m2 * (1.0 - m.p);
  MeasureEstimate e;
  e.value = m.m2 / m.p;
  e.std_error = std::sqrt(std::max(0.0, var / m.n));
  e.method = MeasureMethod::kMonteCarlo;
  e.samples = budget.samples;
  e.seed = budget.seed;
  return e;
}

struct XiPoint {
  double r = 0.0;
  MeasureEstimate estimate;
};

// Dilation profile r -> gamma_n(rM) on an ascending grid.  Exact bodies are
// evaluated per grid point through the closed forms; Monte Carlo bodies share
// one sample stream across the whole grid (common random numbers): each point
// is binned by the smallest dilation that contains it, which agrees with per
// grid point counting because M is star-shaped.
inline std::vector<XiPoint> xi_profile(const BodyPtr& M,
                                       const std::vector<double>& r_grid,
                                       const SamplingBudget& budget = {}) {
  if (!M->is_star_shaped())
    throw std::invalid_argument("xi_profile: body must be star-shaped");
  std::vector<double> grid = r_grid;
  std::sort(grid.begin(), grid.end());
  if (!grid.empty() && !(grid.front() > 0.0))
    throw std::invalid_argument("xi_profile: grid values must be positive");
  int g = int(grid.size());
  std::vector<XiPoint> out(grid.size());
  if (g == 0) return out;

  BodyPtr s = simplify(M);
  bool exact = detail::measure_closed_form(*s).has_value();
  if (exact) {
    for (int i = 0; i < g; ++i) {
      out[i].r = grid[i];
      out[i].estimate = *detail::measure_closed_form(*detail::scale_body(grid[i], s));
    }
    return out;
  }

  detail::require_budget(budget, *M);
  const Body& b = *M;
  int dim = b.dim();
  auto sums = mc_accumulate(
      budget.seed, budget.samples, dim, g + 1,
      [&](const double* x, double* acc) {
        // x lies in r*M iff M contains x/r, and membership along the ray is
        // monotone in r for a star-shaped body, so binary-search the first
        // grid dilation that contains x.  acc slot g counts "outside all".
        thread_local std::vector<double> y;
        y.resize(size_t(dim));
        auto inside_at = [&](int idx) {
          for (int d = 0; d < dim; ++d) y[size_t(d)] = x[d] / grid[size_t(idx)];
          return b.contains_raw(y.data());
        };
        if (!inside_at(g - 1)) {
          acc[g] += 1.0;
          return;
        }
        int lo = 0, hi = g - 1;
        while (lo < hi) {
          int mid = (lo + hi) / 2;
          if (inside_at(mid)) hi = mid; else lo = mid + 1;
        }
        acc[lo] += 1.0;
      });
  double n = double(budget.samples);
  double cum = 0.0;
  for (int i = 0; i < g; ++i) {
    cum += sums[i];
    double p = cum / n;
    out[i].r = grid[i];
    out[i].estimate.value = p;
    out[i].estimate.std_error = std::sqrt(std::max(0.0, p * (1.0 - p) / n));
    out[i].estimate.method = MeasureMethod::kMonteCarlo;
    out[i].estimate.samples = budget.samples;
    out[i].estimate.seed = budget.seed;
  }
  return out;
}

}  // namespace gbm
