// Tests for sigma.hpp.  The central oracle is independent of the builder:
// finite differences of the tabulated columns must reproduce the defining
// relation at every node, and for n = 1 a direct quadrature (built on
// std::erf, not on this library's special functions) must reproduce the
// whole table.

#include "gbm/sigma.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>
#include <vector>

using namespace gbm;

namespace {

// Five-point Fornberg derivative of tabulated values at node i.
double fd_deriv(const std::vector<double>& xs, const std::vector<double>& fs,
                size_t i) {
  size_t lo = i >= 2 ? i - 2 : 0;
  if (lo + 5 > xs.size()) lo = xs.size() - 5;
  std::vector<double> pts(xs.begin() + lo, xs.begin() + lo + 5);
  auto w = fd_weights(xs[i], pts, 1);
  double d = 0.0;
  for (size_t k = 0; k < 5; ++k) d += w[k] * fs[lo + k];
  return d;
}

template <class F>
double integrate_gl(F&& f, double a, double b, int panels = 8,
                    int nodes = 64) {
  static std::vector<double> x, w;
  if (int(x.size()) != nodes) gauss_legendre(nodes, x, w);
  double total = 0.0;
  for (int p = 0; p < panels; ++p) {
    double lo = a + (b - a) * p / panels, hi = a + (b - a) * (p + 1) / panels;
    double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
    for (int i = 0; i < nodes; ++i) total += w[i] * half * f(mid + half * x[i]);
  }
  return total;
}

// One-dimensional pieces built from std::erf only.
double psi1(double r) { return std::erf(r / kSqrt2); }
double psi1_prime(double r) {
  return std::sqrt(2.0 / kPi) * std::exp(-0.5 * r * r);
}
double a1(double r) { return 1.0 - r * psi1_prime(r) / psi1(r); }

// log sigma'(psi_1(r)) by quadrature of the defining relation from r = 1.
double log_slope_oracle_1d(double r) {
  return integrate_gl([](double s) { return a1(s) * psi1_prime(s) / psi1(s); },
                      1.0, r);
}

double sigma_oracle_1d(double r) {
  return integrate_gl(
      [](double s) { return std::exp(log_slope_oracle_1d(s)) * psi1_prime(s); },
      1.0, r);
}

size_t nearest_node(const SigmaTable& t, double r) {
  size_t best = 0;
  for (size_t i = 1; i < t.r_grid.size(); ++i)
    if (std::fabs(t.r_grid[i] - r) < std::fabs(t.r_grid[best] - r)) best = i;
  return best;
}

}  // namespace

TEST(Table, StructureAndNormalization) {
  for (int n : {1, 2, 3, 4}) {
    auto t = build_sigma(n);
    size_t m = t.r_grid.size();
    ASSERT_GE(m, 3000u);
    ASSERT_EQ(t.psi.size(), m);
    ASSERT_EQ(t.sigma.size(), m);
    ASSERT_EQ(t.sigma_prime.size(), m);
    EXPECT_DOUBLE_EQ(t.r_grid.front(), 1e-3);
    EXPECT_DOUBLE_EQ(t.r_grid.back(), 6.0);

    for (size_t i = 1; i < m; ++i) {
      ASSERT_LT(t.r_grid[i - 1], t.r_grid[i]);
      ASSERT_LT(t.sigma[i - 1], t.sigma[i]) << "n=" << n << " node " << i;
    }
    for (size_t i = 0; i < m; ++i) {
      ASSERT_GT(t.sigma_prime[i], 0.0);
      ASSERT_EQ(t.psi[i], psi_n(n, t.r_grid[i]));
    }

    EXPECT_EQ(t.r_grid[t.anchor_index], 1.0);
    EXPECT_EQ(t.sigma[t.anchor_index], 0.0);
    EXPECT_EQ(t.sigma_prime[t.anchor_index], 1.0);
    EXPECT_EQ(t.normalization.anchor_r, 1.0);
    EXPECT_EQ(t.normalization.sigma_value, 0.0);
    EXPECT_EQ(t.normalization.sigma_slope, 1.0);
  }
}

TEST(Table, DefiningRelationHoldsAtAllNodes) {
  for (int n : {1, 2, 3}) {
    auto t = build_sigma(n);
    size_t m = t.r_grid.size();

    // The log-slope combination whose derivative the equation pins down.
    // Differencing the stored columns and comparing against the analytic
    // right-hand side is the non-circular residual: any drift the
    // integrator committed shows up here.
    std::vector<double> wcol(m), lcol(m);
    double pa = t.psi[t.anchor_index];
    for (size_t i = 0; i < m; ++i) {
      lcol[i] = std::log(t.sigma_prime[i]);
      wcol[i] = lcol[i] + (n - 1.0) / n * std::log(t.psi[i] / pa);
    }
    double worst = 0.0;
    for (size_t i = 0; i < m; ++i) {
      double mg = pow_convexity_margin(n, t.r_grid[i]);
      double rhs = mg * (1.0 - mg) / t.r_grid[i];
      worst = std::max(worst, std::fabs(fd_deriv(t.r_grid, wcol, i) - rhs));
    }
    EXPECT_LE(worst, 1e-8) << "n=" << n;

    // Raw form of the equation on the nodes where dividing by psi' is well
    // conditioned (the density underflows for large r, where the log form
    // above already covers the relation).
    double worst_raw = 0.0;
    for (size_t i = 0; i < m; ++i) {
      double r = t.r_grid[i];
      double dens = psi_n_prime(n, r);
      if (dens < 1e-3) continue;
      double curv = fd_deriv(t.r_grid, lcol, i) * t.psi[i] / dens;
      double rhs = 2.0 / n -
                   c_n(n) * std::pow(r, n) * std::exp(-0.5 * r * r) /
                       (double(n) * n * t.psi[i]);
      worst_raw = std::max(worst_raw, std::fabs(1.0 + curv - rhs));
    }
    EXPECT_LE(worst_raw, 1e-8) << "n=" << n;

    // Consistency of the sigma column with the slope column.
    double worst_s = 0.0;
    for (size_t i = 0; i < m; ++i) {
      double expect = t.sigma_prime[i] * psi_n_prime(n, t.r_grid[i]);
      double got = fd_deriv(t.r_grid, t.sigma, i);
      worst_s = std::max(worst_s,
                         std::fabs(got - expect) / (1.0 + std::fabs(expect)));
    }
    EXPECT_LE(worst_s, 1e-8) << "n=" << n;
  }
}

TEST(Table, SmallRadiusCurvatureLimit) {
  for (int n : {2, 3, 5}) {
    auto t = build_sigma(n);
    std::vector<double> lcol(t.r_grid.size());
    for (size_t i = 0; i < lcol.size(); ++i)
      lcol[i] = std::log(t.sigma_prime[i]);
    for (size_t i = 0; i < 5; ++i) {
      double a_fd = fd_deriv(t.r_grid, lcol, i) * t.psi[i] /
                    psi_n_prime(n, t.r_grid[i]);
      EXPECT_NEAR(a_fd, -(n - 1.0) / n, 1e-3) << "n=" << n << " node " << i;
    }
  }
}

TEST(Table, OneDimensionalQuadratureOracle) {
  auto t = build_sigma(1);
  for (double r : {0.01, 0.1, 0.5, 2.0, 3.0, 5.0}) {
    size_t i = nearest_node(t, r);
    double rr = t.r_grid[i];
    double slope = std::exp(log_slope_oracle_1d(rr));
    EXPECT_NEAR(t.sigma_prime[i] / slope, 1.0, 1e-9) << "r=" << rr;
    EXPECT_NEAR(t.sigma[i], sigma_oracle_1d(rr), 1e-8) << "r=" << rr;
  }

  // The table is not the logarithm: against the affine-matched log (value 0
  // and slope 1 at the anchor), the deviation is macroscopic.
  size_t i3 = nearest_node(t, 3.0);
  double pa = t.psi[t.anchor_index];
  double log_normalized = pa * std::log(t.psi[i3] / pa);
  EXPECT_GE(std::fabs(t.sigma[i3] - log_normalized), 0.01);
}

TEST(Eval, InterpolationIsMonotoneAndAccurate) {
  auto t = build_sigma(2);
  size_t m = t.psi.size();
  for (size_t i = 0; i < m; i += 97) {
    EXPECT_EQ(sigma_eval(t, t.psi[i]), t.sigma[i]);
    EXPECT_NEAR(sigma_prime_eval(t, t.psi[i]), t.sigma_prime[i],
                1e-12 * t.sigma_prime[i]);
  }

  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(t.psi.front(), t.psi.back());
  for (int k = 0; k < 2000; ++k) {
    double y1 = u(rng), y2 = u(rng);
    if (y1 > y2) std::swap(y1, y2);
    if (y1 == y2) continue;
    EXPECT_LT(sigma_eval(t, y1), sigma_eval(t, y2));
    EXPECT_GT(sigma_prime_eval(t, y1), 0.0);
  }

  // Clamping beyond the tabulated range.
  EXPECT_EQ(sigma_eval(t, 1e-12), t.sigma.front());
  EXPECT_EQ(sigma_eval(t, 1.0), t.sigma.back());

  auto fine = build_sigma(2, 6.0, 8192);
  for (int k = 0; k < 300; ++k) {
    double y = u(rng);
    EXPECT_NEAR(sigma_eval(t, y), sigma_eval(fine, y), 1e-8);
  }
}

TEST(Eval, TauIsIncreasingAndConcave) {
  for (int n : {2, 3}) {
    auto t = build_sigma(n);
    size_t m = t.sigma.size();
    double xlo = t.sigma[m / 20], xhi = t.sigma[m - 1 - m / 20];
    double h = (xhi - xlo) / 256.0;
    double prev = tau_eval(t, xlo);
    for (int k = 1; k <= 256; ++k) {
      double x = xlo + k * h;
      double cur = tau_eval(t, x);
      EXPECT_GT(cur, prev);
      if (k >= 2) {
        double before = tau_eval(t, x - 2.0 * h);
        double dd = (cur - 2.0 * prev + before) / (h * h);
        EXPECT_LE(dd, 1e-9) << "n=" << n << " x=" << x;
      }
      prev = cur;
    }

    // Round trip through the same cubic.
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(t.psi[m / 20],
                                             t.psi[m - 1 - m / 20]);
    for (int k = 0; k < 200; ++k) {
      double y = u(rng);
      double tau = tau_eval(t, sigma_eval(t, y));
      EXPECT_NEAR(std::pow(tau, n), y, 1e-12 * y + 1e-14);
    }
    EXPECT_NEAR(tau_eval(t, 0.0), std::pow(t.psi[t.anchor_index], 1.0 / n),
                1e-12);
  }
}

TEST(Certificate, PowerConvexityHolds) {
  for (int n : {1, 2, 3, 4}) {
    auto t = build_sigma(n);
    auto cert = certify_pow_convexity(t);
    EXPECT_TRUE(cert.pass) << "n=" << n;
    EXPECT_GT(cert.min_margin, 0.0);
    EXPECT_GT(cert.interior_min_margin, 1e-3);
    EXPECT_GE(cert.min_second_difference, -1e-9);
    ASSERT_EQ(cert.margins.size(), t.r_grid.size());

    // Direct formula cross-check away from the cancellation region.
    for (size_t i = 0; i < t.r_grid.size(); i += 211) {
      double r = t.r_grid[i];
      if (r < 0.5) continue;
      double direct =
          1.0 - c_n(n) * std::pow(r, n) * std::exp(-0.5 * r * r) /
                    (double(n) * psi_n(n, r));
      EXPECT_NEAR(cert.margins[i], direct, 1e-12);
    }
  }
}

TEST(Refinement, DoublingNodesIsStable) {
  for (int n : {2, 3}) {
    auto coarse = build_sigma(n, 6.0, 2048);
    auto fine = build_sigma(n, 6.0, 4096);
    double lo = std::max(coarse.psi.front(), fine.psi.front());
    double hi = std::min(coarse.psi.back(), fine.psi.back());
    double pad = 0.05 * (hi - lo);
    double worst = 0.0;
    for (int k = 0; k <= 400; ++k) {
      double y = lo + pad + (hi - lo - 2.0 * pad) * k / 400.0;
      worst = std::max(worst,
                       std::fabs(sigma_eval(coarse, y) - sigma_eval(fine, y)));
    }
    EXPECT_LE(worst, 1e-6) << "n=" << n;
  }
}

TEST(Refinement, DominanceChain) {
  // Whenever the table value at a blend dominates the blended table values,
  // the n-th roots of the probabilities blend the same way: this is the
  // concavity chain that lets the sigma comparison strengthen the 1/n one.
  for (int n : {2, 3}) {
    auto t = build_sigma(n);
    size_t m = t.psi.size();
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> uy(t.psi[m / 20],
                                              t.psi[m - 1 - m / 20]);
    std::uniform_real_distribution<double> ul(0.05, 0.95);
    for (int k = 0; k < 300; ++k) {
      double p = uy(rng), q = uy(rng), lam = ul(rng);
      double x = lam * sigma_eval(t, p) + (1.0 - lam) * sigma_eval(t, q);
      double lhs = tau_eval(t, x);
      double rhs = lam * std::pow(p, 1.0 / n) +
                   (1.0 - lam) * std::pow(q, 1.0 / n);
      EXPECT_GE(lhs, rhs - 1e-9);
    }
  }
}

TEST(Build, ValidationAndSaturation) {
  EXPECT_THROW(build_sigma(0), std::invalid_argument);
  EXPECT_THROW(build_sigma(65), std::invalid_argument);
  EXPECT_THROW(build_sigma(2, 2.9), std::invalid_argument);
  EXPECT_THROW(build_sigma(2, 8.1), std::invalid_argument);
  EXPECT_THROW(build_sigma(2, 6.0, 999), std::invalid_argument);

  // In one dimension the tail underflows the increment resolution before
  // r = 8; the grid must stop there instead of emitting tied sigma values.
  auto t1 = build_sigma(1, 8.0);
  EXPECT_LT(t1.r_grid.back(), 7.8);
  EXPECT_GT(t1.r_grid.back(), 6.5);

  auto t4 = build_sigma(4, 8.0);
  EXPECT_DOUBLE_EQ(t4.r_grid.back(), 8.0);

  // A sixty-four dimensional table exercises the extreme slope scales.
  EXPECT_NO_THROW(build_sigma(64, 3.0, 1000));
}

TEST(Export, CsvRoundTrip) {
  auto t = build_sigma(2, 3.0, 1000);
  std::ostringstream out;
  sigma_to_csv(t, out);
  std::istringstream in(out.str());
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "r,psi,sigma,sigma_prime");
  size_t rows = 0;
  std::string line;
  double r, p, s, sp;
  char comma;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    ls >> r >> comma >> p >> comma >> s >> comma >> sp;
    ASSERT_FALSE(ls.fail());
    if (rows == 0) {
      EXPECT_EQ(r, t.r_grid[0]);
      EXPECT_EQ(p, t.psi[0]);
      EXPECT_EQ(s, t.sigma[0]);
      EXPECT_EQ(sp, t.sigma_prime[0]);
    }
    ++rows;
  }
  EXPECT_EQ(rows, t.r_grid.size());
}

int main(int argc, char** argv) {
  ::testing::InitGoogleTest(&argc, argv);
  return RUN_ALL_TESTS();
}
