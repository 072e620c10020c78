#include "gbm/math.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

namespace {

using namespace gbm;

// Composite Gauss-Legendre quadrature, the independent oracle used below.
double integrate(double a, double b, int panels, int order,
                 const std::function<double(double)>& f) {
  std::vector<double> x, w;
  gauss_legendre(order, x, w);
  double total = 0.0;
  for (int p = 0; p < panels; ++p) {
    double lo = a + (b - a) * p / panels;
    double hi = a + (b - a) * (p + 1) / panels;
    double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
    for (int i = 0; i < order; ++i) total += w[i] * half * f(mid + half * x[i]);
  }
  return total;
}

TEST(Phi, MatchesQuadratureOracle) {
  for (double t : {-2.0, -0.5, 0.0, 0.3, 1.0, 2.5}) {
    double oracle =
        integrate(-10.0, t, 200, 16, [](double s) { return normal_pdf(s); });
    EXPECT_NEAR(phi(t), oracle, 1e-13) << "t=" << t;
  }
  EXPECT_NEAR(phi(1.0), 0.8413447460685429, 1e-15);
  EXPECT_NEAR(phi(-0.5), 0.3085375387259869, 1e-15);
}

TEST(Phi, InverseRoundTrip) {
  // Log-spaced probes of both tails; driving p itself toward 1 in the loop
  // condition would stall one ulp short of it.
  std::vector<double> ps;
  for (double p = 1e-8; p < 0.5; p *= 1.9) ps.push_back(p);
  for (double d = 0.5; d > 1e-13; d /= 1.9) ps.push_back(1.0 - d);
  for (double p : ps) {
    double x = phi_inv(p);
    EXPECT_NEAR(phi(x), p, 1e-12) << "p=" << p;
  }
  for (double x : {-6.0, -1.0, 0.0, 0.5, 3.0, 6.0}) {
    // One ulp of p = phi(x) moves the preimage by ulp(p)/pdf(x); in the upper
    // tail that dominates any algorithmic error and bounds what is achievable.
    double pv = phi(x);
    double cond = (std::nextafter(pv, 2.0) - pv) / normal_pdf(x);
    EXPECT_NEAR(phi_inv(pv), x, 1e-9 * (1.0 + std::fabs(x)) + 4.0 * cond);
  }
  EXPECT_NEAR(phi_inv(0.5), 0.0, 1e-15);
}

TEST(GammaP, MatchesQuadratureOracle) {
  // Substituting t = u^2 removes the t^(a-1) endpoint singularity: the
  // integrand becomes 2 u^(2a-1) exp(-u^2), smooth for every a in the grid.
  for (double a : {0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 5.0}) {
    for (double x : {0.1, 0.3, 0.5, 1.0, 2.5, 7.0, 15.0}) {
      double oracle = integrate(0.0, std::sqrt(x), 400, 16, [a](double u) {
                        return 2.0 * std::pow(u, 2.0 * a - 1.0) *
                               std::exp(-u * u);
                      }) /
                      std::tgamma(a);
      EXPECT_NEAR(gamma_p(a, x), oracle, 2e-12) << "a=" << a << " x=" << x;
    }
  }
}

TEST(GammaP, FrozenValuesAndIdentities) {
  EXPECT_NEAR(gamma_p(1.5, 0.5), 0.1987480430987992, 1e-15);
  EXPECT_NEAR(gamma_p(0.5, 0.3), 0.5614219739190001, 1e-15);
  EXPECT_NEAR(gamma_p(3.0, 7.0), 0.9703638361194782, 1e-15);
  EXPECT_NEAR(gamma_p(2.5, 2.5), 0.5841198130044921, 1e-15);
  // P(1, x) = 1 - exp(-x) exactly.
  for (double x : {0.01, 0.5, 1.0, 3.0, 10.0})
    EXPECT_NEAR(gamma_p(1.0, x), -std::expm1(-x), 1e-14);
  for (double x : {0.2, 1.0, 4.0})
    EXPECT_NEAR(gamma_p(2.0, x) + gamma_q(2.0, x), 1.0, 1e-14);
}

TEST(PsiN, LowDimensionalClosedForms) {
  for (double r : {0.1, 0.5, 1.0, 2.0, 3.5}) {
    EXPECT_NEAR(psi_n(1, r), 2.0 * phi(r) - 1.0, 1e-14);
    EXPECT_NEAR(psi_n(2, r), -std::expm1(-0.5 * r * r), 1e-14);
  }
  EXPECT_NEAR(psi_n(3, 1.0), 0.1987480430987992, 1e-15);
  EXPECT_NEAR(psi_n(6, 1.0), 0.0143876779669707, 1e-15);
}

TEST(PsiN, ConstantCn) {
  EXPECT_NEAR(c_n(1), std::sqrt(2.0 / kPi), 1e-15);
  EXPECT_NEAR(c_n(2), 1.0, 1e-15);
  EXPECT_NEAR(c_n(3), std::sqrt(2.0 / kPi), 1e-15);
  EXPECT_NEAR(c_n(4), 0.5, 1e-15);
  EXPECT_NEAR(c_n(5), 0.2659615202676218, 1e-15);
  EXPECT_NEAR(c_n(6), 0.125, 1e-15);
}

TEST(PsiN, DerivativeMatchesDifferenceQuotient) {
  for (int n : {1, 2, 3, 4, 6}) {
    for (double r : {0.3, 1.0, 2.2}) {
      double h = 1e-6;
      double fd = (psi_n(n, r + h) - psi_n(n, r - h)) / (2.0 * h);
      EXPECT_NEAR(psi_n_prime(n, r), fd, 1e-8) << "n=" << n << " r=" << r;
    }
  }
}

TEST(PsiN, InverseRoundTrip) {
  for (int n : {1, 2, 3, 4, 5, 6, 10}) {
    for (double p : {1e-8, 1e-4, 0.01, 0.2, 0.5, 0.9, 0.999, 1.0 - 1e-9}) {
      double r = psi_n_inv(n, p);
      EXPECT_NEAR(psi_n(n, r), p, 1e-10) << "n=" << n << " p=" << p;
    }
  }
}

TEST(Margin, SeriesAgreesWithDirectFormula) {
  for (int n : {1, 2, 3, 4, 5, 6}) {
    for (double r : {0.5, 0.8, 0.999, 1.0, 1.001, 1.5}) {
      double direct = 1.0 - std::exp(std::log(c_n(n)) + n * std::log(r) -
                                     0.5 * r * r) /
                                (n * psi_n(n, r));
      EXPECT_NEAR(pow_convexity_margin(n, r), direct, 1e-11)
          << "n=" << n << " r=" << r;
    }
  }
}

TEST(Margin, PositiveWithSmallRAsymptote) {
  for (int n : {1, 2, 3, 4, 5, 6}) {
    double prev = 0.0;
    for (double r = 1e-6; r < 8.0; r *= 1.7) {
      double m = pow_convexity_margin(n, r);
      EXPECT_GT(m, 0.0) << "n=" << n << " r=" << r;
      EXPECT_LT(m, 1.0 + 1e-15);
      EXPECT_GT(m, prev) << "margin should increase in r";
      prev = m;
    }
    double r = 1e-3;
    EXPECT_NEAR(pow_convexity_margin(n, r) / (r * r / (n + 2)), 1.0, 1e-4);
  }
}

TEST(BallSecondMoment, FrozenValuesAndOracle) {
  EXPECT_NEAR(ball_second_moment(2, 1.0), 0.1804080208620997, 1e-14);
  EXPECT_NEAR(ball_second_moment(3, 1.5), 0.5592546606490569, 1e-14);
  EXPECT_NEAR(ball_second_moment(1, 0.7), 0.0789171888403882, 1e-14);
  // Polar quadrature oracle in n = 2: integral of r^2 * r e^{-r^2/2} dr.
  for (double rho : {0.4, 1.0, 2.3}) {
    double oracle = integrate(0.0, rho, 200, 16, [](double r) {
      return r * r * r * std::exp(-0.5 * r * r);
    });
    EXPECT_NEAR(ball_second_moment(2, rho), oracle, 1e-13);
  }
  // Whole-space limit is n.
  for (int n : {1, 2, 3, 5}) EXPECT_NEAR(ball_second_moment(n, 40.0), n, 1e-12);
}

TEST(GaussLegendre, IntegratesPolynomialsExactly) {
  std::vector<double> x, w;
  gauss_legendre(8, x, w);
  double s0 = 0.0, s4 = 0.0;
  for (int i = 0; i < 8; ++i) {
    s0 += w[i];
    s4 += w[i] * std::pow(x[i], 4);
  }
  EXPECT_NEAR(s0, 2.0, 1e-14);
  EXPECT_NEAR(s4, 0.4, 1e-14);
}

TEST(FdWeights, ExactOnPolynomials) {
  // Five weights reproduce derivatives of any quartic exactly; that is the
  // defining property of the Fornberg recursion.
  std::vector<double> xs = {0.1, 0.22, 0.3, 0.41, 0.5};
  auto p = [](double x) { return ((x - 2.0) * x * x + 1.0) * x - 3.0; };
  auto p1 = [](double x) { return (4.0 * x - 6.0) * x * x + 1.0; };
  auto p2 = [](double x) { return (12.0 * x - 12.0) * x; };
  for (int order : {1, 2}) {
    auto w = fd_weights(0.3, xs, order);
    double val = 0.0;
    for (size_t j = 0; j < xs.size(); ++j) val += w[j] * p(xs[j]);
    EXPECT_NEAR(val, order == 1 ? p1(0.3) : p2(0.3), 1e-10) << "order " << order;
  }
}

TEST(FdWeights, DifferentiatesSmoothFunctions) {
  // Nonuniform five-point stencil around 0.3; spacing ~0.01 keeps the
  // truncation error of the degree-4 fit well under the tolerance.
  std::vector<double> xs = {0.28, 0.292, 0.3, 0.311, 0.32};
  for (int order : {1, 2}) {
    auto w = fd_weights(0.3, xs, order);
    double val = 0.0;
    for (size_t j = 0; j < xs.size(); ++j) val += w[j] * std::exp(xs[j]);
    EXPECT_NEAR(val, std::exp(0.3), 1e-7) << "order " << order;
  }
}

}  // namespace
