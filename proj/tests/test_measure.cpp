// Tests for measure.hpp: closed-form anchors, quadrature vs independent
// reduction oracles, sampling vs exact product formulas on polytope
// realizations of boxes, and the dilation profile.

#include "gbm/measure.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <random>
#include <vector>

using namespace gbm;

namespace {

// A box realized as a symmetric polytope, so the measure dispatcher sees no
// closed form and must sample.
BodyPtr box_as_polytope(const std::vector<double>& hw) {
  int n = int(hw.size());
  int m = 1 << (n - 1);  // first coordinate pinned positive, rest mirrored
  std::vector<std::vector<double>> verts;
  for (int mask = 0; mask < m; ++mask) {
    std::vector<double> v(hw);
    for (int i = 1; i < n; ++i)
      if (mask & (1 << (i - 1))) v[i] = -v[i];
    verts.push_back(v);
  }
  return sym_polytope(n, verts);
}

double box_measure_exact(const std::vector<double>& hw) {
  double p = 1.0;
  for (double a : hw) p *= 2.0 * phi(a) - 1.0;
  return p;
}

// int_{-a}^{a} t^2 phi(t) dt = (2 Phi(a) - 1) - 2 a phi(a).
double axis_second_moment(double a) {
  return (2.0 * phi(a) - 1.0) - 2.0 * a * normal_pdf(a);
}

double box_second_moment_exact(const std::vector<double>& hw) {
  double total = 0.0;
  for (size_t i = 0; i < hw.size(); ++i) {
    double term = axis_second_moment(hw[i]);
    for (size_t j = 0; j < hw.size(); ++j)
      if (j != i) term *= 2.0 * phi(hw[j]) - 1.0;
    total += term;
  }
  return total;
}

double box_normalized_moment_exact(const std::vector<double>& hw) {
  double total = 0.0;
  for (double a : hw) total += axis_second_moment(a) / (2.0 * phi(a) - 1.0);
  return total;
}

// Independent reduction oracle for the plane: with x = a sin t the measure of
// the ellipse {x^2/a^2 + y^2/b^2 <= 1} is
//   int_{-pi/2}^{pi/2} a cos t phi(a sin t) (2 Phi(b cos t) - 1) dt,
// a smooth integrand that Gauss-Legendre resolves to machine precision.
double ellipse_measure_oracle(double a, double b, int nodes = 160) {
  std::vector<double> x, w;
  gauss_legendre(nodes, x, w);
  double sum = 0.0;
  for (int i = 0; i < nodes; ++i) {
    double t = x[i] * kPi / 2.0;
    double c = std::cos(t);
    sum += w[i] * (kPi / 2.0) * a * c * normal_pdf(a * std::sin(t)) *
           (2.0 * phi(b * c) - 1.0);
  }
  return sum;
}

// Same idea one dimension up: slice along z, ellipse oracle per slice.
double ellipsoid3_measure_oracle(double a, double b, double c) {
  int nodes = 128;
  std::vector<double> x, w;
  gauss_legendre(nodes, x, w);
  double sum = 0.0;
  for (int i = 0; i < nodes; ++i) {
    double t = x[i] * kPi / 2.0;
    double cs = std::cos(t);
    double slice = ellipse_measure_oracle(a * cs, b * cs, 96);
    sum += w[i] * (kPi / 2.0) * c * cs * normal_pdf(c * std::sin(t)) * slice;
  }
  return sum;
}

void expect_exact_metadata(const MeasureEstimate& e) {
  EXPECT_EQ(e.method, MeasureMethod::kExactClosedForm);
  EXPECT_EQ(e.std_error, 0.0);
  EXPECT_EQ(e.samples, 0);
  EXPECT_FALSE(e.seed.has_value());
}

}  // namespace

TEST(Measure, ClosedFormAnchors) {
  auto unit_square = measure(box({1.0, 1.0}));
  double phi1 = 2.0 * phi(1.0) - 1.0;
  EXPECT_DOUBLE_EQ(unit_square.value, phi1 * phi1);
  EXPECT_NEAR(unit_square.value, 0.4660649, 1e-7);
  expect_exact_metadata(unit_square);

  // The ball whose squared radius is 2 log 2 cuts the plane measure in half.
  auto half = measure(ball(2, std::sqrt(2.0 * std::log(2.0))));
  EXPECT_NEAR(half.value, 0.5, 1e-15);

  EXPECT_NEAR(measure(ball(3, 10.0)).value, 1.0, 1e-12);
  EXPECT_NEAR(measure(ball(1, 1.0)).value, 0.6826895, 1e-7);

  auto hs = measure(halfspace_pair(2, 0, 0.7));
  EXPECT_DOUBLE_EQ(hs.value, phi(0.7));
  expect_exact_metadata(hs);

  // A slab with a huge radial cap degenerates to its axis interval.
  EXPECT_NEAR(measure(slab(2, 0, 0.8, 8.0)).value, 2.0 * phi(0.8) - 1.0,
              1e-12);
  auto sl = measure(slab(3, 1, 0.6, 1.1));
  EXPECT_DOUBLE_EQ(sl.value, (2.0 * phi(0.6) - 1.0) * psi_n(2, 1.1));

  auto seg = measure(ellipsoid({1.3}));
  EXPECT_DOUBLE_EQ(seg.value, 2.0 * phi(1.3) - 1.0);
  expect_exact_metadata(seg);
}

TEST(Measure, SimplifierUnlocksClosedForms) {
  // Combinations that collapse structurally should never need a budget.
  auto blend = measure(minkowski_combine(0.4, ball(2, 1.0), ball(2, 2.0)));
  EXPECT_DOUBLE_EQ(blend.value, psi_n(2, 1.6));
  expect_exact_metadata(blend);

  auto same = measure(geometric_mean(0.5, box({0.9, 1.4}), box({0.9, 1.4})));
  EXPECT_DOUBLE_EQ(same.value, box_measure_exact({0.9, 1.4}));

  auto scaled = measure(dilate(2.0, ball(2, 0.75)));
  EXPECT_DOUBLE_EQ(scaled.value, psi_n(2, 1.5));
}

TEST(Measure, EllipsoidQuadratureMatchesOracles) {
  // Equal axes reduce the radial profile to a constant, so the quadrature
  // must reproduce the ball value essentially exactly.
  auto round2 = measure(ellipsoid({0.9, 0.9}));
  EXPECT_NEAR(round2.value, psi_n(2, 0.9), 1e-12);
  EXPECT_EQ(round2.method, MeasureMethod::kQuadrature1d);
  EXPECT_LE(round2.std_error, 1e-10);
  expect_exact_metadata(measure(ball(2, 0.9)));  // contrast: ball stays exact

  auto round3 = measure(ellipsoid({1.1, 1.1, 1.1}));
  EXPECT_NEAR(round3.value, psi_n(3, 1.1), 1e-12);

  struct Case2 { double a, b; };
  for (auto [a, b] : {Case2{1.3, 0.7}, Case2{0.5, 2.2}, Case2{1.0, 1.05}}) {
    auto est = measure(ellipsoid({a, b}));
    EXPECT_NEAR(est.value, ellipse_measure_oracle(a, b), 1e-10)
        << a << " " << b;
    EXPECT_EQ(est.samples, 0);
    EXPECT_FALSE(est.seed.has_value());
  }

  auto e3 = measure(ellipsoid({1.2, 0.9, 0.6}));
  EXPECT_NEAR(e3.value, ellipsoid3_measure_oracle(1.2, 0.9, 0.6), 1e-8);
  EXPECT_EQ(e3.method, MeasureMethod::kQuadrature1d);
}

TEST(Measure, SamplingMatchesClosedFormOnPolytopeRealizations) {
  std::mt19937_64 rng(20260819);
  std::uniform_real_distribution<double> width(0.5, 1.6);
  struct Plan { int n; int trials; int64_t samples; };
  for (auto [n, trials, samples] :
       {Plan{2, 24, 60000}, Plan{3, 13, 40000}, Plan{4, 13, 40000}}) {
    for (int t = 0; t < trials; ++t) {
      std::vector<double> hw(n);
      for (double& a : hw) a = width(rng);
      auto est = measure(box_as_polytope(hw), {samples, rng()});
      double exact = box_measure_exact(hw);
      EXPECT_EQ(est.method, MeasureMethod::kMonteCarlo);
      EXPECT_GT(est.std_error, 0.0);
      EXPECT_LE(est.std_error, std::sqrt(0.25 / double(samples)));
      EXPECT_NEAR(est.value, exact, 4.0 * est.std_error)
          << "n=" << n << " trial " << t;
    }
  }
}

TEST(Measure, SamplingIsDeterministicAcrossWorkers) {
  auto body = box_as_polytope({1.1, 0.8});
  SamplingBudget budget{50000, 42};
  auto a = measure(body, budget);
  auto b = measure(body, budget);
  EXPECT_EQ(a.value, b.value);
  EXPECT_EQ(a.std_error, b.std_error);

  setenv("GBM_WORKERS", "1", 1);
  auto serial = measure(body, budget);
  setenv("GBM_WORKERS", "5", 1);
  auto parallel = measure(body, budget);
  unsetenv("GBM_WORKERS");
  EXPECT_EQ(serial.value, parallel.value);
  EXPECT_EQ(serial.std_error, parallel.std_error);

  EXPECT_EQ(a.method, MeasureMethod::kMonteCarlo);
  EXPECT_STREQ(method_name(a.method), "monte-carlo");
  EXPECT_EQ(a.samples, 50000);
  ASSERT_TRUE(a.seed.has_value());
  EXPECT_EQ(*a.seed, 42u);
  EXPECT_GE(a.value, 0.0);
  EXPECT_LE(a.value, 1.0);
}

TEST(Measure, CommonSeedPreservesInclusionOrder) {
  // With a shared sample stream every hit of the smaller body is a hit of
  // the larger one, so the estimates are ordered deterministically.
  auto small = box_as_polytope({0.9, 1.2});
  SamplingBudget budget{40000, 1234};
  double p_small = measure(small, budget).value;
  double p_dilated = measure(dilate(1.15, small), budget).value;
  EXPECT_LE(p_small, p_dilated);

  auto larger = box_as_polytope({1.17, 1.56});
  EXPECT_LE(p_small, measure(larger, budget).value);

  // Exact closed forms are monotone under dilation as well.
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> width(0.3, 1.8);
  for (int t = 0; t < 40; ++t) {
    BodyPtr k;
    switch (t % 4) {
      case 0: k = ball(3, width(rng)); break;
      case 1: k = box({width(rng), width(rng)}); break;
      case 2: k = ellipsoid({width(rng), width(rng)}); break;
      default: k = slab(3, 0, width(rng), width(rng) + 0.2); break;
    }
    EXPECT_LE(measure(k).value, measure(dilate(1.07, k)).value + 1e-12);
  }
}

TEST(Measure, BudgetValidationAndLowHitRefusal) {
  auto p = box_as_polytope({1.0, 1.0});
  EXPECT_THROW(measure(p), std::invalid_argument);          // no budget
  EXPECT_THROW(measure(p, {-5, 1}), std::invalid_argument);  // bad count
  EXPECT_THROW(second_moment(p), std::invalid_argument);
  EXPECT_THROW(normalized_second_moment(p), std::invalid_argument);

  // A body this small yields essentially no hits; the estimate is refused
  // rather than reported with a meaningless error bar.
  auto tiny = box_as_polytope({0.001, 0.001});
  EXPECT_THROW(measure(tiny, {200000, 3}), std::runtime_error);

  // Closed forms never need a budget.
  EXPECT_NO_THROW(measure(ball(2, 1.0)));
  EXPECT_NO_THROW(second_moment(ball(2, 1.0)));
}

TEST(SecondMoment, RadialAnchors) {
  // int_{|x|<=1} |x|^2 dgamma_2 = 2 - 3 e^{-1/2} by direct integration.
  auto m = second_moment(ball(2, 1.0));
  EXPECT_NEAR(m.value, 2.0 - 3.0 * std::exp(-0.5), 1e-12);
  EXPECT_NEAR(m.value, 0.1804080, 1e-6);
  expect_exact_metadata(m);

  EXPECT_NEAR(second_moment(ball(3, 12.0)).value, 3.0, 1e-8);
  EXPECT_NEAR(normalized_second_moment(ball(2, 12.0)).value, 2.0, 1e-8);

  auto norm1 = normalized_second_moment(ball(2, 1.0));
  EXPECT_DOUBLE_EQ(norm1.value, ball_second_moment(2, 1.0) / psi_n(2, 1.0));
  expect_exact_metadata(norm1);

  // Structural collapse reaches the radial closed form too.
  auto collapsed = second_moment(minkowski_combine(0.3, ball(2, 2.0),
                                                   ball(2, 2.0)));
  EXPECT_DOUBLE_EQ(collapsed.value, ball_second_moment(2, 2.0));
}

TEST(SecondMoment, SamplingAgreesWithProductFormulaOnBoxes) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> width(0.6, 1.5);
  for (int n : {2, 3}) {
    for (int t = 0; t < 3; ++t) {
      std::vector<double> hw(static_cast<size_t>(n), 0.0);
      for (double& a : hw) a = width(rng);
      auto body = box_as_polytope(hw);
      SamplingBudget budget{60000, rng()};

      auto m = second_moment(body, budget);
      EXPECT_EQ(m.method, MeasureMethod::kMonteCarlo);
      EXPECT_NEAR(m.value, box_second_moment_exact(hw), 4.0 * m.std_error);

      auto nm = normalized_second_moment(body, budget);
      EXPECT_GT(nm.std_error, 0.0);
      EXPECT_NEAR(nm.value, box_normalized_moment_exact(hw),
                  4.0 * nm.std_error);
    }
  }
}

TEST(XiProfile, MatchesPerPointClosedForms) {
  auto m = ball(2, 0.8);
  std::vector<double> grid = {1.5, 0.5, 2.0, 1.0};  // deliberately unsorted
  auto prof = xi_profile(m, grid);
  ASSERT_EQ(prof.size(), 4u);
  double prev = -1.0;
  for (const auto& pt : prof) {
    EXPECT_GT(pt.r, prev);  // returned in ascending order
    prev = pt.r;
    EXPECT_EQ(pt.estimate.value, measure(dilate(pt.r, m)).value);
    EXPECT_EQ(pt.estimate.value, psi_n(2, 0.8 * pt.r));
    EXPECT_EQ(pt.estimate.std_error, 0.0);
  }

  auto prof_box = xi_profile(box({1.2, 0.7}), {0.5, 1.0, 2.0});
  for (const auto& pt : prof_box)
    EXPECT_DOUBLE_EQ(pt.estimate.value,
                     box_measure_exact({1.2 * pt.r, 0.7 * pt.r}));
}

TEST(XiProfile, SamplingProfileIsMonotoneAndMatchesDirectEstimates) {
  auto p = box_as_polytope({1.0, 0.9});
  std::vector<double> grid = {0.6, 0.9, 1.2, 1.8};
  SamplingBudget budget{50000, 7};
  auto prof = xi_profile(p, grid, budget);
  ASSERT_EQ(prof.size(), grid.size());

  double prev = 0.0;
  for (const auto& pt : prof) {
    EXPECT_GE(pt.estimate.value, prev);
    prev = pt.estimate.value;
    EXPECT_EQ(pt.estimate.method, MeasureMethod::kMonteCarlo);
    EXPECT_EQ(pt.estimate.samples, budget.samples);

    // Same seed, same sample stream: the direct estimate of the dilated body
    // counts the same hits, up to boundary-roundoff on at most a couple of
    // samples.
    auto direct = measure(dilate(pt.r, p), budget);
    EXPECT_NEAR(pt.estimate.value, direct.value,
                2.0 / double(budget.samples) + 1e-12);
  }

  EXPECT_THROW(xi_profile(p, grid), std::invalid_argument);  // no budget
  EXPECT_THROW(xi_profile(p, {0.0, 1.0}, budget), std::invalid_argument);
  EXPECT_THROW(xi_profile(halfspace_pair(2, 0, -0.5), grid, budget),
               std::invalid_argument);  // not star-shaped
}

TEST(Constants, DimensionalPrefactor) {
  auto g2 = gauss_constants(2);
  EXPECT_EQ(g2.n, 2);
  EXPECT_DOUBLE_EQ(g2.c_n, 1.0);           // 1 / (2^0 Gamma(1))
  EXPECT_DOUBLE_EQ(gauss_constants(4).c_n, 0.5);  // 1 / (2^1 Gamma(2))
  EXPECT_DOUBLE_EQ(gauss_constants(3).c_n, c_n(3));
}

int main(int argc, char** argv) {
  ::testing::InitGoogleTest(&argc, argv);
  return RUN_ALL_TESTS();
}
