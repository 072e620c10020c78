#pragma once

// Statistical verification of the Gaussian convexity inequalities on concrete
// bodies.  Every operation estimates both sides of one inequality, propagates
// a standard error through the comparison map by the delta method, and grades
// the signed margin in sigma units:
//
//     holds         margin >= -3 sigma
//     violated      margin <= -5 sigma
//     inconclusive  in between
//
// The gap between the bands keeps borderline noise from flapping a verdict.
// Whenever both sides depend on sampled measures, the estimates come from one
// pass over a shared sample stream (common random numbers), so correlated
// noise cancels in the margin and self-comparisons are exactly tight.  Sides
// with closed forms enter with zero variance, and a margin whose combined
// error is zero is graded by sign alone, with a small floor absorbing closed
// form roundoff.
//
// The corpus machinery at the bottom generates, serializes and runs batches
// of named cases; results merge deterministically by case name and the
// writers emit byte-stable JSON lines and CSV.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "gbm/bodies.hpp"
#include "gbm/body_io.hpp"
#include "gbm/math.hpp"
#include "gbm/measure.hpp"
#include "gbm/rng.hpp"
#include "gbm/sigma.hpp"

namespace gbm {

enum class Verdict { kHolds, kViolated, kInconclusive };

inline const char* verdict_name(Verdict v) {
  switch (v) {
    case Verdict::kHolds: return "holds";
    case Verdict::kViolated: return "violated";
    case Verdict::kInconclusive: return "inconclusive";
  }
  return "?";
}

struct SideEstimate {
  double value = 0.0;
  double std_error = 0.0;
  bool exact = false;  // closed form, no sampling and no quadrature error
};

struct CheckResult {
  std::string name;   // case label
  std::string check;  // operation tag, e.g. "dim-bm"
  int dim = 0;
  double lambda = 0.0;
  double delta = 1.0;
  uint64_t seed = 0;
  int64_t samples = 0;
  SideEstimate lhs, rhs;
  double margin = 0.0;            // lhs - rhs; the inequality asserts >= 0
  double margin_std_error = 0.0;  // combined, after correlation cancellation
  double margin_sigmas = 0.0;     // +-inf when the margin is exact
  Verdict verdict = Verdict::kInconclusive;
  std::string note;
};

// One corpus entry.  A null L means L = K (the self-comparison case).
struct CheckCase {
  std::string name;
  BodyPtr K;
  BodyPtr L;
  double lambda = 0.5;
  double delta = 1.0;
  SamplingBudget budget;
};

namespace detail {

inline constexpr double kSigmaCap = 1e6;  // serialization cap for +-inf

// Sigma units of a margin.  A zero combined error means both sides are exact
// up to closed-form roundoff, so margins below the roundoff floor count as
// zero instead of producing a spurious infinite grade.
inline double margin_sigmas_of(double margin, double sigma, double scale) {
  if (sigma > 0.0) return margin / sigma;
  if (std::fabs(margin) <= 1e-13 * std::max(1.0, scale)) return 0.0;
  return margin > 0.0 ? kInf : -kInf;
}

inline Verdict verdict_of(double sigmas) {
  if (sigmas >= -3.0) return Verdict::kHolds;
  if (sigmas <= -5.0) return Verdict::kViolated;
  return Verdict::kInconclusive;
}

// lambda*a + (1-lambda)*b, collapsing identical operands so that
// self-comparisons stay exactly tight instead of picking up an ulp.
inline double combine_affine(double lambda, double a, double b) {
  if (a == b) return a;
  return lambda * a + (1.0 - lambda) * b;
}

inline double quad_form(const std::vector<std::vector<double>>& cov,
                        const std::vector<double>& g) {
  double v = 0.0;
  for (size_t i = 0; i < g.size(); ++i) {
    if (g[i] == 0.0) continue;
    for (size_t j = 0; j < g.size(); ++j) v += g[i] * cov[i][j] * g[j];
  }
  return std::max(0.0, v);
}

// Joint Gaussian measures of several same-dimension bodies.  Closed forms
// enter exactly (quadrature forms carry their reported error on the
// diagonal); the rest share one sample stream, which fills in the full
// covariance of the estimators.
struct JointMeasures {
  std::vector<double> value;
  std::vector<std::vector<double>> cov;
  std::vector<bool> exact;
  bool sampled = false;
  std::string note;
};

inline JointMeasures joint_measures(const std::vector<BodyPtr>& bodies,
                                    const SamplingBudget& budget) {
  const size_t m = bodies.size();
  if (m == 0 || m > 8) throw std::invalid_argument("joint_measures: 1..8 bodies");
  const int dim = bodies[0]->dim();
  for (const auto& b : bodies)
    if (b->dim() != dim)
      throw std::invalid_argument("joint_measures: dimension mismatch");

  JointMeasures jm;
  jm.value.assign(m, 0.0);
  jm.cov.assign(m, std::vector<double>(m, 0.0));
  jm.exact.assign(m, false);

  std::vector<int> slot(m, -1);
  std::vector<const Body*> sampled;
  for (size_t i = 0; i < m; ++i) {
    BodyPtr s = simplify(bodies[i]);
    if (auto cf = measure_closed_form(*s)) {
      jm.value[i] = cf->value;
      jm.cov[i][i] = cf->std_error * cf->std_error;
      jm.exact[i] = cf->std_error == 0.0;
    } else {
      slot[i] = int(sampled.size());
      sampled.push_back(bodies[i].get());
      if (bodies[i]->membership_approximate())
        jm.note = "outer membership approximation on a sampled body";
    }
  }
  if (sampled.empty()) return jm;

  jm.sampled = true;
  if (budget.samples <= 0)
    throw std::invalid_argument(
        "joint_measures: sampled bodies need a positive budget");
  const int k = int(sampled.size());
  const int n_acc = k + k * (k + 1) / 2;
  std::vector<double> sums = mc_accumulate(
      budget.seed, budget.samples, dim, n_acc,
      [&](const double* x, double* acc) {
        std::array<bool, 8> in;
        for (int j = 0; j < k; ++j) {
          in[size_t(j)] = sampled[size_t(j)]->contains_raw(x);
          if (in[size_t(j)]) acc[j] += 1.0;
        }
        int t = k;
        for (int a = 0; a < k; ++a)
          for (int b = a; b < k; ++b, ++t)
            if (in[size_t(a)] && in[size_t(b)]) acc[t] += 1.0;
      });
  const double N = double(budget.samples);
  std::vector<double> p(size_t(k), 0.0);
  for (int j = 0; j < k; ++j) {
    detail::require_hits(sums[size_t(j)]);
    p[size_t(j)] = sums[size_t(j)] / N;
  }
  int t = k;
  for (int a = 0; a < k; ++a)
    for (int b = a; b < k; ++b, ++t) {
      double pab = sums[size_t(t)] / N;
      double c = (pab - p[size_t(a)] * p[size_t(b)]) / N;
      // find the owning body indices
      int ia = -1, ib = -1;
      for (size_t i = 0; i < m; ++i) {
        if (slot[i] == a) ia = int(i);
        if (slot[i] == b) ib = int(i);
      }
      jm.cov[size_t(ia)][size_t(ib)] = c;
      jm.cov[size_t(ib)][size_t(ia)] = c;
    }
  for (size_t i = 0; i < m; ++i)
    if (slot[i] >= 0) jm.value[i] = p[size_t(slot[i])];
  return jm;
}

// Sample mean and covariance-of-the-mean for a per-sample statistic vector.
struct Moments {
  std::vector<double> mean;
  std::vector<std::vector<double>> cov;
  double samples = 0.0;
};

template <class F>
Moments joint_stats(uint64_t seed, int64_t samples, int dim, int k, F&& fill) {
  if (k < 1 || k > 8) throw std::invalid_argument("joint_stats: 1..8 stats");
  const int n_acc = k + k * (k + 1) / 2;
  std::vector<double> sums = mc_accumulate(
      seed, samples, dim, n_acc, [&](const double* x, double* acc) {
        double v[8] = {0, 0, 0, 0, 0, 0, 0, 0};  // per-call, threads share fn
        fill(x, v);
        for (int j = 0; j < k; ++j) acc[j] += v[j];
        int t = k;
        for (int a = 0; a < k; ++a)
          for (int b = a; b < k; ++b, ++t) acc[t] += v[a] * v[b];
      });
  Moments mo;
  mo.samples = double(samples);
  mo.mean.assign(size_t(k), 0.0);
  mo.cov.assign(size_t(k), std::vector<double>(size_t(k), 0.0));
  for (int j = 0; j < k; ++j) mo.mean[size_t(j)] = sums[size_t(j)] / mo.samples;
  int t = k;
  for (int a = 0; a < k; ++a)
    for (int b = a; b < k; ++b, ++t) {
      double second = sums[size_t(t)] / mo.samples;
      double c = (second - mo.mean[size_t(a)] * mo.mean[size_t(b)]) / mo.samples;
      mo.cov[size_t(a)][size_t(b)] = c;
      mo.cov[size_t(b)][size_t(a)] = c;
    }
  return mo;
}

inline CheckResult finish_result(std::string name, const char* check, int dim,
                                 double lambda, double delta,
                                 const SamplingBudget& budget, SideEstimate lhs,
                                 SideEstimate rhs, double margin_var,
                                 std::string note) {
  CheckResult r;
  r.name = std::move(name);
  r.check = check;
  r.dim = dim;
  r.lambda = lambda;
  r.delta = delta;
  r.seed = budget.seed;
  r.samples = budget.samples;
  r.lhs = lhs;
  r.rhs = rhs;
  r.margin = lhs.value - rhs.value;
  r.margin_std_error = std::sqrt(std::max(0.0, margin_var));
  r.margin_sigmas = margin_sigmas_of(
      r.margin, r.margin_std_error,
      std::fabs(lhs.value) + std::fabs(rhs.value));
  r.verdict = verdict_of(r.margin_sigmas);
  r.note = std::move(note);
  return r;
}

inline void require_case(const CheckCase& c) {
  if (!c.K) throw std::invalid_argument("check: case has no body K");
  if (!(c.lambda > 0.0 && c.lambda < 1.0))
    throw std::invalid_argument("check: lambda must lie in (0,1)");
  if (!(c.delta > 0.0))
    throw std::invalid_argument("check: exponent must be positive");
  if (c.L && c.L->dim() != c.K->dim())
    throw std::invalid_argument("check: K and L dimensions differ");
}

// Shared skeleton for the three-body combination checks: computes the joint
// measures of (lambda K + (1-lambda) L, K, L) and hands the transform of each
// side to the caller as (value, d/dp) pairs.
struct ComboMeasures {
  JointMeasures jm;
  int dim = 0;
  double pa = 0.0, pk = 0.0, pl = 0.0;
  BodyPtr A;
};

inline ComboMeasures combo_measures(const CheckCase& c) {
  require_case(c);
  ComboMeasures cm;
  BodyPtr L = c.L ? c.L : c.K;
  cm.dim = c.K->dim();
  cm.A = minkowski_combine(c.lambda, c.K, L);
  cm.jm = joint_measures({cm.A, c.K, L}, c.budget);
  cm.pa = cm.jm.value[0];
  cm.pk = cm.jm.value[1];
  cm.pl = cm.jm.value[2];
  return cm;
}

// Grades lhs = f(gamma A) against rhs = lambda f(gamma K) + (1-lambda)
// f(gamma L) for a smooth increasing f, reusing a measurement pass shared by
// every transform of the same case.
template <class F, class Fp>
CheckResult transform_combo(const CheckCase& c, const ComboMeasures& cm,
                            const char* tag, F f, Fp fp, double delta_echo,
                            std::string extra_note) {
  double la = f(cm.pa), lk = f(cm.pk), ll = f(cm.pl);
  SideEstimate lhs{la, 0.0, cm.jm.exact[0]};
  SideEstimate rhs{combine_affine(c.lambda, lk, ll),
                   0.0, cm.jm.exact[1] && cm.jm.exact[2]};
  std::vector<double> gl = {fp(cm.pa), 0.0, 0.0};
  std::vector<double> gr = {0.0, c.lambda * fp(cm.pk),
                            (1.0 - c.lambda) * fp(cm.pl)};
  lhs.std_error = std::sqrt(quad_form(cm.jm.cov, gl));
  rhs.std_error = std::sqrt(quad_form(cm.jm.cov, gr));
  std::vector<double> gm = {gl[0] - gr[0], gl[1] - gr[1], gl[2] - gr[2]};
  std::string note = std::move(extra_note);
  if (!cm.jm.note.empty()) note += (note.empty() ? "" : "; ") + cm.jm.note;
  return finish_result(c.name, tag, cm.dim, c.lambda, delta_echo, c.budget,
                       lhs, rhs, quad_form(cm.jm.cov, gm), std::move(note));
}

inline CheckResult dim_bm_from(const CheckCase& c, const ComboMeasures& cm) {
  double e = c.delta / cm.dim;
  std::string note;
  if (c.delta != 1.0) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "exponent %.6g/n", c.delta);
    note = buf;
  }
  return transform_combo(
      c, cm, "dim-bm", [e](double x) { return std::pow(x, e); },
      [e](double x) { return e * std::pow(x, e - 1.0); }, c.delta,
      std::move(note));
}

}  // namespace detail

// gamma(lambda K + (1-lambda) L)^{delta/n} >= lambda gamma(K)^{delta/n} +
// (1-lambda) gamma(L)^{delta/n}; the theorem is delta = 1 and larger
// exponents are expected to fail on tiny boxes.
inline CheckResult check_dim_bm(const CheckCase& c) {
  return detail::dim_bm_from(c, detail::combo_measures(c));
}

// Scans dilate pairs (a Q, 2a Q) of the unit box under the inflated exponent
// delta/n and returns the smallest violating pair.  Box measures are products
// of one-dimensional normal CDFs, so the arithmetic is exact and a negative
// margin grades as -inf sigmas.
inline CheckResult check_exponent_optimality(int n, double delta) {
  if (n < 1 || n > 64)
    throw std::invalid_argument("check_exponent_optimality: dimension");
  if (!(delta > 1.0))
    throw std::invalid_argument(
        "check_exponent_optimality: needs an exponent above the theorem");
  const double lambda = 0.5;
  const double e = delta / n;
  auto box_at = [&](double a) {
    return measure(box(std::vector<double>(size_t(n), a))).value;
  };
  for (double a : {0.01, 0.02, 0.04, 0.08, 0.16, 0.32}) {
    double b = 2.0 * a;
    double pa = box_at(detail::combine_affine(lambda, a, b));
    double pk = box_at(a), pl = box_at(b);
    SideEstimate lhs{std::pow(pa, e), 0.0, true};
    SideEstimate rhs{lambda * std::pow(pk, e) + (1.0 - lambda) * std::pow(pl, e),
                     0.0, true};
    if (lhs.value < rhs.value) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "unit box dilates a=%.4g, b=%.4g", a, b);
      CheckResult r = detail::finish_result(
          buf, "exponent-optimality", n, lambda, delta, SamplingBudget{},
          lhs, rhs, 0.0, "closed-form box measures");
      return r;
    }
  }
  // No violation in the scanned range: report the smallest pair as evidence.
  double a = 0.01, b = 0.02;
  double pa = box_at(detail::combine_affine(lambda, a, b));
  SideEstimate lhs{std::pow(pa, e), 0.0, true};
  SideEstimate rhs{lambda * std::pow(box_at(a), e) +
                       (1.0 - lambda) * std::pow(box_at(b), e),
                   0.0, true};
  return detail::finish_result("unit box dilates a=0.01, b=0.02",
                               "exponent-optimality", n, lambda, delta,
                               SamplingBudget{}, lhs, rhs, 0.0,
                               "no violation found in scan");
}

namespace detail {

inline CheckResult ehrhard_from(const CheckCase& c, const ComboMeasures& cm) {
  return transform_combo(
      c, cm, "ehrhard", [](double x) { return phi_inv(x); },
      [](double x) { return 1.0 / normal_pdf(phi_inv(x)); }, 1.0, "");
}

inline CheckResult log_concavity_from(const CheckCase& c,
                                      const ComboMeasures& cm) {
  double rhs_v = cm.pk == cm.pl
                     ? cm.pk
                     : std::pow(cm.pk, c.lambda) * std::pow(cm.pl, 1.0 - c.lambda);
  SideEstimate lhs{cm.pa, 0.0, cm.jm.exact[0]};
  SideEstimate rhs{rhs_v, 0.0, cm.jm.exact[1] && cm.jm.exact[2]};
  std::vector<double> gl = {1.0, 0.0, 0.0};
  std::vector<double> gr = {0.0, c.lambda * rhs_v / cm.pk,
                            (1.0 - c.lambda) * rhs_v / cm.pl};
  lhs.std_error = std::sqrt(quad_form(cm.jm.cov, gl));
  rhs.std_error = std::sqrt(quad_form(cm.jm.cov, gr));
  std::vector<double> gm = {1.0, -gr[1], -gr[2]};
  return finish_result(c.name, "log-concavity", cm.dim, c.lambda, 1.0,
                       c.budget, lhs, rhs, quad_form(cm.jm.cov, gm),
                       cm.jm.note);
}

}  // namespace detail

// Phi^{-1}(gamma(lambda K + (1-lambda) L)) >= lambda Phi^{-1}(gamma K) +
// (1-lambda) Phi^{-1}(gamma L).  Tight on parallel halfspace pairs, whose
// measure convention here is the one-sided CDF.
inline CheckResult check_ehrhard(const CheckCase& c) {
  return detail::ehrhard_from(c, detail::combo_measures(c));
}

// gamma(lambda K + (1-lambda) L) >= gamma(K)^lambda gamma(L)^{1-lambda}.
inline CheckResult check_log_concavity(const CheckCase& c) {
  return detail::log_concavity_from(c, detail::combo_measures(c));
}

// The monotone-transform refinement and its implied power-map consequence on
// the same estimates.  The implication is a theorem whenever the table's
// convexity certificate passes, so chain_consistent is expected to hold for
// every case, noisy or not.
struct SigmaRefinementOutcome {
  CheckResult refinement;   // sigma(gamma combo) vs affine combination
  CheckResult power;        // n-th root comparison on the same estimates
  bool chain_consistent = false;
};

namespace detail {

// Absolute accuracy of the tabulated comparison function (integration plus
// interpolation); entering it in the error budget keeps near-tight exact
// cases from grading as infinitely-significant ulp noise.
inline constexpr double kSigmaTableEvalError = 1e-9;

inline double sigma_eval_error(double value) {
  return kSigmaTableEvalError * (1.0 + std::fabs(value));
}

inline SigmaRefinementOutcome sigma_refinement_from(const CheckCase& c,
                                                    const ComboMeasures& cm,
                                                    const SigmaTable& table) {
  if (table.n != cm.dim)
    throw std::invalid_argument(
        "check_sigma_refinement: table dimension does not match the case");
  SigmaRefinementOutcome out;
  {
    double la = sigma_eval(table, cm.pa);
    double lk = sigma_eval(table, cm.pk), ll = sigma_eval(table, cm.pl);
    double ea = sigma_eval_error(la);
    double ek = c.lambda * sigma_eval_error(lk);
    double el = (1.0 - c.lambda) * sigma_eval_error(ll);
    SideEstimate lhs{la, 0.0, false};
    SideEstimate rhs{combine_affine(c.lambda, lk, ll), 0.0, false};
    std::vector<double> gl = {sigma_prime_eval(table, cm.pa), 0.0, 0.0};
    std::vector<double> gr = {0.0, c.lambda * sigma_prime_eval(table, cm.pk),
                              (1.0 - c.lambda) * sigma_prime_eval(table, cm.pl)};
    lhs.std_error = std::sqrt(quad_form(cm.jm.cov, gl) + ea * ea);
    rhs.std_error = std::sqrt(quad_form(cm.jm.cov, gr) + ek * ek + el * el);
    std::vector<double> gm = {gl[0], -gr[1], -gr[2]};
    double var = quad_form(cm.jm.cov, gm) + ea * ea + ek * ek + el * el;
    out.refinement =
        finish_result(c.name, "sigma-refinement", cm.dim, c.lambda, 1.0,
                      c.budget, lhs, rhs, var, cm.jm.note);
  }
  {
    double e = 1.0 / cm.dim;
    double la = std::pow(cm.pa, e);
    double lk = std::pow(cm.pk, e), ll = std::pow(cm.pl, e);
    SideEstimate lhs{la, 0.0, cm.jm.exact[0]};
    SideEstimate rhs{combine_affine(c.lambda, lk, ll), 0.0,
                     cm.jm.exact[1] && cm.jm.exact[2]};
    std::vector<double> gl = {e * std::pow(cm.pa, e - 1.0), 0.0, 0.0};
    std::vector<double> gr = {0.0, c.lambda * e * std::pow(cm.pk, e - 1.0),
                              (1.0 - c.lambda) * e * std::pow(cm.pl, e - 1.0)};
    lhs.std_error = std::sqrt(quad_form(cm.jm.cov, gl));
    rhs.std_error = std::sqrt(quad_form(cm.jm.cov, gr));
    std::vector<double> gm = {gl[0], -gr[1], -gr[2]};
    out.power =
        finish_result(c.name, "sigma-chain-power", cm.dim, c.lambda, 1.0,
                      c.budget, lhs, rhs, quad_form(cm.jm.cov, gm), cm.jm.note);
  }
  double scale = std::fabs(out.power.lhs.value) + std::fabs(out.power.rhs.value);
  out.chain_consistent =
      out.refinement.margin < 0.0 || out.power.margin >= -1e-12 * scale;
  out.refinement.note += out.refinement.note.empty() ? "" : "; ";
  out.refinement.note += out.chain_consistent ? "chain ok" : "chain broken";
  return out;
}

}  // namespace detail

inline SigmaRefinementOutcome check_sigma_refinement(const CheckCase& c,
                                                     const SigmaTable& table) {
  return detail::sigma_refinement_from(c, detail::combo_measures(c), table);
}

// Margins of the combination inequality along L = (1-eps) K + eps Ball as the
// perturbation shrinks: they must stay nonnegative and decay to zero, which
// is the computable shadow of the equality case (margin zero forces L = K).
struct EqualityCaseReport {
  std::vector<double> eps;
  std::vector<CheckResult> results;
  bool margins_nonnegative = false;
  bool trend_decreasing = false;
  bool final_near_zero = false;
};

inline EqualityCaseReport check_equality_case(const BodyPtr& K, double lambda,
                                              std::vector<double> eps_list,
                                              const SamplingBudget& budget) {
  if (!K) throw std::invalid_argument("check_equality_case: null body");
  if (eps_list.empty())
    throw std::invalid_argument("check_equality_case: empty perturbation list");
  for (double e : eps_list)
    if (!(e >= 0.0 && e < 1.0))
      throw std::invalid_argument(
          "check_equality_case: perturbations must lie in [0,1)");
  std::sort(eps_list.begin(), eps_list.end(), std::greater<double>());

  EqualityCaseReport rep;
  rep.eps = eps_list;
  for (double e : eps_list) {
    CheckCase c;
    char buf[48];
    std::snprintf(buf, sizeof buf, "eps=%.6g", e);
    c.name = buf;
    c.K = K;
    c.L = e == 0.0 ? K : minkowski_combine(1.0 - e, K, ball(K->dim(), 1.0));
    c.lambda = lambda;
    c.budget = budget;
    rep.results.push_back(check_dim_bm(c));
  }
  rep.margins_nonnegative = true;
  for (const auto& r : rep.results)
    if (r.verdict != Verdict::kHolds) rep.margins_nonnegative = false;
  rep.trend_decreasing = true;
  for (size_t i = 0; i + 1 < rep.results.size(); ++i) {
    const auto& wide = rep.results[i];
    const auto& slim = rep.results[i + 1];
    double slack = 3.0 * (wide.margin_std_error + slim.margin_std_error) +
                   1e-12 * (1.0 + std::fabs(wide.margin));
    if (slim.margin > wide.margin + slack) rep.trend_decreasing = false;
  }
  const auto& last = rep.results.back();
  rep.final_near_zero =
      std::fabs(last.margin) <= 5.0 * last.margin_std_error +
                                    1e-10 * (1.0 + std::fabs(last.lhs.value));
  return rep;
}

// Second moment of K against the ball of equal measure: the ball concentrates
// mass innermost, so int_K |x|^2 dgamma >= int_{rho B} |x|^2 dgamma.
inline CheckResult check_ball_second_moment(const BodyPtr& K,
                                            const SamplingBudget& budget) {
  if (!K) throw std::invalid_argument("check_ball_second_moment: null body");
  const int n = K->dim();
  BodyPtr s = simplify(K);

  if (s->kind() == BodyKind::kBall) {
    double both = ball_second_moment(n, s->radius());
    SideEstimate side{both, 0.0, true};
    return detail::finish_result("", "ball-second-moment", n, 0.0, 1.0,
                                 SamplingBudget{}, side, side, 0.0,
                                 "equality case, closed forms");
  }

  auto cf = detail::measure_closed_form(*s);
  detail::Moments mo = detail::joint_stats(
      budget.seed, budget.samples, n, 2, [&](const double* x, double* v) {
        if (!K->contains_raw(x)) return;
        double r2 = 0.0;
        for (int i = 0; i < n; ++i) r2 += x[i] * x[i];
        v[0] = 1.0;
        v[1] = r2;
      });
  detail::require_hits(mo.mean[0] * mo.samples);

  double p = cf ? cf->value : mo.mean[0];
  double var_p = cf ? cf->std_error * cf->std_error : mo.cov[0][0];
  double cov_pm = cf ? 0.0 : mo.cov[0][1];
  double rho = psi_n_inv(n, p);

  SideEstimate lhs{mo.mean[1], std::sqrt(mo.cov[1][1]), false};
  SideEstimate rhs{ball_second_moment(n, rho),
                   rho * rho * std::sqrt(var_p), cf && cf->std_error == 0.0};
  // margin = m2 - B(psi^{-1}(p)); dB/dp = rho^2
  double var_margin = mo.cov[1][1] + rho * rho * rho * rho * var_p -
                      2.0 * rho * rho * cov_pm;
  std::string note = cf ? "measure by closed form, moment by sampling"
                        : "measure and moment share one sample stream";
  if (K->membership_approximate())
    note += "; outer membership approximation";
  return detail::finish_result("", "ball-second-moment", n, 0.0, 1.0, budget,
                               lhs, rhs, var_margin, std::move(note));
}

// gamma(t A) >= Psi_n(t rho) for t in [0,1], where gamma(A) = Psi_n(rho):
// shrinking any star-shaped set toward the origin keeps at least the mass
// that the matching ball keeps.
inline std::vector<CheckResult> check_dilate_lemma(const BodyPtr& A,
                                                   std::vector<double> t_grid,
                                                   const SamplingBudget& budget) {
  if (!A) throw std::invalid_argument("check_dilate_lemma: null body");
  if (t_grid.empty())
    throw std::invalid_argument("check_dilate_lemma: empty dilate grid");
  std::sort(t_grid.begin(), t_grid.end());
  t_grid.erase(std::unique(t_grid.begin(), t_grid.end()), t_grid.end());
  for (double t : t_grid)
    if (!(t >= 0.0 && t <= 1.0))
      throw std::invalid_argument("check_dilate_lemma: t must lie in [0,1]");

  const int n = A->dim();
  BodyPtr s = simplify(A);
  std::vector<CheckResult> out;
  auto name_of = [](double t) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "t=%.6g", t);
    return std::string(buf);
  };

  if (auto cf1 = detail::measure_closed_form(*s)) {
    bool is_ball = s->kind() == BodyKind::kBall;
    double rho = is_ball ? s->radius() : psi_n_inv(n, cf1->value);
    double drho = cf1->std_error > 0.0
                      ? cf1->std_error / psi_n_prime(n, rho)
                      : 0.0;
    for (double t : t_grid) {
      SideEstimate lhs, rhs;
      if (t == 0.0) {
        lhs = rhs = SideEstimate{0.0, 0.0, true};
      } else {
        auto cft = detail::measure_closed_form(*detail::scale_body(t, s));
        lhs = SideEstimate{cft->value, cft->std_error, cft->std_error == 0.0};
        rhs = SideEstimate{psi_n(n, t * rho),
                           psi_n_prime(n, t * rho) * t * drho, drho == 0.0};
      }
      double var = lhs.std_error * lhs.std_error +
                   rhs.std_error * rhs.std_error;
      out.push_back(detail::finish_result(name_of(t), "dilate-lemma", n, 0.0,
                                          1.0, SamplingBudget{}, lhs, rhs, var,
                                          "closed-form profile"));
    }
    return out;
  }

  // One sampling pass provides the whole dilate profile; covariances follow
  // from the nesting t A inside A.  A t = 0 entry is exact and stays out of
  // the sampled grid.
  std::vector<double> grid;
  for (double t : t_grid)
    if (t > 0.0) grid.push_back(t);
  if (grid.empty() || grid.back() != 1.0) grid.push_back(1.0);
  std::vector<XiPoint> prof = xi_profile(A, grid, budget);
  const double N = double(budget.samples);
  double p1 = prof.back().estimate.value;
  double se1 = prof.back().estimate.std_error;
  detail::require_hits(p1 * N);
  double rho = psi_n_inv(n, p1);
  double dpsi1 = psi_n_prime(n, rho);
  for (double t : t_grid) {
    SideEstimate lhs, rhs;
    double var;
    if (t == 0.0) {
      lhs = rhs = SideEstimate{0.0, 0.0, true};
      var = 0.0;
    } else {
      size_t i = size_t(std::find_if(prof.begin(), prof.end(),
                                     [&](const XiPoint& p) { return p.r == t; }) -
                        prof.begin());
      double pt = prof[i].estimate.value;
      lhs = SideEstimate{pt, prof[i].estimate.std_error, false};
      double slope = psi_n_prime(n, t * rho) * t / dpsi1;
      rhs = SideEstimate{psi_n(n, t * rho), slope * se1, false};
      double var_t = pt * (1.0 - pt) / N;
      double var_1 = p1 * (1.0 - p1) / N;
      double cov = pt * (1.0 - p1) / N;  // t A nested inside A
      var = var_t + slope * slope * var_1 - 2.0 * slope * cov;
    }
    out.push_back(detail::finish_result(name_of(t), "dilate-lemma", n, 0.0, 1.0,
                                        budget, lhs, rhs, var,
                                        "sampled profile, one stream"));
  }
  return out;
}

// Planar chain comparison: the radial gauge of the Minkowski combination
// dominates the best product split of the factor gauges, and the direct
// geometric-mean inequality on the same measures.  The mean body's membership
// is an outer approximation, so a positive direct margin carries one-sided
// bias and is flagged in the note.
struct GeomeanChainOutcome {
  CheckResult chain;
  CheckResult direct;
};

inline GeomeanChainOutcome check_geomean_chain(const BodyPtr& K,
                                               const BodyPtr& L, double lambda,
                                               std::vector<double> p_grid,
                                               const SamplingBudget& budget) {
  if (!K || !L) throw std::invalid_argument("check_geomean_chain: null body");
  if (K->dim() != 2 || L->dim() != 2)
    throw std::invalid_argument(
        "check_geomean_chain: the product hypothesis is only known in the "
        "plane; pass planar bodies");
  if (!(lambda > 0.0 && lambda < 1.0))
    throw std::invalid_argument("check_geomean_chain: lambda in (0,1)");
  p_grid.push_back(lambda);
  std::sort(p_grid.begin(), p_grid.end());
  p_grid.erase(std::unique(p_grid.begin(), p_grid.end()), p_grid.end());
  for (double p : p_grid)
    if (!(p >= 0.0 && p <= 1.0))
      throw std::invalid_argument("check_geomean_chain: p grid in [0,1]");

  BodyPtr A = minkowski_combine(lambda, K, L);
  BodyPtr G = geometric_mean(lambda, K, L);
  detail::JointMeasures jm = detail::joint_measures({A, K, L, G}, budget);
  double pa = jm.value[0], pk = jm.value[1], pl = jm.value[2], pg = jm.value[3];

  GeomeanChainOutcome out;
  {
    double best = -kInf, best_p = lambda, best_m = 0.0, best_t = 1.0;
    for (double p : p_grid) {
      double t = std::pow(lambda / p, p) *
                 std::pow((1.0 - lambda) / (1.0 - p), 1.0 - p);
      double m = std::pow(pk, p) * std::pow(pl, 1.0 - p);
      double v = t * psi_n_inv(2, m);
      if (v > best) {
        best = v;
        best_p = p;
        best_m = m;
        best_t = t;
      }
    }
    double ya = psi_n_inv(2, pa);
    double yb = psi_n_inv(2, best_m);
    SideEstimate lhs{ya, 0.0, jm.exact[0]};
    SideEstimate rhs{best, 0.0, jm.exact[1] && jm.exact[2]};
    std::vector<double> gl = {1.0 / psi_n_prime(2, ya), 0.0, 0.0, 0.0};
    double common = best_t / psi_n_prime(2, yb);
    std::vector<double> gr = {0.0, common * best_p * best_m / pk,
                              common * (1.0 - best_p) * best_m / pl, 0.0};
    lhs.std_error = std::sqrt(detail::quad_form(jm.cov, gl));
    rhs.std_error = std::sqrt(detail::quad_form(jm.cov, gr));
    std::vector<double> gm = {gl[0], -gr[1], -gr[2], 0.0};
    char buf[64];
    std::snprintf(buf, sizeof buf, "sup over %zu exponents, argmax p=%.4g",
                  p_grid.size(), best_p);
    out.chain = detail::finish_result("", "geomean-chain", 2, lambda, 1.0,
                                      budget, lhs, rhs,
                                      detail::quad_form(jm.cov, gm), buf);
  }
  {
    double rhs_v = pk == pl ? pk
                            : std::pow(pk, lambda) * std::pow(pl, 1.0 - lambda);
    SideEstimate lhs{pg, 0.0, jm.exact[3]};
    SideEstimate rhs{rhs_v, 0.0, jm.exact[1] && jm.exact[2]};
    std::vector<double> gl = {0.0, 0.0, 0.0, 1.0};
    std::vector<double> gr = {0.0, lambda * rhs_v / pk,
                              (1.0 - lambda) * rhs_v / pl, 0.0};
    lhs.std_error = std::sqrt(detail::quad_form(jm.cov, gl));
    rhs.std_error = std::sqrt(detail::quad_form(jm.cov, gr));
    std::vector<double> gm = {0.0, -gr[1], -gr[2], 1.0};
    std::string note = G->membership_approximate()
                           ? "mean body is an outer approximation; a positive "
                             "margin includes one-sided bias"
                           : "mean body collapsed to an exact form";
    out.direct = detail::finish_result("", "geomean-direct", 2, lambda, 1.0,
                                       budget, lhs, rhs,
                                       detail::quad_form(jm.cov, gm),
                                       std::move(note));
  }
  return out;
}

// Var(|x|^2) over the normalized restriction of the Gaussian to K against
// half the Dirichlet energy of |x|^2, which is 2 E|x|^2.  Both sides come
// from one stream.
inline CheckResult check_b_variance(const BodyPtr& K,
                                    const SamplingBudget& budget) {
  if (!K) throw std::invalid_argument("check_b_variance: null body");
  const int n = K->dim();
  detail::Moments mo = detail::joint_stats(
      budget.seed, budget.samples, n, 3, [&](const double* x, double* v) {
        if (!K->contains_raw(x)) return;
        double r2 = 0.0;
        for (int i = 0; i < n; ++i) r2 += x[i] * x[i];
        v[0] = 1.0;
        v[1] = r2;
        v[2] = r2 * r2;
      });
  detail::require_hits(mo.mean[0] * mo.samples);
  double p = mo.mean[0], m2 = mo.mean[1], m4 = mo.mean[2];
  double e2 = m2 / p, e4 = m4 / p;

  SideEstimate lhs{2.0 * e2, 0.0, false};
  SideEstimate rhs{e4 - e2 * e2, 0.0, false};
  std::vector<double> gl = {-2.0 * m2 / (p * p), 2.0 / p, 0.0};
  std::vector<double> gr = {-m4 / (p * p) + 2.0 * m2 * m2 / (p * p * p),
                            -2.0 * m2 / (p * p), 1.0 / p};
  lhs.std_error = std::sqrt(detail::quad_form(mo.cov, gl));
  rhs.std_error = std::sqrt(detail::quad_form(mo.cov, gr));
  std::vector<double> gm = {gl[0] - gr[0], gl[1] - gr[1], -gr[2]};
  std::string note = "both sides share one sample stream";
  if (K->membership_approximate()) note += "; outer membership approximation";
  return detail::finish_result("", "b-variance", n, 0.0, 1.0, budget, lhs, rhs,
                               detail::quad_form(mo.cov, gm), std::move(note));
}

// Odd polynomial of degree <= 3: all monomials change sign under x -> -x, so
// the restricted mean vanishes on symmetric bodies and the variance equals
// the raw second moment up to sampling noise.
struct OddCubic {
  int dim = 0;
  std::vector<double> lin;
  std::vector<std::array<int, 3>> mono;  // i <= j <= k
  std::vector<double> cub;

  double eval(const double* x) const {
    double s = 0.0;
    for (int i = 0; i < dim; ++i) s += lin[size_t(i)] * x[i];
    for (size_t m = 0; m < mono.size(); ++m)
      s += cub[m] * x[mono[m][0]] * x[mono[m][1]] * x[mono[m][2]];
    return s;
  }
  void gradient(const double* x, double* g) const {
    for (int i = 0; i < dim; ++i) g[i] = lin[size_t(i)];
    for (size_t m = 0; m < mono.size(); ++m) {
      int i = mono[m][0], j = mono[m][1], k = mono[m][2];
      g[i] += cub[m] * x[j] * x[k];
      g[j] += cub[m] * x[i] * x[k];
      g[k] += cub[m] * x[i] * x[j];
    }
  }
};

inline std::vector<OddCubic> random_odd_cubics(int dim, int count,
                                               uint64_t seed) {
  if (dim < 1 || dim > 16)
    throw std::invalid_argument("random_odd_cubics: dimension");
  std::vector<std::array<int, 3>> mono;
  for (int i = 0; i < dim; ++i)
    for (int j = i; j < dim; ++j)
      for (int k = j; k < dim; ++k) mono.push_back({i, j, k});
  std::vector<OddCubic> out(static_cast<size_t>(count));
  for (int f = 0; f < count; ++f) {
    OddCubic& c = out[size_t(f)];
    c.dim = dim;
    c.mono = mono;
    c.lin.resize(size_t(dim));
    c.cub.resize(mono.size());
    for (int i = 0; i < dim; ++i)
      c.lin[size_t(i)] = 2.0 * hash_u01(seed, uint64_t(f), uint64_t(i)) - 1.0;
    for (size_t m = 0; m < mono.size(); ++m)
      c.cub[m] = 2.0 * hash_u01(seed, uint64_t(f), uint64_t(100 + m)) - 1.0;
  }
  return out;
}

// Var(f) <= int |grad f|^2 over the normalized restriction, for each sampled
// odd cubic; one result per function, sharing the case seed stream family.
inline std::vector<CheckResult> check_brascamp_lieb_family(
    const BodyPtr& K, const std::vector<OddCubic>& family,
    const SamplingBudget& budget) {
  if (!K) throw std::invalid_argument("check_brascamp_lieb: null body");
  if (family.empty())
    throw std::invalid_argument("check_brascamp_lieb: empty function family");
  const int n = K->dim();
  if (n > 16)
    throw std::invalid_argument("check_brascamp_lieb: dimension above 16");
  std::vector<CheckResult> out;
  for (size_t fi = 0; fi < family.size(); ++fi) {
    const OddCubic& f = family[fi];
    if (f.dim != n)
      throw std::invalid_argument("check_brascamp_lieb: function dimension");
    SamplingBudget sub = budget;
    sub.seed = budget.seed + 0x9E3779B97F4A7C15ull * (fi + 1);
    detail::Moments mo = detail::joint_stats(
        sub.seed, sub.samples, n, 4, [&](const double* x, double* v) {
          if (!K->contains_raw(x)) return;
          double fv = f.eval(x);
          double g[16];  // per-call scratch, the fill runs on several threads
          f.gradient(x, g);
          double g2 = 0.0;
          for (int i = 0; i < n; ++i) g2 += g[i] * g[i];
          v[0] = 1.0;
          v[1] = fv;
          v[2] = fv * fv;
          v[3] = g2;
        });
    detail::require_hits(mo.mean[0] * mo.samples);
    double p = mo.mean[0], s1 = mo.mean[1], s2 = mo.mean[2], sg = mo.mean[3];
    SideEstimate lhs{sg / p, 0.0, false};
    SideEstimate rhs{s2 / p - (s1 / p) * (s1 / p), 0.0, false};
    std::vector<double> gl = {-sg / (p * p), 0.0, 0.0, 1.0 / p};
    std::vector<double> gr = {-s2 / (p * p) + 2.0 * s1 * s1 / (p * p * p),
                              -2.0 * s1 / (p * p), 1.0 / p, 0.0};
    lhs.std_error = std::sqrt(detail::quad_form(mo.cov, gl));
    rhs.std_error = std::sqrt(detail::quad_form(mo.cov, gr));
    std::vector<double> gm = {gl[0] - gr[0], -gr[1], -gr[2], gl[3]};
    char buf[32];
    std::snprintf(buf, sizeof buf, "f%zu", fi);
    out.push_back(detail::finish_result(
        buf, "brascamp-lieb", n, 0.0, 1.0, sub, lhs, rhs,
        detail::quad_form(mo.cov, gm), "variance vs gradient energy"));
  }
  return out;
}

// Single-result form: the family member with the worst sigma grade.
inline CheckResult check_brascamp_lieb(const BodyPtr& K,
                                       const std::vector<OddCubic>& family,
                                       const SamplingBudget& budget) {
  std::vector<CheckResult> all = check_brascamp_lieb_family(K, family, budget);
  size_t worst = 0;
  for (size_t i = 1; i < all.size(); ++i)
    if (all[i].margin_sigmas < all[worst].margin_sigmas) worst = i;
  CheckResult r = all[worst];
  char buf[80];
  std::snprintf(buf, sizeof buf, "worst of %zu odd cubics (%s)", all.size(),
                r.name.c_str());
  r.note = buf;
  return r;
}

// Growth profile J(r) = Xi^{-1}(Psi_n(r)) where Xi(s) = gamma(s M): affine
// through the origin exactly when M is a dilated ball, and the dilate bound
// forces J(r)/r nondecreasing, so any strictly concave stretch is impossible
// and a non-ball M must show convex kinks.  The report is descriptive.
struct XiProfilePoint {
  double r = 0.0;
  double j = 0.0;
  double std_error = 0.0;
};

struct XiProfileReport {
  std::vector<XiProfilePoint> points;
  std::vector<double> second_diff;         // centered, length points-2
  std::vector<double> second_diff_sigma;   // zero on the exact path
  bool exact = false;
  bool affine_within_noise = false;
  bool concavity_violation = false;
  std::string note;
};

inline XiProfileReport check_xi_profile(const BodyPtr& M,
                                        std::vector<double> r_grid,
                                        const SamplingBudget& budget) {
  if (!M) throw std::invalid_argument("check_xi_profile: null body");
  std::sort(r_grid.begin(), r_grid.end());
  r_grid.erase(std::unique(r_grid.begin(), r_grid.end()), r_grid.end());
  if (r_grid.size() < 3)
    throw std::invalid_argument("check_xi_profile: need at least 3 radii");
  if (r_grid.front() <= 0.0)
    throw std::invalid_argument("check_xi_profile: radii must be positive");
  const int n = M->dim();
  BodyPtr s = simplify(M);

  XiProfileReport rep;
  if (detail::measure_closed_form(*s)) {
    rep.exact = true;
    rep.note = "closed-form profile, bisection inverse";
    for (double r : r_grid) {
      double target = psi_n(n, r);
      double lo = 0.0, hi = 1.0;
      while (detail::measure_closed_form(*detail::scale_body(hi, s))->value <
             target) {
        hi *= 2.0;
        if (hi > 1e6)
          throw std::runtime_error("check_xi_profile: profile fails to reach");
      }
      for (int it = 0; it < 200 && hi - lo > 1e-13 * hi; ++it) {
        double mid = 0.5 * (lo + hi);
        double v = detail::measure_closed_form(*detail::scale_body(mid, s))->value;
        if (v < target) lo = mid; else hi = mid;
      }
      rep.points.push_back({r, 0.5 * (lo + hi), 0.0});
    }
  } else {
    // One pass over a scale grid wide enough to bracket every target, then a
    // monotone piecewise-linear inverse.  Adjacent-point correlations are
    // ignored in the second-difference errors, which overstates them
    // slightly; the report is descriptive either way.
    rep.note = "sampled profile, interpolated inverse";
    std::vector<double> th(size_t(n), 0.0);
    double r_in = kInf, r_out = 0.0;
    for (int a = 0; a < 64; ++a) {
      for (int i = 0; i < n; ++i)
        th[size_t(i)] = std::cos(kPi * (a * (i + 1) * 0.618 + 0.1 * i));
      double norm2 = 0.0;
      for (double v : th) norm2 += v * v;
      for (double& v : th) v /= std::sqrt(norm2);
      double rd = s->radial_dir(th.data());
      r_in = std::min(r_in, rd);
      r_out = std::max(r_out, rd);
    }
    if (!std::isfinite(r_out) || r_in <= 0.0)
      throw std::invalid_argument("check_xi_profile: sampled path needs a "
                                  "bounded body");
    double lo_s = 0.25 * r_grid.front() / r_out;
    double hi_s = 4.0 * r_grid.back() / r_in;
    const int g = 160;
    std::vector<double> sgrid(g);
    for (int i = 0; i < g; ++i)
      sgrid[size_t(i)] = lo_s + (hi_s - lo_s) * i / (g - 1);
    std::vector<XiPoint> prof = xi_profile(M, sgrid, budget);
    for (double r : r_grid) {
      double target = psi_n(n, r);
      size_t j = 0;
      while (j + 1 < prof.size() && prof[j + 1].estimate.value < target) ++j;
      if (j + 1 >= prof.size())
        throw std::runtime_error("check_xi_profile: target above profile");
      double p0 = prof[j].estimate.value, p1 = prof[j + 1].estimate.value;
      double t = p1 > p0 ? (target - p0) / (p1 - p0) : 0.5;
      double jv = prof[j].r + t * (prof[j + 1].r - prof[j].r);
      double slope = p1 > p0 ? (p1 - p0) / (prof[j + 1].r - prof[j].r) : kInf;
      double se = prof[j].estimate.std_error / slope;
      rep.points.push_back({r, jv, se});
    }
  }

  double jmax = 0.0;
  for (const auto& pt : rep.points) jmax = std::max(jmax, std::fabs(pt.j));
  double span = r_grid.back() - r_grid.front();
  double curvature_floor = 1e-6 * jmax / (span * span);
  double worst_pos = -kInf, worst_abs = 0.0;
  for (size_t i = 1; i + 1 < rep.points.size(); ++i) {
    const auto& a = rep.points[i - 1];
    const auto& b = rep.points[i];
    const auto& c = rep.points[i + 1];
    double d2 = 2.0 * ((c.j - b.j) / (c.r - b.r) - (b.j - a.j) / (b.r - a.r)) /
                (c.r - a.r);
    double se = 2.0 *
                std::sqrt(a.std_error * a.std_error +
                          4.0 * b.std_error * b.std_error +
                          c.std_error * c.std_error) /
                ((c.r - b.r) * (c.r - a.r));
    rep.second_diff.push_back(d2);
    rep.second_diff_sigma.push_back(se);
    worst_abs = std::max(worst_abs, std::fabs(d2) - 3.0 * se);
    worst_pos = std::max(worst_pos, d2 - 5.0 * se);
  }
  rep.affine_within_noise = worst_abs <= curvature_floor;
  rep.concavity_violation = worst_pos > curvature_floor;
  return rep;
}

// ------------------------------------------------------------------ corpus

// Refutation-style operations are expected to report violations; only the
// theorem-backed tags gate the run's exit status.
inline bool theorem_backed(const std::string& check) {
  return check != "exponent-optimality" && check != "xi-profile";
}

namespace detail {

inline double corpus_u01(uint64_t a, uint64_t b) {
  return hash_u01(0x67626d2d636b3031ull, a, b);
}

inline BodyPtr corpus_box(int n, uint64_t tag) {
  std::vector<double> hw(size_t(n), 0.0);
  for (int i = 0; i < n; ++i)
    hw[size_t(i)] = 0.4 + 1.2 * corpus_u01(tag, uint64_t(i));
  return box(std::move(hw));
}

inline BodyPtr corpus_ellipsoid(int n, uint64_t tag) {
  std::vector<double> ax(size_t(n), 0.0);
  for (int i = 0; i < n; ++i)
    ax[size_t(i)] = 0.4 + 1.2 * corpus_u01(tag, uint64_t(64 + i));
  return ellipsoid(std::move(ax));
}

inline BodyPtr corpus_polytope(int n, uint64_t tag) {
  int kmin = n == 2 ? 3 : n + 1;
  for (uint64_t attempt = 0; attempt < 64; ++attempt) {
    uint64_t t = tag * 64 + attempt;
    int k = kmin + int(corpus_u01(t, 1000) * (8 - kmin + 1));
    k = std::min(k, 8);
    std::vector<std::vector<double>> verts(size_t(k),
                                           std::vector<double>(size_t(n), 0.0));
    for (int v = 0; v < k; ++v) {
      double norm2 = 0.0;
      for (int i = 0; i < n; ++i) {
        double u1 = corpus_u01(t, uint64_t(2000 + v * 16 + 2 * i));
        double u2 = corpus_u01(t, uint64_t(2001 + v * 16 + 2 * i));
        double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
        verts[size_t(v)][size_t(i)] = z;
        norm2 += z * z;
      }
      double radius = 0.7 + 0.7 * corpus_u01(t, uint64_t(3000 + v));
      for (int i = 0; i < n; ++i)
        verts[size_t(v)][size_t(i)] *= radius / std::sqrt(norm2);
    }
    try {
      return sym_polytope(n, verts);
    } catch (const std::invalid_argument&) {
      continue;  // degenerate draw; take the next attempt in the stream
    }
  }
  throw std::runtime_error("corpus_polytope: no nondegenerate draw found");
}

inline BodyPtr corpus_mixture(int n, uint64_t tag) {
  double mu = 0.3 + 0.4 * corpus_u01(tag, 7);
  BodyPtr a = corpus_polytope(n, tag * 2 + 1);
  if (n == 2) {
    // Planar polytope sums fold to exact product generators with cheap facet
    // membership.
    BodyPtr b = corpus_u01(tag, 8) < 0.5 ? corpus_polytope(n, tag * 2 + 2)
                                         : corpus_box(n, tag * 2 + 2);
    return minkowski_combine(mu, a, b);
  }
  // In higher dimensions each product generator inflates the per-sample
  // vertex program, so mixtures carry a ball partner instead: distance
  // membership is exact and fast.
  return minkowski_combine(mu, a, ball(n, 0.5 + corpus_u01(tag, 9)));
}

inline BodyPtr corpus_slab(int n, uint64_t tag) {
  int axis = int(corpus_u01(tag, 21) * n) % n;
  double w = 0.5 + 1.0 * corpus_u01(tag, 22);
  double cap = 0.8 + 1.2 * corpus_u01(tag, 23);
  return slab(n, axis, w, cap);
}

}  // namespace detail

// Deterministic battery of named cases: box, ellipsoid, polytope, slab and
// ball pairs, polytope mixtures, and self-comparisons, across dimensions 2..4
// and the three standard combination weights.  Pairings are restricted to
// combinations whose membership stays exact, and the few recipes whose
// combination runs a per-sample vertex program get a reduced budget so the
// battery's cost stays dominated by the cheap memberships.
inline std::vector<CheckCase> default_corpus(int64_t samples = 600000) {
  const double lambdas[3] = {0.25, 0.5, 0.75};
  const int64_t heavy = std::max<int64_t>(samples / 4, 100000);
  std::vector<CheckCase> out;
  int idx = 0;
  for (int n : {2, 3, 4}) {
    for (int rep = 0; rep < 7; ++rep) {
      for (int rc = 0; rc < 12; ++rc, ++idx) {
        uint64_t tag = uint64_t(n) * 1000000 + uint64_t(idx) * 16 + uint64_t(rc);
        CheckCase c;
        c.lambda = lambdas[idx % 3];
        c.delta = 1.0;
        c.budget.samples = samples;
        c.budget.seed = 0xC0FFEE0000ull + uint64_t(idx) * 7919;
        std::string recipe;
        switch (rc) {
          case 0:
            recipe = "box-box";
            c.K = detail::corpus_box(n, tag);
            c.L = detail::corpus_box(n, tag + 1);
            break;
          case 1: {
            recipe = "ell-ell";
            c.K = detail::corpus_ellipsoid(n, tag);
            double t = 0.6 + 0.8 * detail::corpus_u01(tag, 11);
            c.L = dilate(t, c.K);  // proportional partner keeps the sum exact
            break;
          }
          case 2:
            recipe = "poly-poly";
            c.K = detail::corpus_polytope(n, tag);
            c.L = detail::corpus_polytope(n, tag + 1);
            if (n >= 3) c.budget.samples = heavy;
            break;
          case 3:
            recipe = "poly-box";
            c.K = detail::corpus_polytope(n, tag);
            c.L = detail::corpus_box(n, tag + 1);
            if (n >= 3) c.budget.samples = heavy;
            break;
          case 4:
            recipe = "box-ball";
            c.K = detail::corpus_box(n, tag);
            c.L = ball(n, 0.5 + detail::corpus_u01(tag, 12));
            break;
          case 5:
            recipe = "ell-ball";
            c.K = detail::corpus_ellipsoid(n, tag);
            c.L = ball(n, 0.5 + detail::corpus_u01(tag, 12));
            break;
          case 6:
            recipe = "poly-ball";
            c.K = detail::corpus_polytope(n, tag);
            c.L = ball(n, 0.5 + detail::corpus_u01(tag, 12));
            break;
          case 7:
            recipe = "mix-ball";
            c.K = detail::corpus_mixture(n, tag);
            c.L = ball(n, 0.5 + detail::corpus_u01(tag, 12));
            break;
          case 8:
            recipe = "slab-ball";
            c.K = detail::corpus_slab(n, tag);
            c.L = ball(n, 0.5 + detail::corpus_u01(tag, 12));
            break;
          case 9:
            recipe = "ball-ball";
            c.K = ball(n, 0.5 + detail::corpus_u01(tag, 13));
            c.L = ball(n, 1.0 + detail::corpus_u01(tag, 14));
            break;
          case 10:
            if (n == 2) {
              recipe = "poly-poly2";
              c.K = detail::corpus_polytope(n, tag + 5);
              c.L = detail::corpus_polytope(n, tag + 6);
            } else {
              recipe = "ell-ell2";
              c.K = detail::corpus_ellipsoid(n, tag + 5);
              double t = 0.6 + 0.8 * detail::corpus_u01(tag, 15);
              c.L = dilate(t, c.K);
            }
            break;
          case 11:
            switch (rep % 6) {
              case 0: recipe = "self-poly"; c.K = detail::corpus_polytope(n, tag); break;
              case 1: recipe = "self-box"; c.K = detail::corpus_box(n, tag); break;
              case 2: recipe = "self-ell"; c.K = detail::corpus_ellipsoid(n, tag); break;
              case 3: recipe = "self-mix"; c.K = detail::corpus_mixture(n, tag); break;
              case 4: recipe = "self-ball"; c.K = ball(n, 0.5 + detail::corpus_u01(tag, 13)); break;
              default: recipe = "self-slab"; c.K = detail::corpus_slab(n, tag); break;
            }
            break;
        }
        // Keep every combination exactly representable: if a pairing were to
        // fall back to an approximate membership net, swap in a ball partner.
        BodyPtr probe = minkowski_combine(c.lambda, c.K, c.L ? c.L : c.K);
        if (probe->membership_approximate())
          c.L = ball(n, 0.8);
        char buf[64];
        std::snprintf(buf, sizeof buf, "n%d-%03d-%s", n, idx, recipe.c_str());
        c.name = buf;
        out.push_back(std::move(c));
      }
    }
  }
  return out;
}

inline ordered_json corpus_to_json(const std::vector<CheckCase>& cases) {
  ordered_json doc;
  doc["schema"] = "gbm-corpus-1";
  ordered_json arr = ordered_json::array();
  for (const auto& c : cases) {
    ordered_json j;
    j["name"] = c.name;
    j["lambda"] = c.lambda;
    j["delta"] = c.delta;
    j["samples"] = c.budget.samples;
    j["seed"] = c.budget.seed;
    j["K"] = body_to_json(*c.K);
    if (c.L) j["L"] = body_to_json(*c.L);
    arr.push_back(std::move(j));
  }
  doc["cases"] = std::move(arr);
  return doc;
}

inline std::vector<CheckCase> corpus_from_json(const ordered_json& doc) {
  if (!doc.is_object() || !doc.contains("schema") || !doc.contains("cases"))
    throw std::invalid_argument(
        "corpus: expected an object with schema and cases");
  if (!doc.at("schema").is_string() ||
      doc.at("schema").get<std::string>() != "gbm-corpus-1")
    throw std::invalid_argument("corpus: unsupported schema version");
  if (!doc.at("cases").is_array())
    throw std::invalid_argument("corpus: cases must be an array");
  std::vector<CheckCase> out;
  std::map<std::string, int> seen;
  for (const auto& j : doc.at("cases")) {
    CheckCase c;
    try {
      c.name = j.at("name").get<std::string>();
      c.lambda = j.at("lambda").get<double>();
      c.delta = j.value("delta", 1.0);
      c.budget.samples = j.at("samples").get<int64_t>();
      c.budget.seed = j.at("seed").get<uint64_t>();
      c.K = body_from_json(j.at("K"));
      if (j.contains("L")) c.L = body_from_json(j.at("L"));
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument(std::string("corpus: ") + e.what());
    }
    if (c.name.empty() || c.name.find(',') != std::string::npos)
      throw std::invalid_argument("corpus: case names must be nonempty and "
                                  "comma-free");
    if (seen[c.name]++)
      throw std::invalid_argument("corpus: duplicate case name " + c.name);
    detail::require_case(c);
    out.push_back(std::move(c));
  }
  return out;
}

// ------------------------------------------------------------------ runner

// Runs the requested combination checks over every case on a small worker
// pool.  Cases are independent; rows are reassembled in case order and then
// sorted by (name, check), so the output is a pure function of the inputs.
struct RunOutcome {
  std::vector<CheckResult> rows;
  int violated_theorem_rows = 0;
};

inline RunOutcome run_checks(const std::vector<CheckCase>& cases,
                             const std::vector<std::string>& ops,
                             int workers = 0) {
  for (const auto& op : ops)
    if (op != "dim-bm" && op != "ehrhard" && op != "log-concavity" &&
        op != "sigma-refinement")
      throw std::invalid_argument("run_checks: unknown operation " + op);
  bool want_sigma = std::find(ops.begin(), ops.end(), "sigma-refinement") !=
                    ops.end();
  std::map<int, SigmaTable> tables;
  if (want_sigma)
    for (const auto& c : cases) {
      int n = c.K->dim();
      if (!tables.count(n)) tables.emplace(n, build_sigma(n));
    }

  std::vector<std::vector<CheckResult>> slots(cases.size());
  std::atomic<size_t> next{0};
  auto run = [&]() {
    for (;;) {
      size_t i = next.fetch_add(1);
      if (i >= cases.size()) break;
      // One measurement pass feeds every transform of the case.
      detail::ComboMeasures cm = detail::combo_measures(cases[i]);
      std::vector<CheckResult> rows;
      for (const auto& op : ops) {
        if (op == "dim-bm") rows.push_back(detail::dim_bm_from(cases[i], cm));
        else if (op == "ehrhard")
          rows.push_back(detail::ehrhard_from(cases[i], cm));
        else if (op == "log-concavity")
          rows.push_back(detail::log_concavity_from(cases[i], cm));
        else {
          SigmaRefinementOutcome o = detail::sigma_refinement_from(
              cases[i], cm, tables.at(cases[i].K->dim()));
          rows.push_back(std::move(o.refinement));
          rows.push_back(std::move(o.power));
        }
      }
      slots[i] = std::move(rows);
    }
  };
  int w = workers > 0 ? workers : worker_count_from_env();
  w = int(std::min<size_t>(size_t(w), cases.size()));
  if (w <= 1) {
    run();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(size_t(w));
    for (int t = 0; t < w; ++t) pool.emplace_back(run);
    for (auto& th : pool) th.join();
  }

  RunOutcome out;
  for (auto& rows : slots)
    for (auto& r : rows) out.rows.push_back(std::move(r));
  std::stable_sort(out.rows.begin(), out.rows.end(),
                   [](const CheckResult& a, const CheckResult& b) {
                     if (a.name != b.name) return a.name < b.name;
                     return a.check < b.check;
                   });
  for (const auto& r : out.rows)
    if (r.verdict == Verdict::kViolated && theorem_backed(r.check))
      ++out.violated_theorem_rows;
  return out;
}

// ------------------------------------------------------------------ writers

namespace detail {

inline double capped_sigmas(double s) {
  if (s > kSigmaCap) return kSigmaCap;
  if (s < -kSigmaCap) return -kSigmaCap;
  return s;
}

}  // namespace detail

inline ordered_json result_to_json(const CheckResult& r) {
  ordered_json j;
  j["schema"] = "gbm-report-1";
  j["name"] = r.name;
  j["check"] = r.check;
  j["dim"] = r.dim;
  j["lambda"] = r.lambda;
  j["delta"] = r.delta;
  j["seed"] = r.seed;
  j["samples"] = r.samples;
  j["lhs"] = {{"value", r.lhs.value},
              {"std_error", r.lhs.std_error},
              {"exact", r.lhs.exact}};
  j["rhs"] = {{"value", r.rhs.value},
              {"std_error", r.rhs.std_error},
              {"exact", r.rhs.exact}};
  j["margin"] = r.margin;
  j["margin_std_error"] = r.margin_std_error;
  j["margin_sigmas"] = detail::capped_sigmas(r.margin_sigmas);
  j["verdict"] = verdict_name(r.verdict);
  j["note"] = r.note;
  return j;
}

inline void write_results_jsonl(std::ostream& os,
                                const std::vector<CheckResult>& rows) {
  for (const auto& r : rows) os << result_to_json(r).dump() << "\n";
}

inline void write_results_csv(std::ostream& os,
                              const std::vector<CheckResult>& rows) {
  os << "name,check,lhs,rhs,margin,sigmas,verdict\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%s,%.12g,%.12g,%.12g,%.6g,%s\n",
                  r.name.c_str(), r.check.c_str(), r.lhs.value, r.rhs.value,
                  r.margin, detail::capped_sigmas(r.margin_sigmas),
                  verdict_name(r.verdict));
    os << buf;
  }
}

}  // namespace gbm
