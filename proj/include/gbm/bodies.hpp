#pragma once

// Symmetric convex and star-shaped sets in R^n with support, membership and
// radial oracles, plus Minkowski combinations, geometric means and dilates.
//
// Bodies are immutable trees built through the factory functions declared
// below.  Each composite node resolves a membership strategy at construction:
//   - delegate:  the node is structurally equivalent to an exact kind (a
//                Minkowski combination of two balls is a ball, a dilate pushes
//                into its child, parallel halfspaces merge, small polytope
//                sums expand into product generators);
//   - dist-ball: X (+) rB decided through dist(x, X) <= r with an exact
//                distance routine per base kind;
//   - net:       outer approximation through a deterministic direction net
//                plus multi-start local refinement; decisions are flagged
//                approximate and the net covering radius is recorded.
// In the net test a negative h(theta) - <x,theta> certifies "outside"; the
// "inside" verdict can overshoot by the refinement bias, which is one-sided
// (the reported set contains the true one).

#include "gbm/math.hpp"
#include "gbm/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace gbm {

class Body;
using BodyPtr = std::shared_ptr<const Body>;

BodyPtr ball(int dim, double radius);
BodyPtr box(std::vector<double> half_widths);
BodyPtr ellipsoid(std::vector<double> semi_axes);
BodyPtr sym_polytope(int dim, const std::vector<std::vector<double>>& vertices);
BodyPtr slab(int dim, int axis, double half_width, double radial_cap);
BodyPtr halfspace_pair(int dim, int axis, double offset);
BodyPtr minkowski_combine(double lambda, BodyPtr K, BodyPtr L);
BodyPtr geometric_mean(double lambda, BodyPtr K, BodyPtr L);
BodyPtr dilate(double t, BodyPtr K);
BodyPtr simplify(const BodyPtr& b);

// ------------------------------------------------------------------ basics

class Direction {
 public:
  explicit Direction(std::vector<double> components) : v_(std::move(components)) {
    double n2 = 0.0;
    for (double c : v_) n2 += c * c;
    if (!(n2 > 0.0)) throw std::invalid_argument("Direction: zero vector");
    double n = std::sqrt(n2);
    if (std::fabs(n - 1.0) > 1e-12)
      for (double& c : v_) c /= n;
  }
  int dim() const { return int(v_.size()); }
  const double* data() const { return v_.data(); }
  const std::vector<double>& components() const { return v_; }

 private:
  std::vector<double> v_;
};

enum class BodyKind {
  kBall,
  kBox,
  kEllipsoid,
  kSymPolytope,
  kSlab,
  kHalfspacePair,
  kMinkowskiCombo,
  kGeometricMean,
  kDilate,
};

inline const char* kind_name(BodyKind k) {
  switch (k) {
    case BodyKind::kBall: return "ball";
    case BodyKind::kBox: return "box";
    case BodyKind::kEllipsoid: return "ellipsoid";
    case BodyKind::kSymPolytope: return "sym-polytope";
    case BodyKind::kSlab: return "slab";
    case BodyKind::kHalfspacePair: return "halfspace-pair";
    case BodyKind::kMinkowskiCombo: return "minkowski-combo";
    case BodyKind::kGeometricMean: return "geometric-mean";
    case BodyKind::kDilate: return "dilate";
  }
  return "?";
}

inline BodyKind kind_from_name(const std::string& s) {
  if (s == "ball") return BodyKind::kBall;
  if (s == "box") return BodyKind::kBox;
  if (s == "ellipsoid") return BodyKind::kEllipsoid;
  if (s == "sym-polytope") return BodyKind::kSymPolytope;
  if (s == "slab") return BodyKind::kSlab;
  if (s == "halfspace-pair") return BodyKind::kHalfspacePair;
  if (s == "minkowski-combo") return BodyKind::kMinkowskiCombo;
  if (s == "geometric-mean") return BodyKind::kGeometricMean;
  if (s == "dilate") return BodyKind::kDilate;
  throw std::invalid_argument("unknown body kind: " + s);
}

struct MembershipInfo {
  bool inside = false;
  bool approximate = false;
  double net_resolution = 0.0;
};

namespace detail {

inline double dot(const double* a, const double* b, int n) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

inline double norm(const double* a, int n) { return std::sqrt(dot(a, a, n)); }

// --------------------------------------------------- 2D convex hull facets

// Andrew monotone chain over the symmetrized vertex cloud; emits outward unit
// normals and offsets of the hull edges.  Near-collinear middle points are
// dropped, shifting each facet by at most ~1e-12 * scale.
inline void hull2d_facets(const std::vector<double>& pts2,
                          std::vector<double>* normals,
                          std::vector<double>* offsets) {
  int m = int(pts2.size() / 2);
  std::vector<std::pair<double, double>> p(m);
  double scale = 0.0;
  for (int i = 0; i < m; ++i) {
    p[i] = {pts2[2 * i], pts2[2 * i + 1]};
    scale = std::max(scale, std::fabs(p[i].first) + std::fabs(p[i].second));
  }
  std::sort(p.begin(), p.end());
  p.erase(std::unique(p.begin(), p.end()), p.end());
  m = int(p.size());
  if (m < 3) throw std::invalid_argument("sym-polytope: vertices do not span the plane");
  auto cross = [](const std::pair<double, double>& o, const std::pair<double, double>& a,
                  const std::pair<double, double>& b) {
    return (a.first - o.first) * (b.second - o.second) -
           (a.second - o.second) * (b.first - o.first);
  };
  double tol = 1e-12 * scale * scale;
  std::vector<std::pair<double, double>> h(2 * m);
  int k = 0;
  for (int i = 0; i < m; ++i) {
    while (k >= 2 && cross(h[k - 2], h[k - 1], p[i]) <= tol) --k;
    h[k++] = p[i];
  }
  int lower = k + 1;
  for (int i = m - 2; i >= 0; --i) {
    while (k >= lower && cross(h[k - 2], h[k - 1], p[i]) <= tol) --k;
    h[k++] = p[i];
  }
  h.resize(k - 1);  // closed polygon, CCW
  if (int(h.size()) < 3)
    throw std::invalid_argument("sym-polytope: vertices do not span the plane");
  normals->clear();
  offsets->clear();
  for (size_t i = 0; i < h.size(); ++i) {
    auto a = h[i], b = h[(i + 1) % h.size()];
    double dx = b.first - a.first, dy = b.second - a.second;
    double len = std::hypot(dx, dy);
    if (len <= 0.0) continue;
    double nx = dy / len, ny = -dx / len;  // outward for CCW order
    normals->push_back(nx);
    normals->push_back(ny);
    offsets->push_back(nx * a.first + ny * a.second);
  }
}

// ------------------------------------------------- linear feasibility test

// Is x in conv{w_1..w_M}?  Phase-I simplex with Bland's rule on
//   sum_i mu_i w_i = x, sum_i mu_i = 1, mu >= 0;
// feasible iff the artificial objective can be driven to ~0.
inline bool in_convex_hull_lp(const std::vector<double>& w, int M, int n,
                              const double* x) {
  int m = n + 1;                // equality rows
  int cols = M + m + 1;         // mu vars, artificials, rhs
  std::vector<double> T(size_t(m) * cols, 0.0);
  std::vector<double> z(cols, 0.0);
  std::vector<int> basis(m);
  double scale = 1.0;
  for (int i = 0; i < M * n; ++i) scale = std::max(scale, std::fabs(w[i]));
  for (int i = 0; i < n; ++i) scale = std::max(scale, std::fabs(x[i]));

  for (int r = 0; r < m; ++r) {
    double b = (r < n) ? x[r] : 1.0;
    double sgn = (b < 0.0) ? -1.0 : 1.0;
    for (int j = 0; j < M; ++j) {
      double a = (r < n) ? w[size_t(j) * n + r] : 1.0;
      T[size_t(r) * cols + j] = sgn * a;
    }
    T[size_t(r) * cols + M + r] = 1.0;
    T[size_t(r) * cols + cols - 1] = sgn * b;
    basis[r] = M + r;
  }
  // Reduced costs of the phase-I objective (artificials cost 1).
  for (int j = 0; j < cols; ++j) {
    double s = 0.0;
    for (int r = 0; r < m; ++r) s += T[size_t(r) * cols + j];
    z[j] = ((j >= M && j < M + m) ? 1.0 : 0.0) - s;
  }

  const double eps = 1e-11;
  for (int iter = 0; iter < 20000; ++iter) {
    int enter = -1;
    for (int j = 0; j < cols - 1; ++j)
      if (z[j] < -eps) { enter = j; break; }  // Bland: lowest index
    if (enter < 0) break;
    int leave = -1;
    double best = kInf;
    for (int r = 0; r < m; ++r) {
      double a = T[size_t(r) * cols + enter];
      if (a > eps) {
        double ratio = T[size_t(r) * cols + cols - 1] / a;
        if (ratio < best - 1e-15 ||
            (ratio < best + 1e-15 && (leave < 0 || basis[r] < basis[leave]))) {
          best = ratio;
          leave = r;
        }
      }
    }
    if (leave < 0) break;  // cannot happen for a bounded phase-I objective
    double piv = T[size_t(leave) * cols + enter];
    for (int j = 0; j < cols; ++j) T[size_t(leave) * cols + j] /= piv;
    for (int r = 0; r < m; ++r) {
      if (r == leave) continue;
      double f = T[size_t(r) * cols + enter];
      if (f == 0.0) continue;
      for (int j = 0; j < cols; ++j)
        T[size_t(r) * cols + j] -= f * T[size_t(leave) * cols + j];
    }
    double fz = z[enter];
    if (fz != 0.0)
      for (int j = 0; j < cols; ++j) z[j] -= fz * T[size_t(leave) * cols + j];
    basis[leave] = enter;
  }
  double infeas = 0.0;
  for (int r = 0; r < m; ++r)
    if (basis[r] >= M) infeas += T[size_t(r) * cols + cols - 1];
  return infeas <= 1e-9 * (1.0 + scale);
}

// ---------------------------------------------- min-norm point in a hull

// Wolfe's nearest-point algorithm on conv{q_1..q_M} (points already
// translated so the query sits at the origin).  Returns the distance; the
// corral stays small (Caratheodory), so the Gram solves are tiny.
inline double min_norm_point(const std::vector<double>& q, int M, int n,
                             std::vector<double>* out_y = nullptr) {
  auto qp = [&](int j) { return q.data() + size_t(j) * n; };
  double scale2 = 0.0;
  for (int j = 0; j < M; ++j) scale2 = std::max(scale2, dot(qp(j), qp(j), n));
  if (scale2 == 0.0) {
    if (out_y) out_y->assign(n, 0.0);
    return 0.0;
  }

  int j0 = 0;
  double best = kInf;
  for (int j = 0; j < M; ++j) {
    double d2 = dot(qp(j), qp(j), n);
    if (d2 < best) { best = d2; j0 = j; }
  }
  std::vector<int> S{j0};
  std::vector<double> alpha{1.0};
  std::vector<double> y(qp(j0), qp(j0) + n);

  auto recompute_y = [&]() {
    std::fill(y.begin(), y.end(), 0.0);
    for (size_t i = 0; i < S.size(); ++i)
      for (int d = 0; d < n; ++d) y[d] += alpha[i] * qp(S[i])[d];
  };

  for (int outer = 0; outer < 200; ++outer) {
    double yy = dot(y.data(), y.data(), n);
    int jt = 0;
    double bm = kInf;
    for (int j = 0; j < M; ++j) {
      double v = dot(y.data(), qp(j), n);
      if (v < bm) { bm = v; jt = j; }
    }
    if (yy - bm <= 1e-12 * (1.0 + scale2)) break;  // optimality certificate
    bool inS = false;
    for (int s : S) if (s == jt) inS = true;
    if (inS) break;
    S.push_back(jt);
    alpha.push_back(0.0);

    for (int minor = 0; minor < 100; ++minor) {
      int k = int(S.size());
      // Affine min-norm coefficients: solve [[G 1][1' 0]] [beta; -mu] = [0; 1].
      std::vector<double> A(size_t(k + 1) * (k + 2), 0.0);
      for (int i = 0; i < k; ++i) {
        for (int j = 0; j <= i; ++j) {
          double g = dot(qp(S[i]), qp(S[j]), n);
          A[size_t(i) * (k + 2) + j] = g;
          A[size_t(j) * (k + 2) + i] = g;
        }
        A[size_t(i) * (k + 2) + k] = 1.0;
        A[size_t(k) * (k + 2) + i] = 1.0;
      }
      A[size_t(k) * (k + 2) + k + 1] = 1.0;
      // Gaussian elimination, partial pivoting, ridge retry on breakdown.
      std::vector<double> beta(k, 0.0);
      bool solved = false;
      for (int attempt = 0; attempt < 2 && !solved; ++attempt) {
        std::vector<double> B = A;
        if (attempt == 1)
          for (int i = 0; i < k; ++i) B[size_t(i) * (k + 2) + i] += 1e-10 * scale2;
        solved = true;
        for (int col = 0; col <= k; ++col) {
          int piv = col;
          for (int r = col + 1; r <= k; ++r)
            if (std::fabs(B[size_t(r) * (k + 2) + col]) >
                std::fabs(B[size_t(piv) * (k + 2) + col]))
              piv = r;
          if (std::fabs(B[size_t(piv) * (k + 2) + col]) < 1e-14 * (1.0 + scale2)) {
            solved = false;
            break;
          }
          if (piv != col)
            for (int j = col; j <= k + 1; ++j)
              std::swap(B[size_t(piv) * (k + 2) + j], B[size_t(col) * (k + 2) + j]);
          for (int r = col + 1; r <= k; ++r) {
            double f = B[size_t(r) * (k + 2) + col] / B[size_t(col) * (k + 2) + col];
            if (f == 0.0) continue;
            for (int j = col; j <= k + 1; ++j)
              B[size_t(r) * (k + 2) + j] -= f * B[size_t(col) * (k + 2) + j];
          }
        }
        if (!solved) continue;
        std::vector<double> sol(k + 1);
        for (int r = k; r >= 0; --r) {
          double s = B[size_t(r) * (k + 2) + k + 1];
          for (int j = r + 1; j <= k; ++j) s -= B[size_t(r) * (k + 2) + j] * sol[j];
          sol[r] = s / B[size_t(r) * (k + 2) + r];
        }
        for (int i = 0; i < k; ++i) beta[i] = sol[i];
      }
      if (!solved) break;

      bool interior = true;
      for (int i = 0; i < k; ++i)
        if (beta[i] < 1e-12) interior = false;
      if (interior) {
        alpha = beta;
        break;
      }
      // Walk from alpha toward beta until a coefficient hits zero, drop it.
      double theta = 1.0;
      for (int i = 0; i < k; ++i)
        if (beta[i] < alpha[i])
          theta = std::min(theta, alpha[i] / (alpha[i] - beta[i]));
      for (int i = 0; i < k; ++i) alpha[i] += theta * (beta[i] - alpha[i]);
      for (int i = k - 1; i >= 0; --i) {
        if (alpha[i] <= 1e-13) {
          alpha.erase(alpha.begin() + i);
          S.erase(S.begin() + i);
        }
      }
      if (S.empty()) {
        if (out_y) out_y->assign(n, 0.0);
        return 0.0;
      }
      double tot = 0.0;
      for (double a : alpha) tot += a;
      for (double& a : alpha) a /= tot;
    }
    recompute_y();
  }
  if (out_y) *out_y = y;
  return norm(y.data(), n);
}

// ------------------------------------------------ exact distance routines

inline double dist_to_box(const std::vector<double>& hw, const double* x, int n) {
  double d2 = 0.0;
  for (int i = 0; i < n; ++i) {
    double e = std::fabs(x[i]) - hw[i];
    if (e > 0.0) d2 += e * e;
  }
  return std::sqrt(d2);
}

// Projection on {sum z_i^2/a_i^2 <= 1}: z_i = a_i^2 x_i / (a_i^2 + t) with the
// KKT parameter t >= 0 solving sum a_i^2 x_i^2 / (a_i^2 + t)^2 = 1.
inline double dist_to_ellipsoid(const std::vector<double>& a, const double* x,
                                int n) {
  double inside = 0.0;
  for (int i = 0; i < n; ++i) inside += (x[i] * x[i]) / (a[i] * a[i]);
  if (inside <= 1.0) return 0.0;
  auto g = [&](double t) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
      double d = a[i] * a[i] + t;
      s += a[i] * a[i] * x[i] * x[i] / (d * d);
    }
    return s;
  };
  double hi = 0.0;
  for (int i = 0; i < n; ++i) hi += a[i] * a[i] * x[i] * x[i];
  hi = std::sqrt(hi);           // g(hi) <= 1 by construction
  double lo = 0.0, t = 0.5 * hi;
  for (int it = 0; it < 200; ++it) {
    double v = g(t);
    if (v > 1.0) lo = t; else hi = t;
    // Newton step on g(t) - 1, clipped to the bracket.
    double dg = 0.0;
    for (int i = 0; i < n; ++i) {
      double d = a[i] * a[i] + t;
      dg += -2.0 * a[i] * a[i] * x[i] * x[i] / (d * d * d);
    }
    double tn = (dg < 0.0) ? t - (v - 1.0) / dg : 0.5 * (lo + hi);
    if (!(tn > lo && tn < hi)) tn = 0.5 * (lo + hi);
    if (std::fabs(tn - t) <= 1e-15 * (1.0 + t)) { t = tn; break; }
    t = tn;
  }
  double d2 = 0.0;
  for (int i = 0; i < n; ++i) {
    double d = a[i] * a[i] + t;
    double diff = x[i] * t / d;
    d2 += diff * diff;
  }
  return std::sqrt(d2);
}

inline double dist_to_slab(int axis, double hw, double cap, const double* x,
                           int n) {
  double da = std::fabs(x[axis]) - hw;
  double p2 = 0.0;
  for (int i = 0; i < n; ++i)
    if (i != axis) p2 += x[i] * x[i];
  double dp = std::sqrt(p2) - cap;
  double d2 = 0.0;
  if (da > 0.0) d2 += da * da;
  if (dp > 0.0) d2 += dp * dp;
  return std::sqrt(d2);
}

}  // namespace detail

// ------------------------------------------------------------ direction net

// Deterministic unit-direction nets used by approximate membership: uniform
// angles in the plane, a mirrored Fibonacci lattice on S^2, mirrored
// fixed-seed Gaussian directions beyond.  covering_radius is the (estimated,
// safety-padded) max chord distance from any direction to the net.
struct DirectionNet {
  int dim = 0;
  int count = 0;
  std::vector<double> dirs;  // flattened count x dim
  double covering_radius = 0.0;
};

inline const DirectionNet& direction_net(int dim) {
  static std::mutex mu;
  static std::map<int, std::unique_ptr<DirectionNet>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(dim);
  if (it != cache.end()) return *it->second;

  auto net = std::make_unique<DirectionNet>();
  net->dim = dim;
  if (dim == 1) {
    net->count = 2;
    net->dirs = {1.0, -1.0};
    net->covering_radius = 0.0;
  } else if (dim == 2) {
    net->count = 2048;
    net->dirs.resize(size_t(net->count) * 2);
    for (int i = 0; i < net->count; ++i) {
      double a = 2.0 * kPi * i / net->count;
      net->dirs[2 * i] = std::cos(a);
      net->dirs[2 * i + 1] = std::sin(a);
    }
    net->covering_radius = 2.0 * std::sin(kPi / (2.0 * net->count));
  } else {
    int half = 4096;
    net->count = 2 * half;
    net->dirs.resize(size_t(net->count) * dim);
    if (dim == 3) {
      // Fibonacci lattice plus exact mirrors.
      const double ga = kPi * (3.0 - std::sqrt(5.0));
      for (int i = 0; i < half; ++i) {
        double z = 1.0 - (2.0 * i + 1.0) / half;
        double rr = std::sqrt(std::max(0.0, 1.0 - z * z));
        double a = ga * i;
        double p[3] = {rr * std::cos(a), rr * std::sin(a), z};
        for (int d = 0; d < 3; ++d) {
          net->dirs[size_t(i) * 3 + d] = p[d];
          net->dirs[size_t(half + i) * 3 + d] = -p[d];
        }
      }
    } else {
      const uint64_t kNetStream = 0x6e65740000000000ull + uint64_t(dim);
      std::vector<double> z(dim);
      for (int i = 0; i < half; ++i) {
        gaussian_point(kNetStream, i, dim, z.data());
        double nn = detail::norm(z.data(), dim);
        if (nn < 1e-8) { z[0] += 1.0; nn = detail::norm(z.data(), dim); }
        for (int d = 0; d < dim; ++d) {
          net->dirs[size_t(i) * dim + d] = z[d] / nn;
          net->dirs[size_t(half + i) * dim + d] = -z[d] / nn;
        }
      }
    }
    // Covering radius from a probe set; padded since the probe only lower
    // bounds the true value.
    const uint64_t kProbeStream = 0x70726f6200000000ull + uint64_t(dim);
    std::vector<double> z(dim);
    double worst = 1.0;  // min over probes of (max dot against net)
    for (int i = 0; i < 2048; ++i) {
      gaussian_point(kProbeStream, i, dim, z.data());
      double nn = detail::norm(z.data(), dim);
      if (nn < 1e-8) continue;
      for (int d = 0; d < dim; ++d) z[d] /= nn;
      double bestdot = -1.0;
      for (int j = 0; j < net->count; ++j) {
        double dp = detail::dot(z.data(), net->dirs.data() + size_t(j) * dim, dim);
        if (dp > bestdot) bestdot = dp;
      }
      worst = std::min(worst, bestdot);
    }
    net->covering_radius = 1.5 * std::sqrt(std::max(0.0, 2.0 - 2.0 * worst));
  }
  auto& ref = *net;
  cache[dim] = std::move(net);
  return ref;
}

// ------------------------------------------------------------------- body

class Body {
 public:
  enum class MembershipMode {
    kClosedForm,         // ball, box, ellipsoid, slab, halfspace-pair
    kFacets,             // 2D polytope, exact hull facets
    kLinearFeasibility,  // polytope in higher dimension
    kDelegate,           // structurally equivalent exact body
    kDistBall,           // dist(x, base) <= radius
    kNet,                // direction net with refinement, approximate
  };

  // Structural fields; construct only through the factory functions.
  BodyKind kind_;
  int dim_ = 0;
  double radius_ = 0.0;                 // ball
  std::vector<double> half_widths_;     // box
  std::vector<double> semi_axes_;       // ellipsoid
  std::vector<double> gens_;            // sym-polytope generators, m x dim
  int gen_count_ = 0;
  int axis_ = 0;                        // slab, halfspace-pair
  double slab_half_width_ = 0.0;
  double radial_cap_ = 0.0;
  double offset_ = 0.0;                 // halfspace-pair
  double lambda_ = 0.0;                 // combinations
  double dilate_t_ = 0.0;               // dilate
  std::vector<BodyPtr> children_;

  bool sym_ = true, convex_ = true, star_ = true;

  // Resolved membership strategy.
  MembershipMode mode_ = MembershipMode::kClosedForm;
  BodyPtr delegate_;
  BodyPtr dist_base_;
  double dist_radius_ = 0.0;
  std::vector<double> all_vertices_;    // symmetrized 2m x dim (polytope)
  std::vector<double> facet_normals_;   // 2D facets
  std::vector<double> facet_offsets_;
  const DirectionNet* net_ = nullptr;
  BodyPtr net_eval_;                    // simplified body driving net tests
  std::vector<double> net_h_;
  double net_rmax_ = 0.0;
  bool approx_ = false;
  double net_res_ = 0.0;

  BodyKind kind() const { return kind_; }
  int dim() const { return dim_; }
  bool is_origin_symmetric() const { return sym_; }
  bool is_convex() const { return convex_; }
  bool is_star_shaped() const { return star_; }
  bool membership_approximate() const { return approx_; }
  double net_resolution() const { return net_res_; }
  MembershipMode membership_mode() const { return mode_; }

  double radius() const { return radius_; }
  const std::vector<double>& half_widths() const { return half_widths_; }
  const std::vector<double>& semi_axes() const { return semi_axes_; }
  int vertex_count() const { return gen_count_; }
  const std::vector<double>& vertex_data() const { return gens_; }
  int axis() const { return axis_; }
  double slab_half_width() const { return slab_half_width_; }
  double radial_cap() const { return radial_cap_; }
  double offset() const { return offset_; }
  double lambda() const { return lambda_; }
  double dilate_factor() const { return dilate_t_; }
  const std::vector<BodyPtr>& children() const { return children_; }

  // Support function against a unit direction; +inf where unbounded.  For a
  // geometric mean this evaluates the defining halfspace family
  // h_K^lambda h_L^(1-lambda), an upper bound for the true support.
  double support_dir(const double* th) const {
    switch (kind_) {
      case BodyKind::kBall:
        return radius_;
      case BodyKind::kBox: {
        double s = 0.0;
        for (int i = 0; i < dim_; ++i) s += half_widths_[i] * std::fabs(th[i]);
        return s;
      }
      case BodyKind::kEllipsoid: {
        double s = 0.0;
        for (int i = 0; i < dim_; ++i) {
          double t = semi_axes_[i] * th[i];
          s += t * t;
        }
        return std::sqrt(s);
      }
      case BodyKind::kSymPolytope: {
        double best = 0.0;
        for (int j = 0; j < gen_count_; ++j) {
          double v = std::fabs(detail::dot(gens_.data() + size_t(j) * dim_, th, dim_));
          if (v > best) best = v;
        }
        return best;
      }
      case BodyKind::kSlab: {
        double p2 = 0.0;
        for (int i = 0; i < dim_; ++i)
          if (i != axis_) p2 += th[i] * th[i];
        return slab_half_width_ * std::fabs(th[axis_]) + radial_cap_ * std::sqrt(p2);
      }
      case BodyKind::kHalfspacePair:
        return (th[axis_] >= 1.0 - 1e-12) ? offset_ : kInf;
      case BodyKind::kMinkowskiCombo:
        return lambda_ * children_[0]->support_dir(th) +
               (1.0 - lambda_) * children_[1]->support_dir(th);
      case BodyKind::kGeometricMean: {
        double a = children_[0]->support_dir(th);
        double b = children_[1]->support_dir(th);
        return std::exp(lambda_ * std::log(a) + (1.0 - lambda_) * std::log(b));
      }
      case BodyKind::kDilate:
        return dilate_t_ * children_[0]->support_dir(th);
    }
    return 0.0;
  }

  double support(const Direction& th) const {
    if (th.dim() != dim_) throw std::invalid_argument("support: dimension mismatch");
    return support_dir(th.data());
  }

  bool contains_raw(const double* x) const;
  bool contains(const std::vector<double>& x) const {
    if (int(x.size()) != dim_) throw std::invalid_argument("contains: dimension mismatch");
    return contains_raw(x.data());
  }
  MembershipInfo contains_info(const std::vector<double>& x) const {
    return {contains(x), approx_, net_res_};
  }

  double radial_dir(const double* th) const;
  double radial(const Direction& th) const {
    if (th.dim() != dim_) throw std::invalid_argument("radial: dimension mismatch");
    if (!star_) throw std::logic_error("radial: body is not star-shaped");
    return radial_dir(th.data());
  }
};

namespace detail {

inline bool same_structure(const Body& a, const Body& b) {
  if (a.kind_ != b.kind_ || a.dim_ != b.dim_) return false;
  if (a.radius_ != b.radius_ || a.half_widths_ != b.half_widths_ ||
      a.semi_axes_ != b.semi_axes_ || a.gens_ != b.gens_ ||
      a.axis_ != b.axis_ || a.slab_half_width_ != b.slab_half_width_ ||
      a.radial_cap_ != b.radial_cap_ || a.offset_ != b.offset_ ||
      a.lambda_ != b.lambda_ || a.dilate_t_ != b.dilate_t_)
    return false;
  if (a.children_.size() != b.children_.size()) return false;
  for (size_t i = 0; i < a.children_.size(); ++i)
    if (!same_structure(*a.children_[i], *b.children_[i])) return false;
  return true;
}

inline bool has_soft_node(const Body& b) {
  if (b.kind_ == BodyKind::kMinkowskiCombo || b.kind_ == BodyKind::kGeometricMean)
    return true;
  for (const auto& c : b.children_)
    if (has_soft_node(*c)) return true;
  return false;
}

inline bool has_geomean_node(const Body& b) {
  if (b.kind_ == BodyKind::kGeometricMean) return true;
  for (const auto& c : b.children_)
    if (has_geomean_node(*c)) return true;
  return false;
}

// Scale a simplified body by t > 0 about the origin, structurally.
inline BodyPtr scale_body(double t, const BodyPtr& s) {
  switch (s->kind_) {
    case BodyKind::kBall:
      return ball(s->dim_, t * s->radius_);
    case BodyKind::kBox: {
      auto hw = s->half_widths_;
      for (double& v : hw) v *= t;
      return box(std::move(hw));
    }
    case BodyKind::kEllipsoid: {
      auto ax = s->semi_axes_;
      for (double& v : ax) v *= t;
      return ellipsoid(std::move(ax));
    }
    case BodyKind::kSymPolytope: {
      std::vector<std::vector<double>> vv(s->gen_count_);
      for (int j = 0; j < s->gen_count_; ++j) {
        vv[j].assign(s->gens_.begin() + size_t(j) * s->dim_,
                     s->gens_.begin() + size_t(j + 1) * s->dim_);
        for (double& v : vv[j]) v *= t;
      }
      return sym_polytope(s->dim_, vv);
    }
    case BodyKind::kSlab:
      return slab(s->dim_, s->axis_, t * s->slab_half_width_, t * s->radial_cap_);
    case BodyKind::kHalfspacePair:
      return halfspace_pair(s->dim_, s->axis_, t * s->offset_);
    case BodyKind::kMinkowskiCombo:
      return minkowski_combine(s->lambda_, scale_body(t, s->children_[0]),
                               scale_body(t, s->children_[1]));
    case BodyKind::kGeometricMean:
      return geometric_mean(s->lambda_, scale_body(t, s->children_[0]),
                            scale_body(t, s->children_[1]));
    case BodyKind::kDilate:
      return scale_body(t * s->dilate_t_, s->children_[0]);
  }
  throw std::logic_error("scale_body: unreachable");
}

inline std::vector<std::vector<double>> generators_of(const Body& b) {
  std::vector<std::vector<double>> g;
  if (b.kind_ == BodyKind::kSymPolytope) {
    g.resize(b.gen_count_);
    for (int j = 0; j < b.gen_count_; ++j)
      g[j].assign(b.gens_.begin() + size_t(j) * b.dim_,
                  b.gens_.begin() + size_t(j + 1) * b.dim_);
  } else if (b.kind_ == BodyKind::kBox) {
    // All sign patterns with the first coordinate pinned positive.
    int n = b.dim_;
    int m = 1 << (n - 1);
    g.resize(m, std::vector<double>(n));
    for (int s = 0; s < m; ++s) {
      g[s][0] = b.half_widths_[0];
      for (int i = 1; i < n; ++i)
        g[s][i] = ((s >> (i - 1)) & 1) ? -b.half_widths_[i] : b.half_widths_[i];
    }
  }
  return g;
}

}  // namespace detail

// -------------------------------------------------------------- simplify

// Structural canonicalization: returns a body with the same point set whose
// tree is no larger; exact-kind rewrites eliminate combination nodes where a
// closed form exists.  Serialization always reflects the constructed tree,
// never the simplified one.
inline BodyPtr simplify(const BodyPtr& b) {
  switch (b->kind_) {
    case BodyKind::kDilate: {
      BodyPtr c = simplify(b->children_[0]);
      return detail::scale_body(b->dilate_t_, c);
    }
    case BodyKind::kMinkowskiCombo: {
      BodyPtr k = simplify(b->children_[0]);
      BodyPtr l = simplify(b->children_[1]);
      double lam = b->lambda_;
      if (detail::same_structure(*k, *l) && k->convex_) return k;
      // Canonical order: a lone ball goes second.
      if (k->kind_ == BodyKind::kBall && l->kind_ != BodyKind::kBall) {
        std::swap(k, l);
        lam = 1.0 - lam;
      }
      if (k->kind_ == BodyKind::kBall && l->kind_ == BodyKind::kBall)
        return ball(k->dim_, lam * k->radius_ + (1.0 - lam) * l->radius_);
      if (k->kind_ == BodyKind::kBox && l->kind_ == BodyKind::kBox) {
        std::vector<double> hw(k->dim_);
        for (int i = 0; i < k->dim_; ++i)
          hw[i] = lam * k->half_widths_[i] + (1.0 - lam) * l->half_widths_[i];
        return box(std::move(hw));
      }
      if (k->kind_ == BodyKind::kEllipsoid && l->kind_ == BodyKind::kEllipsoid) {
        bool prop = true;
        double r0 = k->semi_axes_[0] / l->semi_axes_[0];
        for (int i = 1; i < k->dim_; ++i) {
          double ri = k->semi_axes_[i] / l->semi_axes_[i];
          if (std::fabs(ri - r0) > 1e-12 * (1.0 + std::fabs(r0))) prop = false;
        }
        if (prop) {
          std::vector<double> ax(k->dim_);
          for (int i = 0; i < k->dim_; ++i)
            ax[i] = lam * k->semi_axes_[i] + (1.0 - lam) * l->semi_axes_[i];
          return ellipsoid(std::move(ax));
        }
      }
      // A halfspace absorbs any partner with finite support along its axis.
      for (int side = 0; side < 2; ++side) {
        const BodyPtr& h = side == 0 ? k : l;
        const BodyPtr& o = side == 0 ? l : k;
        double ch = side == 0 ? lam : 1.0 - lam;
        double co = 1.0 - ch;
        if (h->kind_ != BodyKind::kHalfspacePair) continue;
        std::vector<double> e(h->dim_, 0.0);
        e[h->axis_] = 1.0;
        double ho = o->support_dir(e.data());
        if (!std::isfinite(ho))
          throw std::invalid_argument("minkowski_combine: unbounded combination");
        return halfspace_pair(h->dim_, h->axis_, ch * h->offset_ + co * ho);
      }
      // Fold a ball into a combo that already carries one.
      if (l->kind_ == BodyKind::kBall && k->kind_ == BodyKind::kMinkowskiCombo &&
          k->children_[1]->kind_ == BodyKind::kBall) {
        double mu = k->lambda_;
        double rho1 = k->children_[1]->radius_;
        double lam2 = lam * mu;
        if (lam2 > 0.0 && lam2 < 1.0) {
          double rho2 = (lam * (1.0 - mu) * rho1 + (1.0 - lam) * l->radius_) /
                        (1.0 - lam2);
          return minkowski_combine(lam2, k->children_[0], ball(l->dim_, rho2));
        }
      }
      // Reassociate a nested ball summand to the top level:
      //   lam (mu X + (1-mu) B) + (1-lam) Y  =  t (s X + (1-s) Y) + (1-t) B
      // with t = 1 - lam (1-mu), s = lam mu / t.  The inner pair may then
      // fold on its own (box+box, generator products, ...), and the outer
      // node becomes base + ball, which has exact distance membership.
      for (int side = 0; side < 2; ++side) {
        const BodyPtr& c = side == 0 ? k : l;
        const BodyPtr& o = side == 0 ? l : k;
        double cc = side == 0 ? lam : 1.0 - lam;
        if (c->kind_ != BodyKind::kMinkowskiCombo ||
            c->children_[1]->kind_ != BodyKind::kBall)
          continue;
        double mu = c->lambda_;
        double t = 1.0 - cc * (1.0 - mu);
        if (!(t > 0.0 && t < 1.0)) continue;
        double s = cc * mu / t;
        if (!(s > 0.0 && s < 1.0)) continue;
        BodyPtr inner = minkowski_combine(s, c->children_[0], o);
        return simplify(minkowski_combine(t, inner, c->children_[1]));
      }
      // Product generators for modest polytope (or box) pairs.
      {
        auto gk = detail::generators_of(*k);
        auto gl = detail::generators_of(*l);
        if (!gk.empty() && !gl.empty() &&
            2 * gk.size() * gl.size() <= 128) {
          std::vector<std::vector<double>> gens;
          gens.reserve(2 * gk.size() * gl.size());
          for (const auto& a : gk)
            for (const auto& bb : gl)
              for (int sgn = -1; sgn <= 1; sgn += 2) {
                std::vector<double> v(k->dim_);
                for (int i = 0; i < k->dim_; ++i)
                  v[i] = lam * a[i] + sgn * (1.0 - lam) * bb[i];
                gens.push_back(std::move(v));
              }
          std::sort(gens.begin(), gens.end());
          gens.erase(std::unique(gens.begin(), gens.end()), gens.end());
          return sym_polytope(k->dim_, gens);
        }
      }
      if (k == b->children_[0] && l == b->children_[1]) return b;
      return minkowski_combine(lam, k, l);
    }
    case BodyKind::kGeometricMean: {
      BodyPtr k = simplify(b->children_[0]);
      BodyPtr l = simplify(b->children_[1]);
      if (detail::same_structure(*k, *l)) return k;
      if (k == b->children_[0] && l == b->children_[1]) return b;
      return geometric_mean(b->lambda_, k, l);
    }
    default:
      return b;
  }
}

// ---------------------------------------------------------- net membership

namespace detail {

inline bool net_decide(const Body& eval, const DirectionNet& net,
                       const std::vector<double>& net_h, double net_rmax,
                       const double* x) {
  int n = net.dim;
  double m_hat = kInf;
  int m_idx = 0;
  for (int i = 0; i < net.count; ++i) {
    double f = net_h[i] - dot(x, net.dirs.data() + size_t(i) * n, n);
    if (f < m_hat) {
      m_hat = f;
      m_idx = i;
      if (f < 0.0) return false;  // separating direction found: outside
    }
  }
  double band = net.covering_radius * (net_rmax + norm(x, n));
  if (m_hat >= band) return true;  // Lipschitz bound: no direction can dip below 0

  // Multi-start refinement: perturb the most promising net directions inside
  // shrinking caps; any candidate with f < 0 certifies outside.
  (void)m_idx;
  int nseed = std::min(16, net.count);
  std::vector<int> order(net.count);
  for (int i = 0; i < net.count; ++i) order[i] = i;
  std::partial_sort(order.begin(), order.begin() + nseed, order.end(),
                    [&](int a, int bb) {
                      double fa = net_h[a] - dot(x, net.dirs.data() + size_t(a) * n, n);
                      double fb = net_h[bb] - dot(x, net.dirs.data() + size_t(bb) * n, n);
                      return fa < fb;
                    });
  struct Cand {
    double f;
    std::vector<double> d;
  };
  std::vector<Cand> seeds;
  for (int s = 0; s < nseed; ++s) {
    const double* d = net.dirs.data() + size_t(order[s]) * n;
    seeds.push_back({net_h[order[s]] - dot(x, d, n), std::vector<double>(d, d + n)});
  }
  const uint64_t kRefineStream = 0x726566696e650000ull;
  double cap = net.covering_radius;
  double best = m_hat;
  std::vector<double> z(n), cand(n);
  for (int round = 0; round < 4; ++round) {
    int per = int(96 / seeds.size());
    std::vector<Cand> pool = seeds;
    for (size_t s = 0; s < seeds.size(); ++s) {
      for (int j = 0; j < per; ++j) {
        int64_t idx = (int64_t(round) << 20) | (int64_t(s) << 10) | j;
        gaussian_point(kRefineStream, idx, n, z.data());
        double zn = norm(z.data(), n);
        if (zn < 1e-12) continue;
        for (int d = 0; d < n; ++d) cand[d] = seeds[s].d[d] + cap * z[d] / zn;
        double cn = norm(cand.data(), n);
        for (int d = 0; d < n; ++d) cand[d] /= cn;
        double f = eval.support_dir(cand.data()) - dot(x, cand.data(), n);
        if (f < 0.0) return false;
        if (f < best) best = f;
        pool.push_back({f, cand});
      }
    }
    std::sort(pool.begin(), pool.end(),
              [](const Cand& a, const Cand& bb) { return a.f < bb.f; });
    seeds.assign(pool.begin(), pool.begin() + std::min<size_t>(4, pool.size()));
    cap *= 0.25;
  }
  return best >= 0.0;
}

}  // namespace detail

inline bool Body::contains_raw(const double* x) const {
  switch (mode_) {
    case MembershipMode::kClosedForm:
      switch (kind_) {
        case BodyKind::kBall:
          return detail::dot(x, x, dim_) <= radius_ * radius_;
        case BodyKind::kBox:
          for (int i = 0; i < dim_; ++i)
            if (std::fabs(x[i]) > half_widths_[i]) return false;
          return true;
        case BodyKind::kEllipsoid: {
          double s = 0.0;
          for (int i = 0; i < dim_; ++i)
            s += (x[i] * x[i]) / (semi_axes_[i] * semi_axes_[i]);
          return s <= 1.0;
        }
        case BodyKind::kSlab: {
          if (std::fabs(x[axis_]) > slab_half_width_) return false;
          double p2 = 0.0;
          for (int i = 0; i < dim_; ++i)
            if (i != axis_) p2 += x[i] * x[i];
          return p2 <= radial_cap_ * radial_cap_;
        }
        case BodyKind::kHalfspacePair:
          return x[axis_] <= offset_;
        default:
          break;
      }
      return false;
    case MembershipMode::kFacets: {
      int f = int(facet_offsets_.size());
      for (int i = 0; i < f; ++i) {
        double v = facet_normals_[2 * i] * x[0] + facet_normals_[2 * i + 1] * x[1];
        if (v > facet_offsets_[i]) return false;
      }
      return true;
    }
    case MembershipMode::kLinearFeasibility: {
      // Mirror to a canonical representative so x and -x take one code path.
      std::vector<double> xc(x, x + dim_);
      for (int i = 0; i < dim_; ++i) {
        if (xc[i] != 0.0) {
          if (xc[i] < 0.0)
            for (int j = 0; j < dim_; ++j) xc[j] = -xc[j];
          break;
        }
      }
      return detail::in_convex_hull_lp(all_vertices_, int(all_vertices_.size()) / dim_,
                                       dim_, xc.data());
    }
    case MembershipMode::kDelegate:
      return delegate_->contains_raw(x);
    case MembershipMode::kDistBall: {
      const Body& base = *dist_base_;
      double d = 0.0;
      switch (base.kind_) {
        case BodyKind::kBall:
          d = std::max(0.0, detail::norm(x, dim_) - base.radius_);
          break;
        case BodyKind::kBox:
          d = detail::dist_to_box(base.half_widths_, x, dim_);
          break;
        case BodyKind::kEllipsoid:
          d = detail::dist_to_ellipsoid(base.semi_axes_, x, dim_);
          break;
        case BodyKind::kSlab:
          d = detail::dist_to_slab(base.axis_, base.slab_half_width_,
                                   base.radial_cap_, x, dim_);
          break;
        case BodyKind::kSymPolytope: {
          std::vector<double> xc(x, x + dim_);
          for (int i = 0; i < dim_; ++i) {
            if (xc[i] != 0.0) {
              if (xc[i] < 0.0)
                for (int j = 0; j < dim_; ++j) xc[j] = -xc[j];
              break;
            }
          }
          int M = int(base.all_vertices_.size()) / dim_;
          std::vector<double> q(base.all_vertices_);
          for (int j = 0; j < M; ++j)
            for (int i = 0; i < dim_; ++i) q[size_t(j) * dim_ + i] -= xc[i];
          d = detail::min_norm_point(q, M, dim_);
          break;
        }
        default:
          throw std::logic_error("contains: unsupported dist-ball base");
      }
      return d <= dist_radius_;
    }
    case MembershipMode::kNet: {
      std::vector<double> xc(x, x + dim_);
      if (sym_) {
        for (int i = 0; i < dim_; ++i) {
          if (xc[i] != 0.0) {
            if (xc[i] < 0.0)
              for (int j = 0; j < dim_; ++j) xc[j] = -xc[j];
            break;
          }
        }
      }
      return detail::net_decide(net_eval_ ? *net_eval_ : *this, *net_, net_h_,
                                net_rmax_, xc.data());
    }
  }
  return false;
}

inline double Body::radial_dir(const double* th) const {
  switch (kind_) {
    case BodyKind::kBall:
      return radius_;
    case BodyKind::kBox: {
      double r = kInf;
      for (int i = 0; i < dim_; ++i)
        if (th[i] != 0.0) r = std::min(r, half_widths_[i] / std::fabs(th[i]));
      return r;
    }
    case BodyKind::kEllipsoid: {
      double s = 0.0;
      for (int i = 0; i < dim_; ++i) {
        double t = th[i] / semi_axes_[i];
        s += t * t;
      }
      return 1.0 / std::sqrt(s);
    }
    case BodyKind::kSlab: {
      double r = kInf;
      if (th[axis_] != 0.0) r = slab_half_width_ / std::fabs(th[axis_]);
      double p2 = 0.0;
      for (int i = 0; i < dim_; ++i)
        if (i != axis_) p2 += th[i] * th[i];
      if (p2 > 0.0) r = std::min(r, radial_cap_ / std::sqrt(p2));
      return r;
    }
    case BodyKind::kHalfspacePair:
      return (th[axis_] > 0.0) ? offset_ / th[axis_] : kInf;
    case BodyKind::kSymPolytope:
      if (mode_ == MembershipMode::kFacets) {
        double r = kInf;
        int f = int(facet_offsets_.size());
        for (int i = 0; i < f; ++i) {
          double d = facet_normals_[2 * i] * th[0] + facet_normals_[2 * i + 1] * th[1];
          if (d > 0.0) r = std::min(r, facet_offsets_[i] / d);
        }
        return r;
      }
      break;
    case BodyKind::kDilate:
      return dilate_t_ * children_[0]->radial_dir(th);
    default:
      break;
  }
  if (mode_ == MembershipMode::kDelegate) return delegate_->radial_dir(th);
  // Bisection on membership along the ray; the support value bounds the
  // radial function of a convex body containing the origin.
  double hi = support_dir(th);
  if (!std::isfinite(hi)) hi = 1e8;
  hi = hi * (1.0 + 1e-9) + 1e-12;
  double lo = 0.0;
  std::vector<double> pt(dim_);
  for (int it = 0; it < 80 && hi - lo > 1e-10 * (1.0 + hi); ++it) {
    double mid = 0.5 * (lo + hi);
    for (int i = 0; i < dim_; ++i) pt[i] = mid * th[i];
    if (contains_raw(pt.data())) lo = mid; else hi = mid;
  }
  return 0.5 * (lo + hi);
}

// ---------------------------------------------------------------- plans

namespace detail {

inline void build_composite_plan(Body& b, const BodyPtr& self) {
  BodyPtr s = simplify(self);
  if (!has_soft_node(*s)) {
    b.mode_ = Body::MembershipMode::kDelegate;
    b.delegate_ = s;
    // Geometric means drop out of a delegate in two ways: an exact
    // equal-operand collapse, or halfspace absorption, which bakes the mean's
    // outer support bound into the blended offset.  Only the latter taints
    // the result.
    b.approx_ = s->kind_ == BodyKind::kHalfspacePair && has_geomean_node(b);
    return;
  }
  if (s->kind_ == BodyKind::kMinkowskiCombo) {
    const BodyPtr& c0 = s->children_[0];
    const BodyPtr& c1 = s->children_[1];
    auto base_ok = [](BodyKind k) {
      return k == BodyKind::kBox || k == BodyKind::kEllipsoid ||
             k == BodyKind::kSymPolytope || k == BodyKind::kSlab;
    };
    if (c1->kind_ == BodyKind::kBall && base_ok(c0->kind_) && !has_soft_node(*c0)) {
      b.mode_ = Body::MembershipMode::kDistBall;
      b.dist_base_ = scale_body(s->lambda_, c0);
      b.dist_radius_ = (1.0 - s->lambda_) * c1->radius_;
      b.approx_ = false;
      return;
    }
    if (c0->kind_ == BodyKind::kBall && base_ok(c1->kind_) && !has_soft_node(*c1)) {
      b.mode_ = Body::MembershipMode::kDistBall;
      b.dist_base_ = scale_body(1.0 - s->lambda_, c1);
      b.dist_radius_ = s->lambda_ * c0->radius_;
      b.approx_ = false;
      return;
    }
  }
  const DirectionNet& net = direction_net(b.dim_);
  b.mode_ = Body::MembershipMode::kNet;
  b.net_ = &net;
  // Holding a pointer to itself would leak the node; contains_raw falls back
  // to `this` when the simplified form is the node itself.
  b.net_eval_ = (s.get() == &b) ? nullptr : s;
  b.net_h_.resize(net.count);
  b.net_rmax_ = 0.0;
  for (int i = 0; i < net.count; ++i) {
    double h = s->support_dir(net.dirs.data() + size_t(i) * b.dim_);
    if (!std::isfinite(h))
      throw std::invalid_argument("membership net: body unbounded in some direction");
    b.net_h_[i] = h;
    b.net_rmax_ = std::max(b.net_rmax_, h);
  }
  b.approx_ = true;
  b.net_res_ = net.covering_radius;
}

inline void require_dim(int dim) {
  if (dim < 1 || dim > 64) throw std::invalid_argument("body dimension out of range");
}

inline int rank_of(const std::vector<double>& pts, int m, int n) {
  std::vector<std::vector<double>> basis;
  double scale = 1e-30;
  for (double v : pts) scale = std::max(scale, std::fabs(v));
  for (int j = 0; j < m && int(basis.size()) < n; ++j) {
    std::vector<double> v(pts.begin() + size_t(j) * n, pts.begin() + size_t(j + 1) * n);
    for (const auto& e : basis) {
      double c = dot(v.data(), e.data(), n);
      for (int i = 0; i < n; ++i) v[i] -= c * e[i];
    }
    double nn = norm(v.data(), n);
    if (nn > 1e-10 * scale) {
      for (int i = 0; i < n; ++i) v[i] /= nn;
      basis.push_back(std::move(v));
    }
  }
  return int(basis.size());
}

}  // namespace detail

// -------------------------------------------------------------- factories

inline BodyPtr ball(int dim, double radius) {
  detail::require_dim(dim);
  if (!(radius > 0.0)) throw std::invalid_argument("ball: radius must be positive");
  auto b = std::make_shared<Body>();
  b->kind_ = BodyKind::kBall;
  b->dim_ = dim;
  b->radius_ = radius;
  b->mode_ = Body::MembershipMode::kClosedForm;
  return b;
}

inline BodyPtr box(std::vector<double> half_widths) {
  int dim = int(half_widths.size());
  detail::require_dim(dim);
  for (double v : half_widths)
    if (!(v > 0.0)) throw std::invalid_argument("box: half-widths must be positive");
  auto b = std::make_shared<Body>();
  b->kind_ = BodyKind::kBox;
  b->dim_ = dim;
  b->half_widths_ = std::move(half_widths);
  b->mode_ = Body::MembershipMode::kClosedForm;
  return b;
}

inline BodyPtr ellipsoid(std::vector<double> semi_axes) {
  int dim = int(semi_axes.size());
  detail::require_dim(dim);
  for (double v : semi_axes)
    if (!(v > 0.0)) throw std::invalid_argument("ellipsoid: semi-axes must be positive");
  auto b = std::make_shared<Body>();
  b->kind_ = BodyKind::kEllipsoid;
  b->dim_ = dim;
  b->semi_axes_ = std::move(semi_axes);
  b->mode_ = Body::MembershipMode::kClosedForm;
  return b;
}

inline BodyPtr sym_polytope(int dim, const std::vector<std::vector<double>>& vertices) {
  detail::require_dim(dim);
  if (vertices.empty()) throw std::invalid_argument("sym-polytope: no vertices");
  auto b = std::make_shared<Body>();
  b->kind_ = BodyKind::kSymPolytope;
  b->dim_ = dim;
  b->gen_count_ = int(vertices.size());
  b->gens_.reserve(vertices.size() * dim);
  for (const auto& v : vertices) {
    if (int(v.size()) != dim)
      throw std::invalid_argument("sym-polytope: vertex dimension mismatch");
    b->gens_.insert(b->gens_.end(), v.begin(), v.end());
  }
  b->all_vertices_.resize(2 * b->gens_.size());
  std::copy(b->gens_.begin(), b->gens_.end(), b->all_vertices_.begin());
  for (size_t i = 0; i < b->gens_.size(); ++i)
    b->all_vertices_[b->gens_.size() + i] = -b->gens_[i];
  if (detail::rank_of(b->gens_, b->gen_count_, dim) < dim)
    throw std::invalid_argument("sym-polytope: vertices do not span the space");
  if (dim == 2) {
    detail::hull2d_facets(b->all_vertices_, &b->facet_normals_, &b->facet_offsets_);
    b->mode_ = Body::MembershipMode::kFacets;
  } else {
    b->mode_ = Body::MembershipMode::kLinearFeasibility;
  }
  return b;
}

inline BodyPtr slab(int dim, int axis, double half_width, double radial_cap) {
  detail::require_dim(dim);
  if (dim < 2) throw std::invalid_argument("slab: dimension must be at least 2");
  if (axis < 0 || axis >= dim) throw std::invalid_argument("slab: axis out of range");
  if (!(half_width > 0.0) || !(radial_cap > 0.0))
    throw std::invalid_argument("slab: half-width and radial cap must be positive");
  auto b = std::make_shared<Body>();
  b->kind_ = BodyKind::kSlab;
  b->dim_ = dim;
  b->axis_ = axis;
  b->slab_half_width_ = half_width;
  b->radial_cap_ = radial_cap;
  b->mode_ = Body::MembershipMode::kClosedForm;
  return b;
}

inline BodyPtr halfspace_pair(int dim, int axis, double offset) {
  detail::require_dim(dim);
  if (axis < 0 || axis >= dim)
    throw std::invalid_argument("halfspace-pair: axis out of range");
  if (!std::isfinite(offset))
    throw std::invalid_argument("halfspace-pair: offset must be finite");
  auto b = std::make_shared<Body>();
  b->kind_ = BodyKind::kHalfspacePair;
  b->dim_ = dim;
  b->axis_ = axis;
  b->offset_ = offset;
  b->sym_ = false;
  b->star_ = offset >= 0.0;
  b->mode_ = Body::MembershipMode::kClosedForm;
  return b;
}

inline BodyPtr minkowski_combine(double lambda, BodyPtr K, BodyPtr L) {
  if (!(lambda > 0.0 && lambda < 1.0))
    throw std::invalid_argument("minkowski_combine: lambda must lie strictly in (0,1)");
  if (!K || !L) throw std::invalid_argument("minkowski_combine: null operand");
  if (K->dim_ != L->dim_)
    throw std::invalid_argument("minkowski_combine: dimension mismatch");
  auto b = std::make_shared<Body>();
  b->kind_ = BodyKind::kMinkowskiCombo;
  b->dim_ = K->dim_;
  b->lambda_ = lambda;
  b->sym_ = K->sym_ && L->sym_;
  b->convex_ = K->convex_ && L->convex_;
  b->star_ = K->star_ && L->star_;
  b->children_ = {std::move(K), std::move(L)};
  detail::build_composite_plan(*b, b);
  return b;
}

inline BodyPtr geometric_mean(double lambda, BodyPtr K, BodyPtr L) {
  if (!(lambda > 0.0 && lambda < 1.0))
    throw std::invalid_argument("geometric_mean: lambda must lie strictly in (0,1)");
  if (!K || !L) throw std::invalid_argument("geometric_mean: null operand");
  if (K->dim_ != L->dim_)
    throw std::invalid_argument("geometric_mean: dimension mismatch");
  if (!K->sym_ || !L->sym_)
    throw std::invalid_argument("geometric_mean: operands must be origin-symmetric");
  auto b = std::make_shared<Body>();
  b->kind_ = BodyKind::kGeometricMean;
  b->dim_ = K->dim_;
  b->lambda_ = lambda;
  b->children_ = {std::move(K), std::move(L)};
  detail::build_composite_plan(*b, b);
  return b;
}

inline BodyPtr dilate(double t, BodyPtr K) {
  if (!(t > 0.0)) throw std::invalid_argument("dilate: factor must be positive");
  if (!K) throw std::invalid_argument("dilate: null operand");
  auto b = std::make_shared<Body>();
  b->kind_ = BodyKind::kDilate;
  b->dim_ = K->dim_;
  b->dilate_t_ = t;
  b->sym_ = K->sym_;
  b->convex_ = K->convex_;
  b->star_ = K->star_;
  b->children_ = {std::move(K)};
  detail::build_composite_plan(*b, b);
  return b;
}

}  // namespace gbm
