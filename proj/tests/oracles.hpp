#pragma once

// Independent reference computations used only by tests. None of these call
// into the library code they check.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "occ/geometry.hpp"
#include "occ/pcnn.hpp"

namespace oracle {

using occ::Vec3;

// Generalized winding number as the sum of signed solid angles, each from the
// spherical excess of the projected triangle (L'Huilier's formula).
inline double winding_number(const occ::TriangleMesh& mesh, const Vec3& q) {
  double total = 0.0;
  for (const auto& t : mesh.triangles) {
    const Vec3 a = (mesh.vertices[t[0]] - q).normalized();
    const Vec3 b = (mesh.vertices[t[1]] - q).normalized();
    const Vec3 c = (mesh.vertices[t[2]] - q).normalized();
    const double la = std::acos(std::clamp(b.dot(c), -1.0, 1.0));
    const double lb = std::acos(std::clamp(c.dot(a), -1.0, 1.0));
    const double lc = std::acos(std::clamp(a.dot(b), -1.0, 1.0));
    const double s = 0.5 * (la + lb + lc);
    const double prod = std::tan(s / 2) * std::tan((s - la) / 2) * std::tan((s - lb) / 2) * std::tan((s - lc) / 2);
    const double excess = 4.0 * std::atan(std::sqrt(std::max(prod, 0.0)));
    const double sign = a.dot(b.cross(c)) >= 0.0 ? 1.0 : -1.0;
    total += sign * excess;
  }
  return total / (4.0 * M_PI);
}

// Adaptive Gauss-Kronrod (7/15) on [a, b]. A panel is accepted once the
// Gauss/Kronrod difference is below `tol` or below rounding in its own value.
inline double gauss_kronrod(const std::function<double(double)>& f, double a, double b, double tol, int depth = 0) {
  static constexpr double xk[8] = {0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
                                   0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
                                   0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
                                   0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
  static constexpr double wk[8] = {0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
                                   0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
                                   0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
                                   0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
  static constexpr double wg[4] = {0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
                                   0.381830050505118944950369775488975, 0.417959183673469387755102040816327};
  const double c = 0.5 * (a + b), h = 0.5 * (b - a);
  double kron = wk[7] * f(c);
  double gauss = wg[3] * f(c);
  for (int i = 0; i < 7; ++i) {
    const double s = f(c - h * xk[i]) + f(c + h * xk[i]);
    kron += wk[i] * s;
    if (i % 2 == 1) gauss += wg[i / 2] * s;
  }
  kron *= h;
  gauss *= h;
  const double err = std::abs(kron - gauss);
  if (err <= tol || err <= 1e-14 * std::abs(kron) || depth > 30) return kron;
  return gauss_kronrod(f, a, c, tol / 2, depth + 1) + gauss_kronrod(f, c, b, tol / 2, depth + 1);
}

// Integral over R of exp(-(y-a)^2/s2) * exp(-(y-b)^2/s2), by quadrature on a
// window wide enough that the tails are below double precision.
inline double gaussian_pair_1d(double a, double b, double s2) {
  const double s = std::sqrt(s2);
  const double lo = std::min(a, b) - 12.0 * s, hi = std::max(a, b) + 12.0 * s;
  const auto f = [&](double y) { return std::exp(-(y - a) * (y - a) / s2) * std::exp(-(y - b) * (y - b) / s2); };
  return gauss_kronrod(f, lo, hi, 1e-13 * s);
}

// (R o O_K o E)(x) for one output channel, the volume integral of the extended
// field times each kernel Gaussian. Each (point, kernel element) term of the
// integrand is a product over axes, so the 3D integral is a product of 1D
// adaptive quadratures.
inline double extend_conv_restrict(const occ::pcnn::FeatureSet& src, const occ::pcnn::LayerParams& p, const Vec3& x,
                                   int k) {
  double acc = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    for (int m = 0; m < occ::pcnn::kKernelSize; ++m) {
      // Kernel element m centred at t_m, evaluated at x - y: exp(-|x - y - t_m|^2/s2).
      const Vec3 shifted = x - p.translation(m);
      double integral = 1.0;
      for (int a = 0; a < 3; ++a) integral *= gaussian_pair_1d(src.points[i][a], shifted[a], p.sigma2);
      double w = 0.0;
      for (int j = 0; j < p.in_channels; ++j) w += src.features(static_cast<Eigen::Index>(i), j) * p.weight(j, k, m);
      acc += w * integral;
    }
  }
  return p.bias(0, k) + acc;
}

// Full nested 3D adaptive quadrature of a single basis/kernel product; used
// to confirm the axis factorization above.
inline double gaussian_pair_3d(const Vec3& a, const Vec3& b, double s2) {
  const double s = std::sqrt(s2);
  const Vec3 lo = a.cwiseMin(b).array() - 8.0 * s, hi = a.cwiseMax(b).array() + 8.0 * s;
  const auto g = [&](const Vec3& y) { return std::exp(-(y - a).squaredNorm() / s2) * std::exp(-(y - b).squaredNorm() / s2); };
  return gauss_kronrod(
      [&](double z) {
        return gauss_kronrod(
            [&](double y) {
              return gauss_kronrod([&](double x) { return g(Vec3(x, y, z)); }, lo.x(), hi.x(), 1e-12);
            },
            lo.y(), hi.y(), 1e-11);
      },
      lo.z(), hi.z(), 1e-10);
}

inline double point_triangle_distance_bruteforce(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  // Interior projection if it falls inside, otherwise the closest edge point.
  const Vec3 n = (b - a).cross(c - a);
  const double nn = n.squaredNorm();
  const Vec3 proj = p - n * (n.dot(p - a) / nn);
  const double u = n.dot((c - b).cross(proj - b)) / nn;
  const double v = n.dot((a - c).cross(proj - c)) / nn;
  const double w = 1.0 - u - v;
  if (u >= 0 && v >= 0 && w >= 0) return (p - proj).norm();
  const auto seg = [&](const Vec3& s0, const Vec3& s1) {
    const Vec3 d = s1 - s0;
    const double t = std::clamp(d.dot(p - s0) / d.squaredNorm(), 0.0, 1.0);
    return (p - (s0 + t * d)).norm();
  };
  return std::min({seg(a, b), seg(b, c), seg(c, a)});
}

inline double nearest_distance_bruteforce(const occ::TriangleMesh& mesh, const Vec3& x) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t)
    best = std::min(best, point_triangle_distance_bruteforce(x, mesh.corner(t, 0), mesh.corner(t, 1), mesh.corner(t, 2)));
  return best;
}

// Greedy farthest-point selection by re-scanning every chosen point.
inline std::vector<std::size_t> fps_greedy(const std::vector<Vec3>& pts, std::size_t n, std::size_t start) {
  std::vector<std::size_t> chosen{start};
  while (chosen.size() < n) {
    double best = -1.0;
    std::size_t arg = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      double dmin = std::numeric_limits<double>::infinity();
      for (auto c : chosen) dmin = std::min(dmin, (pts[i] - pts[c]).squaredNorm());
      if (dmin > best) {
        best = dmin;
        arg = i;
      }
    }
    chosen.push_back(arg);
  }
  return chosen;
}

// Channel-wise max over the points whose nearest retained point is each slot.
inline occ::Matrix pool_bruteforce(const std::vector<Vec3>& pts, const occ::Matrix& f,
                                   const std::vector<std::size_t>& retained) {
  occ::Matrix out = occ::Matrix::Constant(static_cast<Eigen::Index>(retained.size()), f.cols(),
                                          -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    std::size_t owner = 0;
    for (std::size_t s = 1; s < retained.size(); ++s)
      if ((pts[i] - pts[retained[s]]).squaredNorm() < (pts[i] - pts[retained[owner]]).squaredNorm()) owner = s;
    for (Eigen::Index c = 0; c < f.cols(); ++c)
      out(static_cast<Eigen::Index>(owner), c) = std::max(out(static_cast<Eigen::Index>(owner), c), f(static_cast<Eigen::Index>(i), c));
  }
  return out;
}

// Central difference of f with respect to *x.
inline double central_difference(const std::function<double()>& f, double* x, double h = 1e-5) {
  const double saved = *x;
  *x = saved + h;
  const double up = f();
  *x = saved - h;
  const double down = f();
  *x = saved;
  return (up - down) / (2.0 * h);
}

// |a - b| relative to the larger magnitude, with `floor` guarding components
// that are zero up to rounding.
inline double relative_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace oracle
