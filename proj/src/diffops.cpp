#include "mechreg/diffops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "mechreg/error.hpp"

namespace mechreg {

namespace {

void require_min_extent(const Dims& d) {
  if (d.nx < 3 || d.ny < 3 || d.nz < 3) throw ShapeError("finite differences need at least 3 voxels per axis");
}

void require_spacing(const Spacing& s) {
  for (double v : s)
    if (!(v > 0.0)) throw ParameterError("millimeter form needs positive spacing");
}

}  // namespace

GradientField gradient(const VectorField& u) {
  const Dims d = u.dims();
  require_min_extent(d);
  GradientField g(d.count());
  const int n[3] = {d.nx, d.ny, d.nz};
  const std::size_t stride[3] = {d.stride(0), d.stride(1), d.stride(2)};
#pragma omp parallel for schedule(static)
  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x) {
        const int c[3] = {x, y, z};
        const std::size_t i = d.index(x, y, z);
        Mat3& gi = g[i];
        for (int a = 0; a < 3; ++a) {
          const std::size_t s = stride[a];
          if (c[a] == 0)
            gi.col(a) = u[i + s] - u[i];
          else if (c[a] == n[a] - 1)
            gi.col(a) = u[i] - u[i - s];
          else
            gi.col(a) = 0.5 * (u[i + s] - u[i - s]);
        }
      }
  return g;
}

void gradient_adjoint(const Dims& d, std::span<const Mat3> w, VectorField& out) {
  require_min_extent(d);
  if (w.size() != d.count() || !(out.dims() == d)) throw ShapeError("gradient_adjoint: size mismatch");
  const int n[3] = {d.nx, d.ny, d.nz};
  const std::size_t stride[3] = {d.stride(0), d.stride(1), d.stride(2)};
  // Gather form: each output voxel collects the stencil coefficients that
  // reference it, so the loop is race-free and order-independent.
#pragma omp parallel for schedule(static)
  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x) {
        const int c[3] = {x, y, z};
        const std::size_t i = d.index(x, y, z);
        Vec3 acc = Vec3::Zero();
        for (int a = 0; a < 3; ++a) {
          const std::size_t s = stride[a];
          const int ca = c[a];
          const int last = n[a] - 1;
          if (ca >= 1) acc += (ca - 1 == 0 ? 1.0 : 0.5) * w[i - s].col(a);
          if (ca <= last - 1) acc -= (ca + 1 == last ? 1.0 : 0.5) * w[i + s].col(a);
          if (ca == 0) acc -= w[i].col(a);
          if (ca == last) acc += w[i].col(a);
        }
        out[i] += acc;
      }
}

GradientScaling strain_scaling(const Spacing& s, Coordinates coords) {
  GradientScaling g;
  if (coords == Coordinates::millimeter) {
    require_spacing(s);
    g.left = Vec3(s[0], s[1], s[2]);
    g.right = Vec3(1.0 / s[0], 1.0 / s[1], 1.0 / s[2]);
  }
  return g;
}

GradientScaling jacobian_scaling(const Spacing& s, Coordinates coords) {
  GradientScaling g;
  if (coords == Coordinates::millimeter) {
    require_spacing(s);
    g.right = Vec3(1.0 / s[0], 1.0 / s[1], 1.0 / s[2]);
  }
  return g;
}

JacobianField jacobian(const DisplacementField& u, Coordinates coords, MmDiagonal diagonal) {
  JacobianField j;
  j.dims = u.dims();
  j.spacing = u.spacing();
  j.coords = coords;
  j.diagonal = diagonal;
  if (coords == Coordinates::millimeter) require_spacing(u.spacing());
  j.data = gradient(u);
  const Spacing& s = u.spacing();
  const Vec3 delta(s[0], s[1], s[2]);
  for (Mat3& m : j.data) {
    if (coords == Coordinates::voxel) {
      m += Mat3::Identity();
    } else if (diagonal == MmDiagonal::printed) {
      // diag(delta) + D G D^-1
      m = delta.asDiagonal() * m * delta.cwiseInverse().asDiagonal();
      m += Mat3(delta.asDiagonal());
    } else {
      m = Mat3::Identity() + m * delta.cwiseInverse().asDiagonal();
    }
  }
  return j;
}

ScalarVolume determinant(const JacobianField& j) {
  ScalarVolume out(j.dims, j.spacing);
  for (std::size_t i = 0; i < j.data.size(); ++i) out[i] = j.data[i].determinant();
  return out;
}

ScalarVolume log_det(const JacobianField& j, double eps) {
  if (!(eps > 0.0)) throw ParameterError("log_det: eps must be > 0");
  ScalarVolume out(j.dims, j.spacing);
  for (std::size_t i = 0; i < j.data.size(); ++i) out[i] = std::log(std::max(j.data[i].determinant(), eps));
  return out;
}

SymTensorField strain(const DisplacementField& u, Coordinates coords) {
  SymTensorField s;
  s.dims = u.dims();
  s.spacing = u.spacing();
  s.coords = coords;
  const GradientScaling scale = strain_scaling(u.spacing(), coords);
  const GradientField g = gradient(u);
  s.data.resize(g.size());
  for (std::size_t i = 0; i < g.size(); ++i)
    s.data[i] = SymTensor::symmetric_part(coords == Coordinates::voxel ? g[i] : scale.apply(g[i]));
  return s;
}

namespace {

Vec3 any_unit_orthogonal(const Vec3& v) {
  // Householder-style completion: pick the axis least aligned with v.
  int k = 0;
  if (std::abs(v[1]) < std::abs(v[k])) k = 1;
  if (std::abs(v[2]) < std::abs(v[k])) k = 2;
  Vec3 e = Vec3::Zero();
  e[k] = 1.0;
  return (e - e.dot(v) * v).normalized();
}

Vec3 eigenvector_of(const Mat3& a, double lambda) {
  const Mat3 m = a - lambda * Mat3::Identity();
  const Vec3 r0 = m.row(0), r1 = m.row(1), r2 = m.row(2);
  const Vec3 c[3] = {r0.cross(r1), r0.cross(r2), r1.cross(r2)};
  int best = 0;
  double best_n = c[0].squaredNorm();
  for (int k = 1; k < 3; ++k) {
    const double nk = c[k].squaredNorm();
    if (nk > best_n) {
      best = k;
      best_n = nk;
    }
  }
  if (best_n == 0.0) return Vec3::UnitX();
  return c[best] / std::sqrt(best_n);
}

void fix_sign(Vec3& v) {
  int k = 0;
  for (int i = 1; i < 3; ++i)
    if (std::abs(v[i]) > std::abs(v[k])) k = i;
  if (v[k] < 0.0) v = -v;
}

}  // namespace

EigenSystem eig_sym3(const Mat3& s_in) {
  const double scale = s_in.cwiseAbs().maxCoeff();
  if (!std::isfinite(scale)) throw DomainError("eig_sym3: non-finite input");
  const double asym = std::max({std::abs(s_in(0, 1) - s_in(1, 0)), std::abs(s_in(0, 2) - s_in(2, 0)),
                               std::abs(s_in(1, 2) - s_in(2, 1))});
  if (asym > 1e-12 * std::max(1.0, scale)) throw DomainError("eig_sym3: input is not symmetric");

  EigenSystem out;
  if (scale == 0.0) return out;

  // Work on a scaled, exactly symmetric copy.
  Mat3 a = 0.5 * (s_in + s_in.transpose()) / scale;

  const double q = a.trace() / 3.0;
  const double p1 = a(0, 1) * a(0, 1) + a(0, 2) * a(0, 2) + a(1, 2) * a(1, 2);
  const double p2 = (a(0, 0) - q) * (a(0, 0) - q) + (a(1, 1) - q) * (a(1, 1) - q) + (a(2, 2) - q) * (a(2, 2) - q) +
                    2.0 * p1;
  const double p = std::sqrt(p2 / 6.0);
  if (p == 0.0) {
    out.values = Vec3::Constant(q * scale);
    return out;
  }
  const Mat3 b = (a - q * Mat3::Identity()) / p;
  const double r = std::clamp(b.determinant() / 2.0, -1.0, 1.0);
  const double phi = std::acos(r) / 3.0;
  const double l1 = q + 2.0 * p * std::cos(phi);
  const double l3 = q + 2.0 * p * std::cos(phi + 2.0 * std::numbers::pi / 3.0);
  const double l2 = 3.0 * q - l1 - l3;

  // The eigenvalue farthest from the middle one is well separated; its vector
  // comes from row cross products, the remaining pair from a 2x2 rotation in
  // the orthogonal complement, which stays orthonormal when they coincide.
  const bool top_isolated = (l1 - l2) >= (l2 - l3);
  Vec3 v_iso = eigenvector_of(a, top_isolated ? l1 : l3);
  const Vec3 e1 = any_unit_orthogonal(v_iso);
  const Vec3 e2 = v_iso.cross(e1).normalized();
  const double m00 = e1.dot(a * e1), m11 = e2.dot(a * e2), m01 = e1.dot(a * e2);
  const double theta = 0.5 * std::atan2(2.0 * m01, m00 - m11);
  const double c = std::cos(theta), sn = std::sin(theta);
  Vec3 w_hi = c * e1 + sn * e2;
  Vec3 w_lo = -sn * e1 + c * e2;
  double lw_hi = w_hi.dot(a * w_hi), lw_lo = w_lo.dot(a * w_lo);
  if (lw_hi < lw_lo) {
    std::swap(w_hi, w_lo);
    std::swap(lw_hi, lw_lo);
  }
  const double l_iso = v_iso.dot(a * v_iso);

  Vec3 vals;
  Mat3 vecs;
  if (top_isolated) {
    vals << l_iso, lw_hi, lw_lo;
    vecs << v_iso, w_hi, w_lo;
  } else {
    vals << lw_hi, lw_lo, l_iso;
    vecs << w_hi, w_lo, v_iso;
  }
  // Rayleigh quotients can reorder by rounding when values tie.
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2 - i; ++j)
      if (vals[j] < vals[j + 1]) {
        std::swap(vals[j], vals[j + 1]);
        vecs.col(j).swap(vecs.col(j + 1));
      }
  for (int i = 0; i < 3; ++i) {
    Vec3 v = vecs.col(i);
    fix_sign(v);
    vecs.col(i) = v;
  }
  out.values = vals * scale;
  out.vectors = vecs;
  return out;
}

EigenSystem eig_sym3(const SymTensor& s) { return eig_sym3(s.matrix()); }

}  // namespace mechreg
