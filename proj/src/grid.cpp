#include "mechreg/grid.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mechreg/error.hpp"

namespace mechreg {

namespace {

void check_dims(const Dims& d) {
  if (d.nx <= 0 || d.ny <= 0 || d.nz <= 0) throw ShapeError("grid dimensions must be positive");
}

void check_spacing(const Spacing& s) {
  for (double v : s)
    if (!(v > 0.0) || !std::isfinite(v)) throw ParameterError("voxel spacing must be finite and > 0");
}

void require_same_dims(const Dims& a, const Dims& b, const char* what) {
  if (!(a == b)) {
    std::ostringstream os;
    os << what << ": dims mismatch (" << a.nx << "x" << a.ny << "x" << a.nz << " vs " << b.nx << "x" << b.ny
       << "x" << b.nz << ")";
    throw ShapeError(os.str());
  }
}

Vec3 voxel_position(const Dims& d, std::size_t i) { return d.coords(i).cast<double>(); }

}  // namespace

ScalarVolume::ScalarVolume(Dims dims, Spacing spacing, double fill)
    : dims_(dims), spacing_(spacing), data_(dims.count(), fill) {
  check_dims(dims);
  check_spacing(spacing);
}

ScalarVolume::ScalarVolume(Dims dims, Spacing spacing, std::vector<double> data)
    : dims_(dims), spacing_(spacing), data_(std::move(data)) {
  check_dims(dims);
  check_spacing(spacing);
  if (data_.size() != dims.count()) throw ShapeError("volume data length does not match dims");
}

void ScalarVolume::check_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) throw DataError("volume contains non-finite values");
}

VectorField::VectorField(Dims dims, Spacing spacing, const Vec3& fill)
    : dims_(dims), spacing_(spacing), data_(dims.count(), fill) {
  check_dims(dims);
  check_spacing(spacing);
}

VectorField::VectorField(Dims dims, Spacing spacing, std::vector<Vec3> data)
    : dims_(dims), spacing_(spacing), data_(std::move(data)) {
  check_dims(dims);
  check_spacing(spacing);
  if (data_.size() != dims.count()) throw ShapeError("field data length does not match dims");
}

void VectorField::check_finite() const {
  for (const Vec3& v : data_)
    if (!v.allFinite()) throw DataError("vector field contains non-finite values");
}

double VectorField::max_norm() const {
  double m = 0.0;
  for (const Vec3& v : data_) m = std::max(m, v.norm());
  return m;
}

VectorField& VectorField::operator+=(const VectorField& o) {
  require_same_dims(dims_, o.dims_, "field add");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

VectorField& VectorField::operator*=(double s) {
  for (Vec3& v : data_) v *= s;
  return *this;
}

TrilinearStencil make_stencil(const Dims& dims, const Vec3& p) {
  if (!p.allFinite()) throw DomainError("interpolation at a non-finite coordinate");
  std::array<std::size_t, 2> lo_hi[3];
  double frac[3];
  double slope[3];
  for (int a = 0; a < 3; ++a) {
    const int n = dims[a];
    const double c = p[a];
    const double hi = static_cast<double>(n - 1);
    if (n == 1) {
      lo_hi[a] = {0, 0};
      frac[a] = 0.0;
      slope[a] = 0.0;
      continue;
    }
    const bool inside = c >= 0.0 && c <= hi;
    const double cc = std::clamp(c, 0.0, hi);
    const int i0 = std::min(static_cast<int>(std::floor(cc)), n - 2);
    frac[a] = cc - i0;
    slope[a] = inside ? 1.0 : 0.0;
    lo_hi[a] = {static_cast<std::size_t>(i0), static_cast<std::size_t>(i0 + 1)};
  }
  TrilinearStencil s;
  const std::size_t sy = dims.stride(1);
  const std::size_t sz = dims.stride(2);
  for (int k = 0; k < 8; ++k) {
    const int bx = k & 1, by = (k >> 1) & 1, bz = (k >> 2) & 1;
    const double wx = bx ? frac[0] : 1.0 - frac[0];
    const double wy = by ? frac[1] : 1.0 - frac[1];
    const double wz = bz ? frac[2] : 1.0 - frac[2];
    const double dx = (bx ? 1.0 : -1.0) * slope[0];
    const double dy = (by ? 1.0 : -1.0) * slope[1];
    const double dz = (bz ? 1.0 : -1.0) * slope[2];
    s.index[k] = lo_hi[0][bx] + sy * lo_hi[1][by] + sz * lo_hi[2][bz];
    s.weight[k] = wx * wy * wz;
    s.dweight[0][k] = dx * wy * wz;
    s.dweight[1][k] = wx * dy * wz;
    s.dweight[2][k] = wx * wy * dz;
  }
  return s;
}

namespace {

// Weights-only variant of make_stencil for lookups that need no derivative.
// Same arithmetic, so values match the stencil path bit for bit.
struct Corners {
  std::size_t index[8];
  double weight[8];
};

Corners make_corners(const Dims& dims, const Vec3& p) {
  if (!p.allFinite()) throw DomainError("interpolation at a non-finite coordinate");
  std::size_t lo[3], hi[3];
  double frac[3];
  for (int a = 0; a < 3; ++a) {
    const int n = dims[a];
    if (n == 1) {
      lo[a] = hi[a] = 0;
      frac[a] = 0.0;
      continue;
    }
    const double cc = std::clamp(p[a], 0.0, static_cast<double>(n - 1));
    const int i0 = std::min(static_cast<int>(std::floor(cc)), n - 2);
    frac[a] = cc - i0;
    lo[a] = static_cast<std::size_t>(i0);
    hi[a] = lo[a] + 1;
  }
  Corners c;
  const std::size_t sy = dims.stride(1);
  const std::size_t sz = dims.stride(2);
  for (int k = 0; k < 8; ++k) {
    const int bx = k & 1, by = (k >> 1) & 1, bz = (k >> 2) & 1;
    const double wx = bx ? frac[0] : 1.0 - frac[0];
    const double wy = by ? frac[1] : 1.0 - frac[1];
    const double wz = bz ? frac[2] : 1.0 - frac[2];
    c.index[k] = (bx ? hi[0] : lo[0]) + sy * (by ? hi[1] : lo[1]) + sz * (bz ? hi[2] : lo[2]);
    c.weight[k] = wx * wy * wz;
  }
  return c;
}

}  // namespace

double interpolate(const ScalarVolume& vol, const Vec3& p) {
  const Corners s = make_corners(vol.dims(), p);
  double v = 0.0;
  for (int k = 0; k < 8; ++k) v += s.weight[k] * vol[s.index[k]];
  return v;
}

double interpolate(const ScalarVolume& vol, const Vec3& p, Vec3& grad) {
  const TrilinearStencil s = make_stencil(vol.dims(), p);
  double v = 0.0;
  grad.setZero();
  for (int k = 0; k < 8; ++k) {
    const double c = vol[s.index[k]];
    v += s.weight[k] * c;
    grad[0] += s.dweight[0][k] * c;
    grad[1] += s.dweight[1][k] * c;
    grad[2] += s.dweight[2][k] * c;
  }
  return v;
}

Vec3 interpolate(const VectorField& f, const Vec3& p) {
  const Corners s = make_corners(f.dims(), p);
  Vec3 v = Vec3::Zero();
  for (int k = 0; k < 8; ++k) v += s.weight[k] * f[s.index[k]];
  return v;
}

Vec3 interpolate(const VectorField& f, const Vec3& p, Mat3& jac) {
  const TrilinearStencil s = make_stencil(f.dims(), p);
  Vec3 v = Vec3::Zero();
  jac.setZero();
  for (int k = 0; k < 8; ++k) {
    const Vec3& c = f[s.index[k]];
    v += s.weight[k] * c;
    jac.col(0) += s.dweight[0][k] * c;
    jac.col(1) += s.dweight[1][k] * c;
    jac.col(2) += s.dweight[2][k] * c;
  }
  return v;
}

ScalarVolume warp(const ScalarVolume& moving, const DisplacementField& u) {
  require_same_dims(moving.dims(), u.dims(), "warp");
  ScalarVolume out(u.dims(), u.spacing());
  const Dims d = u.dims();
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(d.count());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const Vec3& ui = u[i];
    if (ui.isZero(0.0)) {
      out[i] = moving[i];
      continue;
    }
    out[i] = interpolate(moving, voxel_position(d, i) + ui);
  }
  return out;
}

ScalarVolume warp_nearest(const ScalarVolume& labels, const DisplacementField& u) {
  require_same_dims(labels.dims(), u.dims(), "warp_nearest");
  ScalarVolume out(u.dims(), u.spacing());
  const Dims d = u.dims();
  for (std::size_t i = 0; i < d.count(); ++i) {
    const Vec3 p = voxel_position(d, i) + u[i];
    if (!p.allFinite()) throw DomainError("nearest lookup at a non-finite coordinate");
    int c[3];
    for (int a = 0; a < 3; ++a) c[a] = std::clamp(static_cast<int>(std::lround(p[a])), 0, d[a] - 1);
    out[i] = labels.at(c[0], c[1], c[2]);
  }
  return out;
}

namespace {

// One axis of a trilinear lookup: clamped cell, fraction and interpolant slope.
struct AxisCell {
  std::size_t lo = 0;
  std::size_t hi = 0;
  double f = 0.0;
  double slope = 0.0;
};

inline AxisCell axis_cell(int n, double c, std::size_t stride) {
  if (n == 1) return {};
  const double top = static_cast<double>(n - 1);
  const bool inside = c >= 0.0 && c <= top;
  const double cc = std::clamp(c, 0.0, top);
  const int i0 = std::min(static_cast<int>(cc), n - 2);
  return {stride * i0, stride * (i0 + 1), cc - i0, inside ? 1.0 : 0.0};
}

void require_finite_lookups(const VectorField& b) {
  for (const Vec3& v : b.data())
    if (!v.allFinite()) throw DomainError("interpolation at a non-finite coordinate");
}

}  // namespace

DisplacementField compose(const DisplacementField& a, const DisplacementField& b) {
  require_same_dims(a.dims(), b.dims(), "compose");
  require_finite_lookups(b);
  DisplacementField c(b.dims(), b.spacing());
  const Dims d = b.dims();
  const std::size_t sy = d.stride(1), sz = d.stride(2);
#pragma omp parallel for schedule(static)
  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x) {
        const std::size_t i = d.index(x, y, z);
        const Vec3& bi = b[i];
        const AxisCell cx = axis_cell(d.nx, x + bi[0], 1);
        const AxisCell cy = axis_cell(d.ny, y + bi[1], sy);
        const AxisCell cz = axis_cell(d.nz, z + bi[2], sz);
        const Vec3 v00 = (1.0 - cx.f) * a[cx.lo + cy.lo + cz.lo] + cx.f * a[cx.hi + cy.lo + cz.lo];
        const Vec3 v10 = (1.0 - cx.f) * a[cx.lo + cy.hi + cz.lo] + cx.f * a[cx.hi + cy.hi + cz.lo];
        const Vec3 v01 = (1.0 - cx.f) * a[cx.lo + cy.lo + cz.hi] + cx.f * a[cx.hi + cy.lo + cz.hi];
        const Vec3 v11 = (1.0 - cx.f) * a[cx.lo + cy.hi + cz.hi] + cx.f * a[cx.hi + cy.hi + cz.hi];
        const Vec3 v0 = (1.0 - cy.f) * v00 + cy.f * v10;
        const Vec3 v1 = (1.0 - cy.f) * v01 + cy.f * v11;
        c[i] = bi + (1.0 - cz.f) * v0 + cz.f * v1;
      }
  return c;
}

void compose_adjoint(const DisplacementField& a, const DisplacementField& b, const VectorField& grad_c,
                     VectorField& grad_a, VectorField& grad_b) {
  require_same_dims(a.dims(), b.dims(), "compose_adjoint");
  require_same_dims(a.dims(), grad_c.dims(), "compose_adjoint");
  require_same_dims(a.dims(), grad_a.dims(), "compose_adjoint");
  require_same_dims(a.dims(), grad_b.dims(), "compose_adjoint");
  require_finite_lookups(b);
  const Dims d = b.dims();
  const std::size_t sy = d.stride(1), sz = d.stride(2);
  // Scatter into grad_a is a reduction; it stays serial so accumulation order is fixed.
  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x) {
        const std::size_t i = d.index(x, y, z);
        const Vec3& bi = b[i];
        const AxisCell cx = axis_cell(d.nx, x + bi[0], 1);
        const AxisCell cy = axis_cell(d.ny, y + bi[1], sy);
        const AxisCell cz = axis_cell(d.nz, z + bi[2], sz);
        const double wx[2] = {1.0 - cx.f, cx.f}, wy[2] = {1.0 - cy.f, cy.f}, wz[2] = {1.0 - cz.f, cz.f};
        const std::size_t j[8] = {cx.lo + cy.lo + cz.lo, cx.hi + cy.lo + cz.lo, cx.lo + cy.hi + cz.lo,
                                  cx.hi + cy.hi + cz.lo, cx.lo + cy.lo + cz.hi, cx.hi + cy.lo + cz.hi,
                                  cx.lo + cy.hi + cz.hi, cx.hi + cy.hi + cz.hi};
        const Vec3 g = grad_c[i];
        double ag[8];
        for (int k = 0; k < 8; ++k) {
          ag[k] = a[j[k]].dot(g);
          grad_a[j[k]] += (wx[k & 1] * wy[(k >> 1) & 1] * wz[k >> 2]) * g;
        }
        // jac^T g from corner differences along each axis.
        const Vec3 jg(cx.slope * (wz[0] * (wy[0] * (ag[1] - ag[0]) + wy[1] * (ag[3] - ag[2])) +
                                  wz[1] * (wy[0] * (ag[5] - ag[4]) + wy[1] * (ag[7] - ag[6]))),
                      cy.slope * (wz[0] * (wx[0] * (ag[2] - ag[0]) + wx[1] * (ag[3] - ag[1])) +
                                  wz[1] * (wx[0] * (ag[6] - ag[4]) + wx[1] * (ag[7] - ag[5]))),
                      cz.slope * (wy[0] * (wx[0] * (ag[4] - ag[0]) + wx[1] * (ag[5] - ag[1])) +
                                  wy[1] * (wx[0] * (ag[6] - ag[2]) + wx[1] * (ag[7] - ag[3]))));
        grad_b[i] += g + jg;
      }
}

DisplacementField integrate_svf(const VelocityField& v, int steps) {
  if (steps < 1) throw ParameterError("integrate_svf: steps must be >= 1");
  DisplacementField u(VectorField(v.dims(), v.spacing(), std::vector<Vec3>(v.data().begin(), v.data().end())));
  u *= std::ldexp(1.0, -steps);
  for (int k = 0; k < steps; ++k) u = compose(u, u);
  return u;
}

std::vector<DisplacementField> integrate_svf_trace(const VelocityField& v, int steps) {
  if (steps < 1) throw ParameterError("integrate_svf: steps must be >= 1");
  std::vector<DisplacementField> trace;
  trace.reserve(steps + 1);
  DisplacementField u0(VectorField(v.dims(), v.spacing(), std::vector<Vec3>(v.data().begin(), v.data().end())));
  u0 *= std::ldexp(1.0, -steps);
  trace.push_back(std::move(u0));
  for (int k = 0; k < steps; ++k) trace.push_back(compose(trace.back(), trace.back()));
  return trace;
}

VelocityField integrate_svf_adjoint(const std::vector<DisplacementField>& trace, const VectorField& grad_u) {
  if (trace.size() < 2) throw ParameterError("integrate_svf_adjoint: trace must hold at least one step");
  const int steps = static_cast<int>(trace.size()) - 1;
  VectorField g = grad_u;
  for (int k = steps - 1; k >= 0; --k) {
    // a and b are the same field, so both adjoint terms land in one accumulator.
    VectorField ga(g.dims(), g.spacing());
    compose_adjoint(trace[k], trace[k], g, ga, ga);
    g = std::move(ga);
  }
  g *= std::ldexp(1.0, -steps);
  return VelocityField(std::move(g));
}

ScalarVolume downsample2(const ScalarVolume& vol) {
  const Dims f = vol.dims();
  const Dims c{(f.nx + 1) / 2, (f.ny + 1) / 2, (f.nz + 1) / 2};
  const Spacing& s = vol.spacing();
  ScalarVolume out(c, {2.0 * s[0], 2.0 * s[1], 2.0 * s[2]});
  for (int z = 0; z < c.nz; ++z)
    for (int y = 0; y < c.ny; ++y)
      for (int x = 0; x < c.nx; ++x) {
        double sum = 0.0;
        int count = 0;
        for (int dz = 0; dz < 2; ++dz)
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              const int fx = 2 * x + dx, fy = 2 * y + dy, fz = 2 * z + dz;
              if (!f.contains(fx, fy, fz)) continue;
              sum += vol.at(fx, fy, fz);
              ++count;
            }
        out.at(x, y, z) = sum / count;
      }
  return out;
}

VectorField upsample2(const VectorField& coarse, const Dims& fine_dims, const Spacing& fine_spacing) {
  VectorField out(fine_dims, fine_spacing);
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(fine_dims.count());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    // Coarse voxel X averages fine voxels 2X and 2X+1, so its centre sits at fine 2X + 0.5.
    const Vec3 p = (voxel_position(fine_dims, i) - Vec3::Constant(0.5)) / 2.0;
    out[i] = 2.0 * interpolate(coarse, p);
  }
  return out;
}

}  // namespace mechreg
