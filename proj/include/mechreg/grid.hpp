#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace mechreg {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Index3 = Eigen::Vector3i;

/// Grid extents. Voxel (x, y, z) lives at linear index x + nx * (y + ny * z).
struct Dims {
  int nx = 0;
  int ny = 0;
  int nz = 0;

  std::size_t count() const {
    return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) * static_cast<std::size_t>(nz);
  }
  std::size_t index(int x, int y, int z) const {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(nx) * (static_cast<std::size_t>(y) + static_cast<std::size_t>(ny) * z);
  }
  Index3 coords(std::size_t i) const {
    const int x = static_cast<int>(i % nx);
    const std::size_t r = i / nx;
    return {x, static_cast<int>(r % ny), static_cast<int>(r / ny)};
  }
  int operator[](int axis) const { return axis == 0 ? nx : (axis == 1 ? ny : nz); }
  std::size_t stride(int axis) const {
    return axis == 0 ? 1 : (axis == 1 ? static_cast<std::size_t>(nx) : static_cast<std::size_t>(nx) * ny);
  }
  bool contains(int x, int y, int z) const { return x >= 0 && y >= 0 && z >= 0 && x < nx && y < ny && z < nz; }
  bool operator==(const Dims&) const = default;
};

/// Millimeters per voxel along each axis.
using Spacing = std::array<double, 3>;

class ScalarVolume {
 public:
  ScalarVolume() = default;
  explicit ScalarVolume(Dims dims, Spacing spacing = {1.0, 1.0, 1.0}, double fill = 0.0);
  ScalarVolume(Dims dims, Spacing spacing, std::vector<double> data);

  const Dims& dims() const { return dims_; }
  const Spacing& spacing() const { return spacing_; }
  std::size_t size() const { return data_.size(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(int x, int y, int z) { return data_[dims_.index(x, y, z)]; }
  double at(int x, int y, int z) const { return data_[dims_.index(x, y, z)]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  /// Throws DataError on non-finite values.
  void check_finite() const;

  bool operator==(const ScalarVolume&) const = default;

 private:
  Dims dims_;
  Spacing spacing_{1.0, 1.0, 1.0};
  std::vector<double> data_;
};

/// Per-voxel 3-vector in voxel units.
class VectorField {
 public:
  VectorField() = default;
  explicit VectorField(Dims dims, Spacing spacing = {1.0, 1.0, 1.0}, const Vec3& fill = Vec3::Zero());
  VectorField(Dims dims, Spacing spacing, std::vector<Vec3> data);

  const Dims& dims() const { return dims_; }
  const Spacing& spacing() const { return spacing_; }
  std::size_t size() const { return data_.size(); }

  Vec3& operator[](std::size_t i) { return data_[i]; }
  const Vec3& operator[](std::size_t i) const { return data_[i]; }
  Vec3& at(int x, int y, int z) { return data_[dims_.index(x, y, z)]; }
  const Vec3& at(int x, int y, int z) const { return data_[dims_.index(x, y, z)]; }

  std::span<Vec3> data() { return data_; }
  std::span<const Vec3> data() const { return data_; }

  void check_finite() const;
  double max_norm() const;

  VectorField& operator+=(const VectorField& o);
  VectorField& operator*=(double s);

  bool operator==(const VectorField&) const = default;

 private:
  Dims dims_;
  Spacing spacing_{1.0, 1.0, 1.0};
  std::vector<Vec3> data_;
};

/// u such that phi(x) = x + u(x) maps fixed-image coordinates to moving-image coordinates.
class DisplacementField : public VectorField {
 public:
  using VectorField::VectorField;
  DisplacementField() = default;
  explicit DisplacementField(VectorField f) : VectorField(std::move(f)) {}
};

/// Stationary velocity, voxel units per unit time.
class VelocityField : public VectorField {
 public:
  using VectorField::VectorField;
  VelocityField() = default;
  explicit VelocityField(VectorField f) : VectorField(std::move(f)) {}
};

/// Corner indices, weights and weight derivatives of a clamped trilinear lookup.
struct TrilinearStencil {
  std::array<std::size_t, 8> index{};
  std::array<double, 8> weight{};
  /// d weight / d p along each axis; zero along axes where p was clamped.
  std::array<std::array<double, 8>, 3> dweight{};
};

/// Throws DomainError for non-finite p. Coordinates are clamped to [0, n-1].
TrilinearStencil make_stencil(const Dims& dims, const Vec3& p);

double interpolate(const ScalarVolume& vol, const Vec3& p);
/// Also returns the exact derivative of the trilinear interpolant w.r.t. p.
double interpolate(const ScalarVolume& vol, const Vec3& p, Vec3& grad);
Vec3 interpolate(const VectorField& f, const Vec3& p);
/// jac(i, j) = d f_i / d p_j of the interpolant.
Vec3 interpolate(const VectorField& f, const Vec3& p, Mat3& jac);

/// output(x) = moving(x + u(x)).
ScalarVolume warp(const ScalarVolume& moving, const DisplacementField& u);
/// Nearest-neighbour lookup, for label maps.
ScalarVolume warp_nearest(const ScalarVolume& labels, const DisplacementField& u);

/// c(x) = b(x) + a(x + b(x)), so that phi_c = phi_a o phi_b.
DisplacementField compose(const DisplacementField& a, const DisplacementField& b);

/// Accumulates the adjoint of compose: given dL/dc, adds dL/da into grad_a and dL/db into grad_b.
/// grad_a and grad_b may be the same field.
void compose_adjoint(const DisplacementField& a, const DisplacementField& b, const VectorField& grad_c,
                     VectorField& grad_a, VectorField& grad_b);

/// Scaling and squaring: u0 = v / 2^steps, u_{k+1} = compose(u_k, u_k).
DisplacementField integrate_svf(const VelocityField& v, int steps);

/// All intermediate fields u_0 .. u_steps of integrate_svf, for backpropagation.
std::vector<DisplacementField> integrate_svf_trace(const VelocityField& v, int steps);

/// dL/dv given dL/du for u = integrate_svf(v, steps), from the stored trace.
VelocityField integrate_svf_adjoint(const std::vector<DisplacementField>& trace, const VectorField& grad_u);

/// 2x2x2 block average; odd trailing planes are averaged over the voxels present.
ScalarVolume downsample2(const ScalarVolume& vol);
/// Fine-grid field from a coarse one: trilinear resampling, vectors scaled by 2.
VectorField upsample2(const VectorField& coarse, const Dims& fine_dims, const Spacing& fine_spacing);

}  // namespace mechreg
