#pragma once

#include <span>
#include <vector>

#include "mechreg/grid.hpp"

namespace mechreg {

enum class Coordinates { voxel, millimeter };

/// Diagonal convention of the millimeter Jacobian. `printed` keeps the raw
/// form diag(spacing) + D G D^-1; `normalized` divides row i by spacing_i so
/// that the identity deformation has determinant 1.
enum class MmDiagonal { normalized, printed };

/// Per-voxel displacement gradient, G(i, j) = d u_i / d x_j in voxel units.
using GradientField = std::vector<Mat3>;

/// Central differences inside, one-sided differences on boundary faces.
/// Throws ShapeError if any dimension is < 3.
GradientField gradient(const VectorField& u);

/// out += D^T w, where D is the difference operator used by gradient().
/// w(x)(i, j) is the sensitivity of a scalar to G(x)(i, j).
void gradient_adjoint(const Dims& dims, std::span<const Mat3> w, VectorField& out);

/// Effective gradient diag(left) * G * diag(right) used by a given coordinate mode.
struct GradientScaling {
  Vec3 left = Vec3::Ones();
  Vec3 right = Vec3::Ones();

  Mat3 apply(const Mat3& g) const { return left.asDiagonal() * g * right.asDiagonal(); }
  /// Pulls a sensitivity w.r.t. the effective gradient back to G.
  Mat3 pullback(const Mat3& w) const { return left.asDiagonal() * w * right.asDiagonal(); }
};

/// Scaling for strain tensors: identity (voxel) or D G D^-1 (millimeter).
GradientScaling strain_scaling(const Spacing& spacing, Coordinates coords);
/// Scaling for normalized Jacobians: identity (voxel) or G D^-1 (millimeter).
GradientScaling jacobian_scaling(const Spacing& spacing, Coordinates coords);

struct JacobianField {
  Dims dims;
  Spacing spacing{1.0, 1.0, 1.0};
  Coordinates coords = Coordinates::voxel;
  MmDiagonal diagonal = MmDiagonal::normalized;
  std::vector<Mat3> data;
};

JacobianField jacobian(const DisplacementField& u, Coordinates coords = Coordinates::voxel,
                       MmDiagonal diagonal = MmDiagonal::normalized);

ScalarVolume determinant(const JacobianField& j);

inline constexpr double kDefaultLogDetEps = 1e-6;

/// log(max(det J, eps)) per voxel. Throws ParameterError for eps <= 0.
ScalarVolume log_det(const JacobianField& j, double eps = kDefaultLogDetEps);

/// Unique entries of a symmetric 3x3 tensor.
struct SymTensor {
  double xx = 0, yy = 0, zz = 0, xy = 0, xz = 0, yz = 0;

  static SymTensor symmetric_part(const Mat3& g) {
    return {g(0, 0), g(1, 1), g(2, 2), 0.5 * (g(0, 1) + g(1, 0)), 0.5 * (g(0, 2) + g(2, 0)),
            0.5 * (g(1, 2) + g(2, 1))};
  }
  Mat3 matrix() const {
    Mat3 m;
    m << xx, xy, xz, xy, yy, yz, xz, yz, zz;
    return m;
  }
  double trace() const { return xx + yy + zz; }
  double frobenius_sq() const { return xx * xx + yy * yy + zz * zz + 2.0 * (xy * xy + xz * xz + yz * yz); }
  bool operator==(const SymTensor&) const = default;
};

struct SymTensorField {
  Dims dims;
  Spacing spacing{1.0, 1.0, 1.0};
  Coordinates coords = Coordinates::voxel;
  std::vector<SymTensor> data;
};

/// Infinitesimal strain, the symmetrized displacement gradient.
SymTensorField strain(const DisplacementField& u, Coordinates coords = Coordinates::voxel);

/// Eigenvalues in descending order; eigenvectors are the columns of `vectors`.
struct EigenSystem {
  Vec3 values = Vec3::Zero();
  Mat3 vectors = Mat3::Identity();
};

/// Analytic symmetric 3x3 eigendecomposition. Each eigenvector has its
/// largest-magnitude component made positive. Throws DomainError when the
/// input is not symmetric to 1e-12 (relative to its largest entry).
EigenSystem eig_sym3(const Mat3& s);
EigenSystem eig_sym3(const SymTensor& s);

}  // namespace mechreg
