#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mechreg/diffops.hpp"
#include "mechreg/grid.hpp"
#include "mechreg/regmask.hpp"

namespace mechreg {

/// Scalar loss over a voxel region plus the per-voxel values (zero outside the region).
struct RegionLoss {
  double mean = 0.0;
  ScalarVolume map;
  std::size_t count = 0;
  /// Voxels whose Jacobian determinant fell to or below eps (Jacobian loss only).
  std::size_t clamped = 0;
};

/// Mean over `region` of sum_i lambda_i(S)^2, evaluated as ||S||_F^2.
RegionLoss rigidity_loss(const DisplacementField& u, std::span<const std::size_t> region,
                         Coordinates coords = Coordinates::voxel);

struct Projection {
  Vec3 along;
  Vec3 residual;
};

/// Orthogonal projection of u onto span(n) and the orthogonal residual.
/// Throws ParameterError for n = 0.
Projection project_split(const Vec3& u, const Vec3& n);
inline Vec3 project(const Vec3& u, const Vec3& n) { return project_split(u, n).along; }

enum class ShearVariant {
  projected,  ///< strain of the component along n (the sliding penalty)
  residual    ///< strain of the tangential remainder u - u^n
};

/// Rigidity loss of the displacement projected on the local normal n(x).
/// Throws DataError if a normal on the region is not unit length within 1e-6.
RegionLoss shearing_loss(const DisplacementField& u, std::span<const std::size_t> region,
                         const DirectionField& normals, Coordinates coords = Coordinates::voxel,
                         ShearVariant variant = ShearVariant::projected);

/// Mean over `region` of (log max(det J, eps))^2.
RegionLoss jacobian_loss(const DisplacementField& u, std::span<const std::size_t> region,
                         double eps = kDefaultLogDetEps, Coordinates coords = Coordinates::voxel);

double mse_loss(const ScalarVolume& fixed, const ScalarVolume& warped);

/// Linearly interpolated one-hot channels of a label map warped by u.
struct LabelChannels {
  std::vector<int> ids;
  std::vector<ScalarVolume> channels;
};

/// Nonzero integer labels present in a label volume, ascending.
std::vector<int> label_ids(const ScalarVolume& labels);

LabelChannels warp_onehot(const ScalarVolume& moving_labels, const DisplacementField& u, std::span<const int> ids);

inline constexpr double kDiceSmoothing = 1e-5;

/// 1 - mean over common nonzero labels of (2 sum pq + s) / (sum p + sum q + s).
/// Throws DataError when no label id is shared.
double soft_dice_loss(const ScalarVolume& fixed_labels, const LabelChannels& warped);

struct LossWeights {
  double alpha = 1.0;   ///< similarity
  double gamma = 0.0;   ///< Dice
  double lambda = 0.0;  ///< regularization

  /// Synthetic-data weighting: alpha = 1 - lambda, gamma = 0.
  static LossWeights synthetic(double lambda) { return {1.0 - lambda, 0.0, lambda}; }
  /// Throws ParameterError unless each weight is in [0, 1] and they sum to 1 within 1e-9.
  void validate() const;
};

/// Per-term multipliers inside the regularizer; all 1 gives equal weighting.
struct TermScales {
  double rigid = 1.0;
  double shear = 1.0;
  double jac = 1.0;
};

struct LossBreakdown {
  double mse = 0.0;
  double dice = 0.0;
  double rigid = 0.0;
  double shear = 0.0;
  double jac = 0.0;
  double total = 0.0;
  std::size_t n_rigid = 0;
  std::size_t n_shear = 0;
  std::size_t n_jac = 0;
  std::size_t n_clamped = 0;
};

/// Everything the composite objective reads besides the displacement.
struct CompositeInputs {
  const ScalarVolume* fixed = nullptr;
  const ScalarVolume* moving = nullptr;
  const ScalarVolume* fixed_labels = nullptr;   ///< optional, enables the Dice term
  const ScalarVolume* moving_labels = nullptr;  ///< optional, enables the Dice term
  const RegMask* mask = nullptr;
  const DirectionField* normals = nullptr;  ///< required when the mask has S voxels
  LossWeights weights;
  TermScales scales;
  double eps = kDefaultLogDetEps;
  Coordinates coords = Coordinates::voxel;
  ShearVariant shear_variant = ShearVariant::projected;
};

/// alpha * MSE + gamma * Dice + lambda * (rigid(R) + shear(S) + jac(J)) and its
/// analytic gradient w.r.t. the displacement. Regions are pre-extracted once.
class CompositeObjective {
 public:
  explicit CompositeObjective(const CompositeInputs& in);

  /// When `grad` is non-null it is overwritten with d total / d u.
  LossBreakdown evaluate(const DisplacementField& u, VectorField* grad) const;

  const CompositeInputs& inputs() const { return in_; }
  const Dims& dims() const { return in_.fixed->dims(); }

 private:
  CompositeInputs in_;
  std::vector<std::size_t> rigid_region_;
  std::vector<std::size_t> shear_region_;
  std::vector<std::size_t> jac_region_;
  std::vector<int> dice_ids_;
};

LossBreakdown composite_loss(const CompositeInputs& in, const DisplacementField& u);
DisplacementField composite_gradient(const CompositeInputs& in, const DisplacementField& u);

}  // namespace mechreg
