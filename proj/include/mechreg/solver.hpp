#pragma once

#include <cstdint>
#include <vector>

#include "mechreg/losses.hpp"

namespace mechreg {

enum class Parametrization { displacement, svf };

/// The three regularization strategies compared on the synthetic data.
enum class RegConfiguration { jacobian_only, rigid_jacobian, rigid_shear_jacobian };

/// Relabels a full R/S/J mask for a configuration: all J, S turned into J, or unchanged.
RegMask configure_mask(const RegMask& full, RegConfiguration c);

struct SolverConfig {
  Parametrization parametrization = Parametrization::displacement;
  int svf_steps = 7;
  int iters = 300;  ///< per level
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  LossWeights weights;
  TermScales scales;
  int levels = 2;
  /// Stop once the relative improvement of the total loss over `stop_window` iterations is below this.
  double stop_tol = 1e-6;
  int stop_window = 20;
  double logdet_eps = kDefaultLogDetEps;
  Coordinates coords = Coordinates::voxel;
  ShearVariant shear_variant = ShearVariant::projected;
  /// The optimizer itself draws no random numbers; kept so traces record the run seed.
  std::uint64_t seed = 0;

  /// Throws ParameterError on iters < 1, lr <= 0, levels < 1, bad betas or invalid weights.
  void validate() const;
};

struct IterationRecord {
  int level = 0;  ///< 0 is the finest grid
  int iter = 0;
  LossBreakdown loss;
};

struct SolveTrace {
  std::vector<IterationRecord> iterations;
  double wall_seconds = 0.0;
  bool converged = false;
  double best_total = 0.0;  ///< at the returned iterate, finest level
  int best_iter = 0;
};

struct RegistrationInputs {
  const ScalarVolume* fixed = nullptr;
  const ScalarVolume* moving = nullptr;
  const ScalarVolume* fixed_labels = nullptr;
  const ScalarVolume* moving_labels = nullptr;
  const RegMask* mask = nullptr;
  const DirectionField* normals = nullptr;
};

struct SolveResult {
  DisplacementField field;
  VelocityField velocity;  ///< svf mode only
  SolveTrace trace;
};

/// Adam on the composite objective, coarse to fine. Returns the best-loss
/// iterate of the finest level. Throws NumericalError on a non-finite loss.
SolveResult register_images(const RegistrationInputs& in, const SolverConfig& cfg);

/// Label map on the next coarser grid, taken from the even-index voxels.
ScalarVolume subsample_labels(const ScalarVolume& labels);

}  // namespace mechreg
