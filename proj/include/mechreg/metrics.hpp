#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mechreg/losses.hpp"

namespace mechreg {

/// 100 * |{x : det J(x) <= 0}| / |domain|.
double foldings_pct(const DisplacementField& u, Coordinates coords = Coordinates::voxel);

/// Population standard deviation of log(max(det J, eps)) over `region`.
/// Throws ParameterError for an empty region.
double sdlog_j(const DisplacementField& u, std::span<const std::size_t> region, double eps = kDefaultLogDetEps,
               Coordinates coords = Coordinates::voxel);

/// Mean squared strain eigenvalues over `region`; the same computation as rigidity_loss.
double l_rigid(const DisplacementField& u, std::span<const std::size_t> region,
               Coordinates coords = Coordinates::voxel);

/// Hard Dice per label shared by both maps, moving labels warped by nearest neighbour.
std::vector<std::pair<int, double>> dice_scores(const ScalarVolume& fixed_labels, const ScalarVolume& moving_labels,
                                                const DisplacementField& u);

/// Mean of u over voxels labelled `label` in the R region with |x - plane_x| <= reach.
/// Throws DataError when no voxel qualifies.
Vec3 mean_near_plane(const DisplacementField& u, const ScalarVolume& labels, const RegMask& mask, int label,
                     double plane_x, double reach);

/// Recovered fraction of a displacement jump across the plane x = plane_x:
/// (mean_a - mean_b) . g / |g|^2 with g = gt_a - gt_b, sampled just outside the S band.
double jump_recovery(const DisplacementField& u, const ScalarVolume& labels, const RegMask& mask, int label_a,
                     int label_b, double plane_x, double reach, const Vec3& gt_a, const Vec3& gt_b);

struct MetricsReport {
  double mse = 0.0;
  std::vector<std::pair<int, double>> dice;
  std::optional<double> dice_mean;
  double foldings_pct = 0.0;
  double sdlog_j = 0.0;
  double sdlog_j_masked = 0.0;  ///< over R + J
  std::optional<double> l_rigid;  ///< over R; absent when R is empty
  std::optional<double> runtime_s;
};

struct EvalInputs {
  const ScalarVolume* fixed = nullptr;
  const ScalarVolume* moving = nullptr;
  const ScalarVolume* fixed_labels = nullptr;
  const ScalarVolume* moving_labels = nullptr;
  /// Full anatomical mask; the R and S regions define where l_rigid and the masked SD are taken.
  const RegMask* mask = nullptr;
  double eps = kDefaultLogDetEps;
  Coordinates coords = Coordinates::voxel;
};

MetricsReport evaluate(const EvalInputs& in, const DisplacementField& u);

/// Column names and values of a report in a fixed order; dice_mean and l_rigid are NaN when absent.
std::vector<std::string> report_columns();
std::vector<double> report_values(const MetricsReport& r);

struct ColumnStats {
  std::string name;
  double mean = 0.0;
  double std = 0.0;  ///< population
  std::size_t count = 0;
};

/// Mean and population SD per column over rows, skipping NaN entries.
std::vector<ColumnStats> aggregate(const std::vector<std::string>& names, const std::vector<std::vector<double>>& rows);

/// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> a, std::span<const double> b);

}  // namespace mechreg
