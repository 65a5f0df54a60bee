#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mechreg/grid.hpp"
#include "mechreg/regmask.hpp"

namespace mechreg {

/// Which labels are rigid and which label pairs may slide against each other.
struct AnatomyConfig {
  std::vector<int> rigid_label_ids;
  std::vector<std::pair<int, int>> shear_pairs;
  /// Radius, in voxels, of the ball used to dilate each shear-pair mask.
  int dilation_radius = 2;
  /// Neighbour count for the PCA normal estimate.
  int knn = 20;
  /// Where a dilated shear band overlaps rigid tissue, S wins when true.
  bool shear_over_rigid = true;
  /// Labels named in the config but absent from the volume are skipped with a
  /// warning instead of raising ConfigError.
  bool skip_missing_labels = false;

  /// Throws ConfigError on negative ids, self pairs, radius < 1 or knn < 4.
  void validate() const;
  /// Stable 64-bit FNV-1a digest of the config contents, as 16 hex digits.
  std::string digest() const;
};

/// R for rigid labels, S where dilated shear-pair masks intersect, J elsewhere.
RegMask build_mask(const ScalarVolume& labels, const AnatomyConfig& cfg);

/// Offsets of the Euclidean ball of radius r (|d|^2 <= r^2).
std::vector<Index3> ball_offsets(int radius);

/// Binary dilation of `inside` by ball_offsets(radius).
std::vector<unsigned char> dilate(const Dims& dims, const std::vector<unsigned char>& inside, int radius);

/// PCA normal of the knn nearest S voxels around every S voxel.
/// Sign: positive dot product with (x - centroid of S); ties resolved toward +z.
/// Throws ParameterError if S holds fewer than cfg.knn voxels.
DirectionField estimate_normals(const RegMask& mask, const AnatomyConfig& cfg);

/// Per-level mask for coarse grids: majority vote over 2x2x2 blocks, ties
/// broken S > R > J. Normals are taken from the first S voxel of each block.
std::pair<RegMask, DirectionField> downsample_mask(const RegMask& mask, const DirectionField* normals);

}  // namespace mechreg
