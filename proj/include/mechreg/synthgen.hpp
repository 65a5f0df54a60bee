#pragma once

#include <cstdint>
#include <optional>

#include "mechreg/anatomy.hpp"
#include "mechreg/grid.hpp"
#include "mechreg/regmask.hpp"

namespace mechreg {

struct Cuboid {
  Vec3 center = Vec3::Zero();
  Vec3 half = Vec3::Zero();  ///< half edge lengths, voxels
};

/// x -> R (x - center) + center + translation, R from axis-angle.
struct RigidMotion {
  Vec3 axis = Vec3::UnitZ();
  double angle = 0.0;  ///< radians
  Vec3 translation = Vec3::Zero();
  Vec3 center = Vec3::Zero();

  Mat3 rotation() const;
  Vec3 apply(const Vec3& x) const { return rotation() * (x - center) + center + translation; }
};

/// Default ranges: edges 16-32, centre jitter +-6, |angle| <= 25 deg, |t|_inf <= 6.
struct RigidParams {
  Dims dims{64, 64, 64};
  double edge_min = 16.0;
  double edge_max = 32.0;
  double center_jitter = 6.0;
  double max_angle_deg = 25.0;
  double max_translation = 6.0;
  int max_retries = 200;
  // Fixed values instead of random draws, mostly for tests.
  std::optional<Vec3> edges;
  std::optional<Vec3> center;
  std::optional<Vec3> axis;
  std::optional<double> angle_deg;
  std::optional<Vec3> translation;
};

/// Two cuboids with a common y-z cross-section sharing a face on the plane
/// x = interface_x, moved in opposite tangential directions.
struct ShearParams {
  Dims dims{64, 64, 64};
  double width_min = 10.0;  ///< extent along x of each cuboid
  double width_max = 20.0;
  double lateral_min = 16.0;  ///< extent along y and z
  double lateral_max = 32.0;
  double plane_jitter = 6.0;
  double center_jitter = 4.0;
  double shift_min = 2.0;
  double shift_max = 6.0;
  int max_retries = 200;
  std::optional<double> interface_x;
  std::optional<Vec3> translation_a;
  std::optional<Vec3> translation_b;
};

inline constexpr double kShearIntensityA = 0.6;
inline constexpr double kShearIntensityB = 1.0;

struct RigidSample {
  std::uint64_t seed = 0;
  ScalarVolume fixed;
  ScalarVolume moving;
  ScalarVolume fixed_labels;   ///< 1 on the cuboid in the fixed frame
  ScalarVolume moving_labels;  ///< 1 on the cuboid in the moving frame
  Cuboid cuboid;               ///< fixed-frame pose
  RigidMotion motion;
};

struct ShearSample {
  std::uint64_t seed = 0;
  ScalarVolume fixed;
  ScalarVolume moving;
  ScalarVolume fixed_labels;  ///< 1 on cuboid A, 2 on cuboid B
  ScalarVolume moving_labels;
  Cuboid a;
  Cuboid b;
  Vec3 translation_a = Vec3::Zero();
  Vec3 translation_b = Vec3::Zero();
  double interface_x = 0.0;
};

/// Box with a one-voxel linear edge ramp: 1 inside, 0 beyond half + 0.5.
double cuboid_intensity(const Cuboid& c, const Mat3& rotation, const Vec3& p);

RigidSample gen_rigid(std::uint64_t seed, const RigidParams& params = {});
ShearSample gen_shear(std::uint64_t seed, const ShearParams& params = {});

DisplacementField gt_field(const RigidSample& s);
DisplacementField gt_field(const ShearSample& s);

/// Anatomy configs matching the generated label maps: label 1 rigid for
/// rigid samples; labels 1, 2 rigid with the (1, 2) interface sliding for shear samples.
/// The shear band is only four voxels thick, so normals need a wide neighbourhood.
inline constexpr int kShearSampleKnn = 120;
AnatomyConfig rigid_sample_anatomy();
AnatomyConfig shear_sample_anatomy();

/// Seed of sample `index` in `split` (0 train, 1 validation, 2 test); splits use disjoint ranges.
std::uint64_t sample_seed(std::uint64_t base_seed, int split, std::uint64_t index);

}  // namespace mechreg
