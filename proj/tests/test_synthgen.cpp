#include <cmath>
#include <set>

#include "doctest.h"
#include "mechreg/error.hpp"
#include "mechreg/losses.hpp"
#include "mechreg/synthgen.hpp"

using namespace mechreg;

namespace {

std::vector<std::size_t> voxels_with(const ScalarVolume& labels, std::initializer_list<int> ids) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i)
    for (int id : ids)
      if (std::lround(labels[i]) == id) out.push_back(i);
  return out;
}

void check_range01(const ScalarVolume& v) {
  for (double x : v.data()) {
    CHECK(x >= 0.0);
    CHECK(x <= 1.0);
  }
}

}  // namespace

TEST_CASE("rigid samples are deterministic and in range") {
  const RigidSample a = gen_rigid(42);
  const RigidSample b = gen_rigid(42);
  CHECK(a.fixed == b.fixed);
  CHECK(a.moving == b.moving);
  CHECK(a.moving_labels == b.moving_labels);
  CHECK(a.motion.translation == b.motion.translation);
  CHECK(!(gen_rigid(43).moving == a.moving));
  check_range01(a.fixed);
  check_range01(a.moving);
  CHECK(a.fixed.dims() == Dims{64, 64, 64});
  // Labels sit inside the rendered cuboid.
  for (std::size_t i : voxels_with(a.fixed_labels, {1})) CHECK(a.fixed[i] > 0.0);
}

TEST_CASE("rigid sample without motion has identical images") {
  RigidParams p;
  p.angle_deg = 0.0;
  p.translation = Vec3::Zero();
  const RigidSample s = gen_rigid(5, p);
  CHECK(s.fixed == s.moving);
  CHECK(gt_field(s).max_norm() == 0.0);
}

TEST_CASE("rigid translation matches the warp oracle") {
  RigidParams p;
  p.angle_deg = 0.0;
  p.translation = Vec3(3, 0, 0);
  const RigidSample s = gen_rigid(6, p);
  const ScalarVolume w = warp(s.moving, DisplacementField(s.fixed.dims(), {1, 1, 1}, Vec3(3, 0, 0)));
  const Dims d = s.fixed.dims();
  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx - 3; ++x) CHECK(std::abs(w.at(x, y, z) - s.fixed.at(x, y, z)) < 1e-12);
}

TEST_CASE("rotation ground truth has the closed-form rigidity loss") {
  RigidParams p;
  p.axis = Vec3::UnitZ();
  p.angle_deg = 15.0;
  p.center = Vec3(31.5, 31.5, 31.5);
  p.translation = Vec3(1, -2, 0.5);
  const RigidSample s = gen_rigid(7, p);
  CHECK(s.motion.center == Vec3(31.5, 31.5, 31.5));
  const DisplacementField u = gt_field(s);
  const std::vector<std::size_t> inside = voxels_with(s.fixed_labels, {1});
  const RegionLoss l = rigidity_loss(u, inside);
  const double c = std::cos(15.0 * M_PI / 180.0) - 1.0;
  for (std::size_t i : inside) CHECK(l.map[i] == doctest::Approx(2 * c * c).epsilon(1e-9));
  const Mat3 r = s.motion.rotation();
  for (std::size_t i : inside) {
    const Vec3 x = u.dims().coords(i).cast<double>();
    CHECK((u[i] - ((r - Mat3::Identity()) * (x - s.motion.center) + s.motion.translation)).norm() < 1e-12);
  }
}

TEST_CASE("rigid ground truth warps moving onto fixed") {
  for (std::uint64_t seed : {1u, 2u, 3u, 4u}) {
    const RigidSample s = gen_rigid(seed);
    CHECK(mse_loss(s.fixed, warp(s.moving, gt_field(s))) < 1e-3);
  }
}

TEST_CASE("infeasible rigid ranges are rejected") {
  RigidParams p;
  p.edge_min = 70;
  p.edge_max = 80;
  CHECK_THROWS_AS(gen_rigid(1, p), ParameterError);
  p = RigidParams{};
  p.edge_min = 20;
  p.edge_max = 10;
  CHECK_THROWS_AS(gen_rigid(1, p), ParameterError);
  p = RigidParams{};
  p.edges = Vec3(60, 60, 60);
  p.translation = Vec3(5, 0, 0);
  CHECK_THROWS_AS(gen_rigid(1, p), ParameterError);
}

TEST_CASE("shear samples: determinism, disjoint labels, intensities") {
  const ShearSample a = gen_shear(9);
  CHECK(a.fixed == gen_shear(9).fixed);
  CHECK(a.moving == gen_shear(9).moving);
  check_range01(a.fixed);
  check_range01(a.moving);
  CHECK(a.interface_x - std::floor(a.interface_x) == 0.5);
  // Adjoining faces before motion.
  CHECK(a.a.center[0] + a.a.half[0] == doctest::Approx(a.interface_x));
  CHECK(a.b.center[0] - a.b.half[0] == doctest::Approx(a.interface_x));
  const auto la = voxels_with(a.fixed_labels, {1});
  const auto lb = voxels_with(a.fixed_labels, {2});
  CHECK(!la.empty());
  CHECK(!lb.empty());
  const Dims d = a.fixed.dims();
  for (std::size_t i : la) CHECK(d.coords(i)[0] < a.interface_x);
  for (std::size_t i : lb) CHECK(d.coords(i)[0] > a.interface_x);
  // Deep inside each cuboid the intensities are the two object values.
  const Vec3 ca = a.a.center, cb = a.b.center;
  CHECK(a.fixed.at(int(std::lround(ca[0])), int(std::lround(ca[1])), int(std::lround(ca[2]))) == kShearIntensityA);
  CHECK(a.fixed.at(int(std::lround(cb[0])), int(std::lround(cb[1])), int(std::lround(cb[2]))) == kShearIntensityB);
  // Opposing tangential motions.
  CHECK(a.translation_a[0] == 0.0);
  CHECK(a.translation_b[0] == 0.0);
  CHECK(a.translation_a.dot(a.translation_b) < 0.0);
}

TEST_CASE("shear sample without motion has identical images") {
  ShearParams p;
  p.translation_a = Vec3::Zero();
  p.translation_b = Vec3::Zero();
  const ShearSample s = gen_shear(3, p);
  CHECK(s.fixed == s.moving);
  CHECK(gt_field(s).max_norm() == 0.0);
}

TEST_CASE("shear ground truth jumps across the interface") {
  ShearParams p;
  p.translation_a = Vec3(0, 0, 4);
  p.translation_b = Vec3(0, 0, -4);
  const ShearSample s = gen_shear(11, p);
  const DisplacementField u = gt_field(s);
  const int xl = static_cast<int>(std::floor(s.interface_x));
  const int yc = static_cast<int>(std::lround(s.a.center[1]));
  const int zc = static_cast<int>(std::lround(s.a.center[2]));
  CHECK(u.at(xl, yc, zc) == Vec3(0, 0, 4));
  CHECK(u.at(xl + 1, yc, zc) == Vec3(0, 0, -4));
  CHECK((u.at(xl, yc, zc) - u.at(xl + 1, yc, zc)).norm() == 8.0);
  CHECK(mse_loss(s.fixed, warp(s.moving, u)) < 1e-3);

  const auto inside = voxels_with(s.fixed_labels, {1, 2});
  CHECK(jacobian_loss(u, inside).mean < 1e-20);
}

TEST_CASE("shear ground truth passes its self-check on random draws") {
  for (std::uint64_t seed : {21u, 22u, 23u, 24u}) {
    const ShearSample s = gen_shear(seed);
    CHECK(mse_loss(s.fixed, warp(s.moving, gt_field(s))) < 1e-3);
  }
}

TEST_CASE("shear sample mask from the default sample anatomy") {
  const ShearSample s = gen_shear(13);
  const AnatomyConfig cfg = shear_sample_anatomy();
  const RegMask m = build_mask(s.fixed_labels, cfg);
  const Dims d = m.dims();
  std::size_t r = 0, sband = 0;
  for (std::size_t i = 0; i < d.count(); ++i) {
    const long id = std::lround(s.fixed_labels[i]);
    const double dx = std::abs(d.coords(i)[0] - s.interface_x);
    if (m[i] == RegLabel::S) {
      ++sband;
      CHECK(dx <= 2.0);
    } else if (m[i] == RegLabel::R) {
      ++r;
      CHECK(id != 0);
    } else {
      CHECK(id == 0);
    }
    // Cuboid voxels away from the interface are rigid.
    if (id != 0 && dx > 2.0) CHECK(m[i] == RegLabel::R);
  }
  CHECK(r > 0);
  CHECK(sband > 0);
  const DirectionField n = estimate_normals(m, cfg);
  for (std::size_t i : m.region(RegLabel::S)) CHECK(std::abs(n[i][0]) > 0.9);
}

TEST_CASE("split seeds are disjoint") {
  std::set<std::uint64_t> seen;
  const int counts[3] = {200, 50, 50};
  for (int split = 0; split < 3; ++split)
    for (int i = 0; i < counts[split]; ++i) CHECK(seen.insert(sample_seed(1234, split, i)).second);
  CHECK(sample_seed(1234, 2, 7) == sample_seed(1234, 2, 7));
  CHECK(sample_seed(1234, 2, 7) != sample_seed(1235, 2, 7));
  CHECK_THROWS_AS(sample_seed(1, 3, 0), ParameterError);
}
