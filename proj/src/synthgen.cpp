#include "mechreg/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "mechreg/error.hpp"
#include "mechreg/rng.hpp"

namespace mechreg {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

Vec3 image_center(const Dims& d) { return Vec3(d.nx - 1, d.ny - 1, d.nz - 1) / 2.0; }

Vec3 random_axis(CounterRng& rng) {
  const double z = rng.uniform(-1.0, 1.0);
  const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  return {r * std::cos(phi), r * std::sin(phi), z};
}

Vec3 random_box(CounterRng& rng, double lo, double hi) {
  const double x = rng.uniform(lo, hi);
  const double y = rng.uniform(lo, hi);
  const double z = rng.uniform(lo, hi);
  return {x, y, z};
}

// Corners of the cuboid grown by the half-voxel ramp, after rotation about its
// own centre and translation, must stay inside [0, n - 1].
bool inside_domain(const Dims& d, const Cuboid& c, const Mat3& rot, const Vec3& t) {
  for (int k = 0; k < 8; ++k) {
    Vec3 corner;
    for (int a = 0; a < 3; ++a) corner[a] = ((k >> a) & 1 ? 1.0 : -1.0) * (c.half[a] + 0.5);
    const Vec3 p = rot * corner + c.center + t;
    for (int a = 0; a < 3; ++a)
      if (p[a] < 0.0 || p[a] > d[a] - 1.0) return false;
  }
  return true;
}

ScalarVolume render(const Dims& d, const Cuboid& c, const Mat3& rot, const Vec3& t, double value) {
  ScalarVolume out(d);
  const Cuboid moved{c.center + t, c.half};
  for (std::size_t i = 0; i < d.count(); ++i) out[i] = value * cuboid_intensity(moved, rot, d.coords(i).cast<double>());
  return out;
}

void label(ScalarVolume& labels, const Cuboid& c, const Mat3& rot, const Vec3& t, double id) {
  const Dims d = labels.dims();
  for (std::size_t i = 0; i < d.count(); ++i) {
    const Vec3 local = rot.transpose() * (d.coords(i).cast<double>() - c.center - t);
    if ((local.cwiseAbs() - c.half).maxCoeff() <= 0.0) labels[i] = id;
  }
}

double box_distance(const Cuboid& c, const Vec3& p) {
  return ((p - c.center).cwiseAbs() - c.half).cwiseMax(0.0).norm();
}

void check_range(double lo, double hi, const char* what) {
  if (!(lo >= 0.0) || !(hi >= lo)) throw ParameterError(std::string("invalid range for ") + what);
}

}  // namespace

Mat3 RigidMotion::rotation() const {
  if (angle == 0.0) return Mat3::Identity();
  const Vec3 k = axis.normalized();
  Mat3 kx;
  kx << 0, -k[2], k[1], k[2], 0, -k[0], -k[1], k[0], 0;
  return Mat3::Identity() + std::sin(angle) * kx + (1.0 - std::cos(angle)) * kx * kx;
}

double cuboid_intensity(const Cuboid& c, const Mat3& rotation, const Vec3& p) {
  const Vec3 local = rotation.transpose() * (p - c.center);
  double v = 1.0;
  for (int a = 0; a < 3; ++a) v *= std::clamp(c.half[a] + 0.5 - std::abs(local[a]), 0.0, 1.0);
  return v;
}

RigidSample gen_rigid(std::uint64_t seed, const RigidParams& p) {
  check_range(p.edge_min, p.edge_max, "cuboid edges");
  if (p.center_jitter < 0.0 || p.max_angle_deg < 0.0 || p.max_translation < 0.0 || p.max_retries < 1)
    throw ParameterError("rigid sample ranges must be nonnegative");
  const Vec3 mid = image_center(p.dims);
  const Vec3 min_edges = p.edges.value_or(Vec3::Constant(p.edge_min));
  for (int a = 0; a < 3; ++a)
    if (min_edges[a] / 2.0 + 0.5 > mid[a]) throw ParameterError("cuboid cannot fit in the volume");

  CounterRng rng(seed, "synth/rigid");
  for (int attempt = 0; attempt < p.max_retries; ++attempt) {
    const Vec3 edges = p.edges ? *p.edges : random_box(rng, p.edge_min, p.edge_max);
    const Vec3 center = p.center ? *p.center : Vec3(mid + random_box(rng, -p.center_jitter, p.center_jitter));
    RigidMotion m;
    m.axis = p.axis ? p.axis->normalized() : random_axis(rng);
    m.angle = (p.angle_deg ? *p.angle_deg : rng.uniform(-p.max_angle_deg, p.max_angle_deg)) * kDeg;
    m.translation = p.translation ? *p.translation : random_box(rng, -p.max_translation, p.max_translation);
    m.center = center;
    const Cuboid cub{center, edges / 2.0};
    const Mat3 rot = m.rotation();
    if (!inside_domain(p.dims, cub, Mat3::Identity(), Vec3::Zero()) || !inside_domain(p.dims, cub, rot, m.translation))
      continue;

    RigidSample s;
    s.seed = seed;
    s.cuboid = cub;
    s.motion = m;
    s.fixed = render(p.dims, cub, Mat3::Identity(), Vec3::Zero(), 1.0);
    s.moving = render(p.dims, cub, rot, m.translation, 1.0);
    s.fixed_labels = ScalarVolume(p.dims);
    s.moving_labels = ScalarVolume(p.dims);
    label(s.fixed_labels, cub, Mat3::Identity(), Vec3::Zero(), 1.0);
    label(s.moving_labels, cub, rot, m.translation, 1.0);
    return s;
  }
  throw ParameterError("rigid sample ranges keep the cuboid outside the volume after max_retries draws");
}

ShearSample gen_shear(std::uint64_t seed, const ShearParams& p) {
  check_range(p.width_min, p.width_max, "cuboid widths");
  check_range(p.lateral_min, p.lateral_max, "cuboid lateral extents");
  check_range(p.shift_min, p.shift_max, "shift magnitudes");
  if (p.plane_jitter < 0.0 || p.center_jitter < 0.0 || p.max_retries < 1)
    throw ParameterError("shear sample ranges must be nonnegative");
  const Vec3 mid = image_center(p.dims);
  if (p.width_min + 1.0 > mid[0] || p.lateral_min / 2.0 + 0.5 > mid[1] || p.lateral_min / 2.0 + 0.5 > mid[2])
    throw ParameterError("shear cuboids cannot fit in the volume");

  CounterRng rng(seed, "synth/shear");
  for (int attempt = 0; attempt < p.max_retries; ++attempt) {
    // Interface on a half-integer plane so that the shared face falls between voxel centres.
    const double plane =
        p.interface_x ? *p.interface_x : std::floor(mid[0] + rng.uniform(-p.plane_jitter, p.plane_jitter)) + 0.5;
    const double wa = rng.uniform(p.width_min, p.width_max);
    const double wb = rng.uniform(p.width_min, p.width_max);
    const double cy = mid[1] + rng.uniform(-p.center_jitter, p.center_jitter);
    const double cz = mid[2] + rng.uniform(-p.center_jitter, p.center_jitter);
    // One cross-section for both, so the nearest-object extension of the
    // ground truth never sends a background voxel onto the other object.
    const double ly = rng.uniform(p.lateral_min, p.lateral_max);
    const double lz = rng.uniform(p.lateral_min, p.lateral_max);
    const double psi = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double ma = rng.uniform(p.shift_min, p.shift_max);
    const double mb = rng.uniform(p.shift_min, p.shift_max);
    const Vec3 dir(0.0, std::cos(psi), std::sin(psi));

    const Cuboid a{{plane - wa / 2.0, cy, cz}, {wa / 2.0, ly / 2.0, lz / 2.0}};
    const Cuboid b{{plane + wb / 2.0, cy, cz}, {wb / 2.0, ly / 2.0, lz / 2.0}};
    const Vec3 ta = p.translation_a ? *p.translation_a : Vec3(ma * dir);
    const Vec3 tb = p.translation_b ? *p.translation_b : Vec3(-mb * dir);
    const Mat3 id = Mat3::Identity();
    if (!inside_domain(p.dims, a, id, Vec3::Zero()) || !inside_domain(p.dims, b, id, Vec3::Zero()) ||
        !inside_domain(p.dims, a, id, ta) || !inside_domain(p.dims, b, id, tb))
      continue;
    // Moved boxes may touch but not overlap.
    const Vec3 lo = (a.center + ta - a.half).cwiseMax(b.center + tb - b.half);
    const Vec3 hi = (a.center + ta + a.half).cwiseMin(b.center + tb + b.half);
    if ((hi - lo).minCoeff() > 0.0) continue;

    ShearSample s;
    s.seed = seed;
    s.a = a;
    s.b = b;
    s.translation_a = ta;
    s.translation_b = tb;
    s.interface_x = plane;
    auto compose_image = [&](const Vec3& sa, const Vec3& sb) {
      ScalarVolume img = render(p.dims, a, id, sa, kShearIntensityA);
      const ScalarVolume ib = render(p.dims, b, id, sb, kShearIntensityB);
      for (std::size_t i = 0; i < img.size(); ++i) img[i] = std::min(1.0, img[i] + ib[i]);
      return img;
    };
    s.fixed = compose_image(Vec3::Zero(), Vec3::Zero());
    s.moving = compose_image(ta, tb);
    s.fixed_labels = ScalarVolume(p.dims);
    s.moving_labels = ScalarVolume(p.dims);
    label(s.fixed_labels, a, id, Vec3::Zero(), 1.0);
    label(s.fixed_labels, b, id, Vec3::Zero(), 2.0);
    label(s.moving_labels, a, id, ta, 1.0);
    label(s.moving_labels, b, id, tb, 2.0);
    return s;
  }
  throw ParameterError("shear sample draws kept leaving the volume or overlapping after max_retries attempts");
}

DisplacementField gt_field(const RigidSample& s) {
  const Dims d = s.fixed.dims();
  DisplacementField u(d, s.fixed.spacing());
  const Mat3 rot = s.motion.rotation();
  const Mat3 a = rot - Mat3::Identity();
  for (std::size_t i = 0; i < d.count(); ++i)
    u[i] = a * (d.coords(i).cast<double>() - s.motion.center) + s.motion.translation;
  return u;
}

DisplacementField gt_field(const ShearSample& s) {
  const Dims d = s.fixed.dims();
  DisplacementField u(d, s.fixed.spacing());
  for (std::size_t i = 0; i < d.count(); ++i) {
    const Vec3 x = d.coords(i).cast<double>();
    const double da = box_distance(s.a, x);
    const double db = box_distance(s.b, x);
    const bool pick_a = da != db ? da < db : x[0] < s.interface_x;
    u[i] = pick_a ? s.translation_a : s.translation_b;
  }
  return u;
}

AnatomyConfig rigid_sample_anatomy() {
  AnatomyConfig c;
  c.rigid_label_ids = {1};
  return c;
}

AnatomyConfig shear_sample_anatomy() {
  AnatomyConfig c;
  c.rigid_label_ids = {1, 2};
  c.shear_pairs = {{1, 2}};
  c.knn = kShearSampleKnn;
  return c;
}

std::uint64_t sample_seed(std::uint64_t base_seed, int split, std::uint64_t index) {
  if (split < 0 || split > 2) throw ParameterError("split must be 0 (train), 1 (val) or 2 (test)");
  return CounterRng::mix(base_seed) ^ ((static_cast<std::uint64_t>(split) << 40) + index);
}

}  // namespace mechreg
