#include "mechreg/anatomy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <iostream>
#include <set>
#include <sstream>

#include "mechreg/diffops.hpp"
#include "mechreg/error.hpp"

namespace mechreg {

char to_char(RegLabel l) {
  switch (l) {
    case RegLabel::R:
      return 'R';
    case RegLabel::S:
      return 'S';
    default:
      return 'J';
  }
}

RegMask::RegMask(Dims dims, Spacing spacing, RegLabel fill)
    : dims_(dims), spacing_(spacing), labels_(dims.count(), fill) {
  if (dims.nx <= 0 || dims.ny <= 0 || dims.nz <= 0) throw ShapeError("mask dimensions must be positive");
}

std::vector<std::size_t> RegMask::region(RegLabel l) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels_.size(); ++i)
    if (labels_[i] == l) out.push_back(i);
  return out;
}

std::vector<std::size_t> RegMask::complement(RegLabel l) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels_.size(); ++i)
    if (labels_[i] != l) out.push_back(i);
  return out;
}

std::array<std::size_t, 3> RegMask::counts() const {
  std::array<std::size_t, 3> c{0, 0, 0};
  for (RegLabel l : labels_) ++c[static_cast<int>(l)];
  return c;
}

ScalarVolume RegMask::to_volume() const {
  ScalarVolume v(dims_, spacing_);
  for (std::size_t i = 0; i < labels_.size(); ++i) v[i] = static_cast<double>(labels_[i]);
  return v;
}

RegMask RegMask::from_volume(const ScalarVolume& v) {
  RegMask m(v.dims(), v.spacing());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double x = v[i];
    if (x == 0.0)
      m.labels_[i] = RegLabel::J;
    else if (x == 1.0)
      m.labels_[i] = RegLabel::R;
    else if (x == 2.0)
      m.labels_[i] = RegLabel::S;
    else
      throw DataError("regularization mask values must be 0 (J), 1 (R) or 2 (S)");
  }
  return m;
}

void AnatomyConfig::validate() const {
  for (int id : rigid_label_ids)
    if (id < 0) throw ConfigError("label ids must be nonnegative");
  for (auto [a, b] : shear_pairs) {
    if (a < 0 || b < 0) throw ConfigError("label ids must be nonnegative");
    if (a == b) throw ConfigError("shear pair joins a label with itself; list its sub-structures instead");
  }
  if (dilation_radius < 1) throw ConfigError("dilation_radius must be >= 1");
  if (knn < 4) throw ConfigError("knn must be >= 4");
}

std::string AnatomyConfig::digest() const {
  std::ostringstream os;
  os << "rigid:";
  for (int id : rigid_label_ids) os << id << ',';
  os << ";shear:";
  for (auto [a, b] : shear_pairs) os << a << '-' << b << ',';
  os << ";r:" << dilation_radius << ";k:" << knn << ";sor:" << shear_over_rigid;
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : os.str()) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<Index3> ball_offsets(int radius) {
  std::vector<Index3> out;
  const int r2 = radius * radius;
  for (int z = -radius; z <= radius; ++z)
    for (int y = -radius; y <= radius; ++y)
      for (int x = -radius; x <= radius; ++x)
        if (x * x + y * y + z * z <= r2) out.emplace_back(x, y, z);
  return out;
}

std::vector<unsigned char> dilate(const Dims& d, const std::vector<unsigned char>& inside, int radius) {
  if (inside.size() != d.count()) throw ShapeError("dilate: size mismatch");
  const std::vector<Index3> ball = ball_offsets(radius);
  std::vector<unsigned char> out(inside.size(), 0);
  for (std::size_t i = 0; i < inside.size(); ++i) {
    if (!inside[i]) continue;
    const Index3 c = d.coords(i);
    for (const Index3& o : ball) {
      const Index3 q = c + o;
      if (d.contains(q[0], q[1], q[2])) out[d.index(q[0], q[1], q[2])] = 1;
    }
  }
  return out;
}

RegMask build_mask(const ScalarVolume& labels, const AnatomyConfig& cfg) {
  cfg.validate();
  const Dims d = labels.dims();
  std::set<int> present;
  std::vector<int> ids(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double v = labels[i];
    const long r = std::lround(v);
    if (!std::isfinite(v) || std::abs(v - static_cast<double>(r)) > 1e-9)
      throw DataError("label volume must be integer-valued");
    ids[i] = static_cast<int>(r);
    present.insert(ids[i]);
  }
  std::set<int> warned;
  auto known = [&](int id) {
    if (present.count(id)) return true;
    if (cfg.skip_missing_labels) {
      if (warned.insert(id).second)
        std::cerr << "warning: label " << id << " from the anatomy config is absent; skipped\n";
      return false;
    }
    throw ConfigError("label " + std::to_string(id) + " from the anatomy config is absent from the label volume");
  };

  RegMask mask(d, labels.spacing());
  std::set<int> rigid;
  for (int id : cfg.rigid_label_ids)
    if (known(id)) rigid.insert(id);
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (rigid.count(ids[i])) mask[i] = RegLabel::R;

  for (auto [a, b] : cfg.shear_pairs) {
    const bool ka = known(a);
    const bool kb = known(b);
    if (!ka || !kb) continue;
    std::vector<unsigned char> ma(ids.size()), mb(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
      ma[i] = ids[i] == a;
      mb[i] = ids[i] == b;
    }
    const auto da = dilate(d, ma, cfg.dilation_radius);
    const auto db = dilate(d, mb, cfg.dilation_radius);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (!(da[i] && db[i])) continue;
      if (mask[i] == RegLabel::R && !cfg.shear_over_rigid) continue;
      mask[i] = RegLabel::S;
    }
  }
  mask.set_provenance(cfg.digest());
  return mask;
}

namespace {

struct Neighbour {
  long long d2;
  std::size_t index;
  bool operator<(const Neighbour& o) const { return d2 != o.d2 ? d2 < o.d2 : index < o.index; }
};

// k nearest S voxels of `c` (including c itself), by expanding cube shells on the voxel grid.
std::vector<Index3> knn_on_grid(const Dims& d, const std::vector<unsigned char>& in_s, const Index3& c, int k) {
  const int max_r = std::max({d.nx, d.ny, d.nz});
  std::vector<Neighbour> found;
  for (int r = 1; r <= max_r; ++r) {
    found.clear();
    for (int z = std::max(0, c[2] - r); z <= std::min(d.nz - 1, c[2] + r); ++z)
      for (int y = std::max(0, c[1] - r); y <= std::min(d.ny - 1, c[1] + r); ++y)
        for (int x = std::max(0, c[0] - r); x <= std::min(d.nx - 1, c[0] + r); ++x) {
          const std::size_t i = d.index(x, y, z);
          if (!in_s[i]) continue;
          const long long dx = x - c[0], dy = y - c[1], dz = z - c[2];
          found.push_back({dx * dx + dy * dy + dz * dz, i});
        }
    if (static_cast<int>(found.size()) < k) continue;
    std::nth_element(found.begin(), found.begin() + (k - 1), found.end());
    // Every point within distance r lies in the cube, so the k-th is final once within r.
    if (found[k - 1].d2 <= static_cast<long long>(r) * r || r == max_r) {
      std::sort(found.begin(), found.begin() + k);
      std::vector<Index3> pts;
      pts.reserve(k);
      for (int j = 0; j < k; ++j) pts.push_back(d.coords(found[j].index));
      return pts;
    }
  }
  throw ParameterError("knn search found too few S voxels");
}

void orient(Vec3& n, const Vec3& outward) {
  const double dot = n.dot(outward);
  if (std::abs(dot) > 1e-9) {
    if (dot < 0.0) n = -n;
    return;
  }
  for (int a = 2; a >= 0; --a) {
    if (std::abs(n[a]) > 1e-12) {
      if (n[a] < 0.0) n = -n;
      return;
    }
  }
}

}  // namespace

DirectionField estimate_normals(const RegMask& mask, const AnatomyConfig& cfg) {
  if (cfg.knn < 4) throw ParameterError("knn must be >= 4");
  const Dims d = mask.dims();
  const std::vector<std::size_t> band = mask.region(RegLabel::S);
  if (band.empty()) throw ParameterError("estimate_normals: the S region is empty");
  if (band.size() < static_cast<std::size_t>(cfg.knn))
    throw ParameterError("estimate_normals: S region holds fewer voxels than knn");

  std::vector<unsigned char> in_s(d.count(), 0);
  Vec3 centroid = Vec3::Zero();
  for (std::size_t i : band) {
    in_s[i] = 1;
    centroid += d.coords(i).cast<double>();
  }
  centroid /= static_cast<double>(band.size());

  DirectionField normals(d, mask.spacing());
  const std::ptrdiff_t nb = static_cast<std::ptrdiff_t>(band.size());
#pragma omp parallel for schedule(dynamic, 64)
  for (std::ptrdiff_t b = 0; b < nb; ++b) {
    const std::size_t i = band[b];
    const Index3 c = d.coords(i);
    const std::vector<Index3> pts = knn_on_grid(d, in_s, c, cfg.knn);
    Vec3 mean = Vec3::Zero();
    for (const Index3& p : pts) mean += p.cast<double>();
    mean /= static_cast<double>(pts.size());
    Mat3 cov = Mat3::Zero();
    for (const Index3& p : pts) {
      const Vec3 q = p.cast<double>() - mean;
      cov += q * q.transpose();
    }
    cov /= static_cast<double>(pts.size());
    Vec3 n = eig_sym3(cov).vectors.col(2).normalized();
    orient(n, c.cast<double>() - centroid);
    normals[i] = n;
  }
  return normals;
}

std::pair<RegMask, DirectionField> downsample_mask(const RegMask& mask, const DirectionField* normals) {
  const Dims f = mask.dims();
  const Dims c{(f.nx + 1) / 2, (f.ny + 1) / 2, (f.nz + 1) / 2};
  const Spacing& s = mask.spacing();
  const Spacing cs{2.0 * s[0], 2.0 * s[1], 2.0 * s[2]};
  RegMask out(c, cs);
  DirectionField n_out(c, cs);
  for (int z = 0; z < c.nz; ++z)
    for (int y = 0; y < c.ny; ++y)
      for (int x = 0; x < c.nx; ++x) {
        int votes[3] = {0, 0, 0};
        std::size_t first_s = f.count();
        for (int dz = 0; dz < 2; ++dz)
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              const int fx = 2 * x + dx, fy = 2 * y + dy, fz = 2 * z + dz;
              if (!f.contains(fx, fy, fz)) continue;
              const std::size_t i = f.index(fx, fy, fz);
              ++votes[static_cast<int>(mask[i])];
              if (mask[i] == RegLabel::S && first_s == f.count()) first_s = i;
            }
        RegLabel best = RegLabel::S;
        for (RegLabel cand : {RegLabel::R, RegLabel::J})
          if (votes[static_cast<int>(cand)] > votes[static_cast<int>(best)]) best = cand;
        const std::size_t ci = c.index(x, y, z);
        out[ci] = best;
        if (best == RegLabel::S && normals) n_out[ci] = (*normals)[first_s];
      }
  out.set_provenance(mask.provenance());
  return {std::move(out), std::move(n_out)};
}

}  // namespace mechreg
