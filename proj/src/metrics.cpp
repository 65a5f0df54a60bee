#include "mechreg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mechreg/error.hpp"
#include "mechreg/reduce.hpp"

namespace mechreg {

double foldings_pct(const DisplacementField& u, Coordinates coords) {
  const ScalarVolume det = determinant(jacobian(u, coords));
  std::size_t folded = 0;
  for (std::size_t i = 0; i < det.size(); ++i)
    if (det[i] <= 0.0) ++folded;
  return 100.0 * static_cast<double>(folded) / static_cast<double>(det.size());
}

double sdlog_j(const DisplacementField& u, std::span<const std::size_t> region, double eps, Coordinates coords) {
  if (region.empty()) throw ParameterError("sdlog_j: empty region");
  const ScalarVolume ld = log_det(jacobian(u, coords), eps);
  std::vector<double> v(region.size());
  for (std::size_t k = 0; k < region.size(); ++k) v[k] = ld[region[k]];
  const double mean = pairwise_mean(v);
  for (double& x : v) x = (x - mean) * (x - mean);
  return std::sqrt(pairwise_mean(v));
}

double l_rigid(const DisplacementField& u, std::span<const std::size_t> region, Coordinates coords) {
  if (region.empty()) throw ParameterError("l_rigid: empty region");
  return rigidity_loss(u, region, coords).mean;
}

std::vector<std::pair<int, double>> dice_scores(const ScalarVolume& fixed_labels, const ScalarVolume& moving_labels,
                                                const DisplacementField& u) {
  if (!(fixed_labels.dims() == u.dims()) || !(moving_labels.dims() == u.dims()))
    throw ShapeError("dice_scores: grid mismatch");
  const ScalarVolume warped = warp_nearest(moving_labels, u);
  const std::vector<int> f = label_ids(fixed_labels);
  const std::vector<int> m = label_ids(moving_labels);
  std::vector<int> ids;
  std::set_intersection(f.begin(), f.end(), m.begin(), m.end(), std::back_inserter(ids));
  std::vector<std::pair<int, double>> out;
  for (int id : ids) {
    std::size_t a = 0, b = 0, both = 0;
    for (std::size_t i = 0; i < warped.size(); ++i) {
      const bool p = std::lround(fixed_labels[i]) == id;
      const bool q = std::lround(warped[i]) == id;
      a += p;
      b += q;
      both += p && q;
    }
    out.emplace_back(id, a + b == 0 ? 1.0 : 2.0 * static_cast<double>(both) / static_cast<double>(a + b));
  }
  return out;
}

Vec3 mean_near_plane(const DisplacementField& u, const ScalarVolume& labels, const RegMask& mask, int label,
                     double plane_x, double reach) {
  const Dims d = u.dims();
  if (!(labels.dims() == d) || !(mask.dims() == d)) throw ShapeError("mean_near_plane: grid mismatch");
  std::vector<double> c[3];
  for (std::size_t i = 0; i < d.count(); ++i) {
    if (mask[i] != RegLabel::R || std::lround(labels[i]) != label) continue;
    if (std::abs(d.coords(i)[0] - plane_x) > reach) continue;
    for (int a = 0; a < 3; ++a) c[a].push_back(u[i][a]);
  }
  if (c[0].empty()) throw DataError("mean_near_plane: no rigid voxel of label " + std::to_string(label) + " near the plane");
  return {pairwise_mean(c[0]), pairwise_mean(c[1]), pairwise_mean(c[2])};
}

double jump_recovery(const DisplacementField& u, const ScalarVolume& labels, const RegMask& mask, int label_a,
                     int label_b, double plane_x, double reach, const Vec3& gt_a, const Vec3& gt_b) {
  const Vec3 g = gt_a - gt_b;
  if (g.squaredNorm() == 0.0) throw ParameterError("jump_recovery: ground-truth jump is zero");
  const Vec3 got = mean_near_plane(u, labels, mask, label_a, plane_x, reach) -
                   mean_near_plane(u, labels, mask, label_b, plane_x, reach);
  return got.dot(g) / g.squaredNorm();
}

MetricsReport evaluate(const EvalInputs& in, const DisplacementField& u) {
  if (!in.fixed || !in.moving || !in.mask) throw ParameterError("evaluate needs fixed, moving and mask");
  const Dims d = u.dims();
  if (!(in.fixed->dims() == d) || !(in.moving->dims() == d) || !(in.mask->dims() == d))
    throw ShapeError("evaluate: grid mismatch");
  MetricsReport r;
  r.mse = mse_loss(*in.fixed, warp(*in.moving, u));
  if (in.fixed_labels && in.moving_labels) {
    r.dice = dice_scores(*in.fixed_labels, *in.moving_labels, u);
    if (!r.dice.empty()) {
      std::vector<double> v;
      for (const auto& [id, s] : r.dice) v.push_back(s);
      r.dice_mean = pairwise_mean(v);
    }
  }
  const JacobianField jac = jacobian(u, in.coords);
  const ScalarVolume det = determinant(jac);
  std::size_t folded = 0;
  for (std::size_t i = 0; i < det.size(); ++i)
    if (det[i] <= 0.0) ++folded;
  r.foldings_pct = 100.0 * static_cast<double>(folded) / static_cast<double>(det.size());

  const ScalarVolume ld = log_det(jac, in.eps);
  auto sd = [&](std::span<const std::size_t> region) {
    std::vector<double> v(region.size());
    for (std::size_t k = 0; k < region.size(); ++k) v[k] = ld[region[k]];
    const double mean = pairwise_mean(v);
    for (double& x : v) x = (x - mean) * (x - mean);
    return std::sqrt(pairwise_mean(v));
  };
  std::vector<std::size_t> all(d.count());
  std::iota(all.begin(), all.end(), std::size_t{0});
  r.sdlog_j = sd(all);
  const std::vector<std::size_t> not_s = in.mask->complement(RegLabel::S);
  r.sdlog_j_masked = not_s.empty() ? 0.0 : sd(not_s);
  const std::vector<std::size_t> rigid = in.mask->region(RegLabel::R);
  if (!rigid.empty()) r.l_rigid = l_rigid(u, rigid, in.coords);
  return r;
}

std::vector<std::string> report_columns() {
  return {"mse", "dice_mean", "foldings_pct", "sdlog_j", "sdlog_j_masked", "l_rigid"};
}

std::vector<double> report_values(const MetricsReport& r) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  return {r.mse, r.dice_mean.value_or(nan), r.foldings_pct, r.sdlog_j, r.sdlog_j_masked, r.l_rigid.value_or(nan)};
}

std::vector<ColumnStats> aggregate(const std::vector<std::string>& names, const std::vector<std::vector<double>>& rows) {
  std::vector<ColumnStats> out;
  for (std::size_t c = 0; c < names.size(); ++c) {
    std::vector<double> v;
    for (const auto& row : rows) {
      if (row.size() != names.size()) throw ShapeError("aggregate: row width differs from the column count");
      if (!std::isnan(row[c])) v.push_back(row[c]);
    }
    ColumnStats s{names[c], std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN(), v.size()};
    if (!v.empty()) {
      s.mean = pairwise_mean(v);
      for (double& x : v) x = (x - s.mean) * (x - s.mean);
      s.std = std::sqrt(pairwise_mean(v));
    }
    out.push_back(s);
  }
  return out;
}

namespace {

std::vector<double> ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw ParameterError("spearman needs two equal-length samples of size >= 2");
  const std::vector<double> ra = ranks(a), rb = ranks(b);
  const double ma = pairwise_mean(ra), mb = pairwise_mean(rb);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace mechreg
