#include "mechreg/losses.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "mechreg/error.hpp"
#include "mechreg/reduce.hpp"

namespace mechreg {

namespace {

struct VoxelTerm {
  double value = 0.0;
  Mat3 w = Mat3::Zero();  // d value / d G
  bool clamped = false;
};

VoxelTerm rigid_term(const Mat3& g, const GradientScaling& scale) {
  const Mat3 ge = scale.apply(g);
  const Mat3 s = 0.5 * (ge + ge.transpose());
  return {s.squaredNorm(), scale.pullback(2.0 * s), false};
}

Mat3 projector(const Vec3& n, ShearVariant variant) {
  const Mat3 p = n * n.transpose();
  return variant == ShearVariant::projected ? p : Mat3(Mat3::Identity() - p);
}

VoxelTerm shear_term(const Mat3& g, const Mat3& proj, const GradientScaling& scale) {
  // The projected field has gradient P G since P is constant over the stencil.
  const Mat3 ge = scale.apply(proj * g);
  const Mat3 s = 0.5 * (ge + ge.transpose());
  return {s.squaredNorm(), proj * scale.pullback(2.0 * s), false};
}

VoxelTerm jac_term(const Mat3& g, const GradientScaling& scale, double eps) {
  const Mat3 j = Mat3::Identity() + scale.apply(g);
  const double det = j.determinant();
  if (det <= eps) {
    const double l = std::log(eps);
    return {l * l, Mat3::Zero(), true};
  }
  const double l = std::log(det);
  // d(log det)/dJ = J^-T
  return {l * l, scale.pullback(2.0 * l * j.inverse().transpose()), false};
}

void check_region(std::span<const std::size_t> region, std::size_t n) {
  if (region.empty()) throw ParameterError("loss region is empty");
  for (std::size_t i : region)
    if (i >= n) throw ShapeError("loss region index out of range");
}

void check_normals(const DirectionField& normals, std::span<const std::size_t> region) {
  for (std::size_t i : region) {
    const double len = normals[i].norm();
    if (std::abs(len - 1.0) > 1e-6) {
      std::ostringstream os;
      os << "normal at voxel " << i << " has length " << len << ", expected unit length";
      throw DataError(os.str());
    }
  }
}

template <class Term>
RegionLoss region_loss(const DisplacementField& u, std::span<const std::size_t> region, Term term) {
  check_region(region, u.size());
  const GradientField g = gradient(u);
  RegionLoss out;
  out.map = ScalarVolume(u.dims(), u.spacing());
  std::vector<double> values(region.size());
  std::size_t clamped = 0;
  for (std::size_t k = 0; k < region.size(); ++k) {
    const std::size_t i = region[k];
    const VoxelTerm t = term(g[i], i);
    values[k] = t.value;
    out.map[i] = t.value;
    clamped += t.clamped ? 1 : 0;
  }
  out.mean = pairwise_mean(values);
  out.count = region.size();
  out.clamped = clamped;
  return out;
}

}  // namespace

RegionLoss rigidity_loss(const DisplacementField& u, std::span<const std::size_t> region, Coordinates coords) {
  const GradientScaling scale = strain_scaling(u.spacing(), coords);
  return region_loss(u, region, [&](const Mat3& g, std::size_t) { return rigid_term(g, scale); });
}

Projection project_split(const Vec3& u, const Vec3& n) {
  const double nn = n.squaredNorm();
  if (!(nn > 0.0)) throw ParameterError("projection direction must be nonzero");
  const Vec3 along = (u.dot(n) / nn) * n;
  return {along, u - along};
}

RegionLoss shearing_loss(const DisplacementField& u, std::span<const std::size_t> region,
                         const DirectionField& normals, Coordinates coords, ShearVariant variant) {
  if (!(normals.dims() == u.dims())) throw ShapeError("shearing_loss: normals dims mismatch");
  check_region(region, u.size());
  check_normals(normals, region);
  const GradientScaling scale = strain_scaling(u.spacing(), coords);
  return region_loss(u, region, [&](const Mat3& g, std::size_t i) {
    return shear_term(g, projector(normals[i], variant), scale);
  });
}

RegionLoss jacobian_loss(const DisplacementField& u, std::span<const std::size_t> region, double eps,
                         Coordinates coords) {
  if (!(eps > 0.0)) throw ParameterError("jacobian_loss: eps must be > 0");
  const GradientScaling scale = jacobian_scaling(u.spacing(), coords);
  return region_loss(u, region, [&](const Mat3& g, std::size_t) { return jac_term(g, scale, eps); });
}

double mse_loss(const ScalarVolume& fixed, const ScalarVolume& warped) {
  if (!(fixed.dims() == warped.dims())) throw ShapeError("mse_loss: dims mismatch");
  std::vector<double> sq(fixed.size());
  for (std::size_t i = 0; i < sq.size(); ++i) {
    const double r = fixed[i] - warped[i];
    sq[i] = r * r;
  }
  return pairwise_mean(sq);
}

std::vector<int> label_ids(const ScalarVolume& labels) {
  std::set<int> ids;
  for (double v : labels.data()) {
    const long r = std::lround(v);
    if (std::abs(v - static_cast<double>(r)) > 1e-9) throw DataError("label map holds non-integer values");
    if (r != 0) ids.insert(static_cast<int>(r));
  }
  return {ids.begin(), ids.end()};
}

LabelChannels warp_onehot(const ScalarVolume& moving_labels, const DisplacementField& u, std::span<const int> ids) {
  if (!(moving_labels.dims() == u.dims())) throw ShapeError("warp_onehot: dims mismatch");
  LabelChannels out;
  out.ids.assign(ids.begin(), ids.end());
  for (std::size_t l = 0; l < ids.size(); ++l) out.channels.emplace_back(u.dims(), u.spacing());
  const Dims d = u.dims();
  for (std::size_t i = 0; i < d.count(); ++i) {
    const TrilinearStencil s = make_stencil(d, d.coords(i).cast<double>() + u[i]);
    for (int k = 0; k < 8; ++k) {
      const int lab = static_cast<int>(std::lround(moving_labels[s.index[k]]));
      for (std::size_t l = 0; l < ids.size(); ++l)
        if (lab == ids[l]) out.channels[l][i] += s.weight[k];
    }
  }
  return out;
}

double soft_dice_loss(const ScalarVolume& fixed_labels, const LabelChannels& warped) {
  const std::vector<int> fixed_ids = label_ids(fixed_labels);
  std::vector<double> dice;
  const std::size_t n = fixed_labels.size();
  for (std::size_t l = 0; l < warped.ids.size(); ++l) {
    const int id = warped.ids[l];
    if (id == 0 || !std::binary_search(fixed_ids.begin(), fixed_ids.end(), id)) continue;
    const ScalarVolume& q = warped.channels[l];
    if (!(q.dims() == fixed_labels.dims())) throw ShapeError("soft_dice_loss: dims mismatch");
    std::vector<double> pq(n), p(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = std::lround(fixed_labels[i]) == id ? 1.0 : 0.0;
      pq[i] = p[i] * q[i];
    }
    const double inter = pairwise_sum(pq);
    const double denom = pairwise_sum(p) + pairwise_sum(q.data());
    dice.push_back((2.0 * inter + kDiceSmoothing) / (denom + kDiceSmoothing));
  }
  if (dice.empty()) throw DataError("soft_dice_loss: no common nonzero labels");
  return 1.0 - pairwise_mean(dice);
}

void LossWeights::validate() const {
  for (double w : {alpha, gamma, lambda})
    if (!(w >= 0.0 && w <= 1.0)) throw ParameterError("loss weights must lie in [0, 1]");
  if (std::abs(alpha + gamma + lambda - 1.0) > 1e-9) throw ParameterError("loss weights must sum to 1");
}

CompositeObjective::CompositeObjective(const CompositeInputs& in) : in_(in) {
  if (!in_.fixed || !in_.moving || !in_.mask) throw ParameterError("composite objective needs images and a mask");
  in_.weights.validate();
  if (!(in_.eps > 0.0)) throw ParameterError("eps must be > 0");
  const Dims d = in_.fixed->dims();
  if (!(in_.moving->dims() == d) || !(in_.mask->dims() == d)) throw ShapeError("composite objective: dims mismatch");
  rigid_region_ = in_.mask->region(RegLabel::R);
  shear_region_ = in_.mask->region(RegLabel::S);
  jac_region_ = in_.mask->region(RegLabel::J);
  if (!shear_region_.empty()) {
    if (!in_.normals) throw ParameterError("mask has S voxels but no normals were given");
    if (!(in_.normals->dims() == d)) throw ShapeError("composite objective: normals dims mismatch");
    check_normals(*in_.normals, shear_region_);
  }
  const bool has_labels = in_.fixed_labels && in_.moving_labels;
  if (has_labels) {
    if (!(in_.fixed_labels->dims() == d) || !(in_.moving_labels->dims() == d))
      throw ShapeError("composite objective: label dims mismatch");
    const std::vector<int> f = label_ids(*in_.fixed_labels);
    const std::vector<int> m = label_ids(*in_.moving_labels);
    std::set_intersection(f.begin(), f.end(), m.begin(), m.end(), std::back_inserter(dice_ids_));
  }
  if (in_.weights.gamma > 0.0 && dice_ids_.empty())
    throw DataError("Dice weight is positive but fixed and moving labels share no nonzero id");
}

LossBreakdown CompositeObjective::evaluate(const DisplacementField& u, VectorField* grad) const {
  const Dims d = dims();
  if (!(u.dims() == d)) throw ShapeError("composite objective: field dims mismatch");
  const std::size_t n = d.count();
  const std::ptrdiff_t sn = static_cast<std::ptrdiff_t>(n);
  const LossWeights& w = in_.weights;
  LossBreakdown out;

  if (grad) *grad = VectorField(d, u.spacing());

  // Similarity: exact derivative of the trilinear interpolant at phi(x).
  {
    std::vector<double> sq(n);
    const ScalarVolume& fixed = *in_.fixed;
    const ScalarVolume& moving = *in_.moving;
    const double coef = 2.0 * w.alpha / static_cast<double>(n);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < sn; ++i) {
      Vec3 gm;
      const double m = interpolate(moving, d.coords(i).cast<double>() + u[i], gm);
      const double r = m - fixed[i];
      sq[i] = r * r;
      if (grad && w.alpha != 0.0) (*grad)[i] = coef * r * gm;
    }
    out.mse = pairwise_mean(sq);
  }

  if (!dice_ids_.empty()) {
    const std::size_t nl = dice_ids_.size();
    const ScalarVolume& fl = *in_.fixed_labels;
    const ScalarVolume& ml = *in_.moving_labels;
    std::vector<std::vector<double>> q(nl, std::vector<double>(n, 0.0));
    std::vector<std::vector<Vec3>> dq(nl, std::vector<Vec3>(n, Vec3::Zero()));
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < sn; ++i) {
      const TrilinearStencil s = make_stencil(d, d.coords(i).cast<double>() + u[i]);
      for (int k = 0; k < 8; ++k) {
        const int lab = static_cast<int>(std::lround(ml[s.index[k]]));
        for (std::size_t l = 0; l < nl; ++l) {
          if (lab != dice_ids_[l]) continue;
          q[l][i] += s.weight[k];
          dq[l][i] += Vec3(s.dweight[0][k], s.dweight[1][k], s.dweight[2][k]);
        }
      }
    }
    std::vector<double> dice(nl);
    for (std::size_t l = 0; l < nl; ++l) {
      const int id = dice_ids_[l];
      std::vector<double> p(n), pq(n);
      for (std::size_t i = 0; i < n; ++i) {
        p[i] = std::lround(fl[i]) == id ? 1.0 : 0.0;
        pq[i] = p[i] * q[l][i];
      }
      const double a = pairwise_sum(pq);
      const double b = pairwise_sum(p) + pairwise_sum(q[l]) + kDiceSmoothing;
      dice[l] = (2.0 * a + kDiceSmoothing) / b;
      if (grad && w.gamma != 0.0) {
        const double scale = -w.gamma / static_cast<double>(nl) / (b * b);
        const double rest = 2.0 * a + kDiceSmoothing;
        for (std::size_t i = 0; i < n; ++i) {
          const double dd = 2.0 * p[i] * b - rest;
          if (dd != 0.0 && !dq[l][i].isZero(0.0)) (*grad)[i] += scale * dd * dq[l][i];
        }
      }
    }
    out.dice = 1.0 - pairwise_mean(dice);
  }

  const bool need_reg = !rigid_region_.empty() || !shear_region_.empty() || !jac_region_.empty();
  if (need_reg) {
    const GradientField g = gradient(u);
    const bool reg_grad = grad && w.lambda != 0.0;
    std::vector<Mat3> wfield;
    if (reg_grad) wfield.assign(n, Mat3::Zero());

    auto run = [&](const std::vector<std::size_t>& region, double term_scale, auto&& term, double& mean_out,
                   std::size_t& clamped_out) {
      if (region.empty()) return;
      std::vector<double> values(region.size());
      std::vector<unsigned char> clamped(region.size(), 0);
      const double coef = w.lambda * term_scale / static_cast<double>(region.size());
      const std::ptrdiff_t rn = static_cast<std::ptrdiff_t>(region.size());
#pragma omp parallel for schedule(static)
      for (std::ptrdiff_t k = 0; k < rn; ++k) {
        const std::size_t i = region[k];
        const VoxelTerm t = term(g[i], i);
        values[k] = t.value;
        clamped[k] = t.clamped ? 1 : 0;
        if (reg_grad) wfield[i] = coef * t.w;
      }
      mean_out = pairwise_mean(values);
      for (unsigned char c : clamped) clamped_out += c;
    };

    std::size_t unused = 0;
    const GradientScaling sscale = strain_scaling(u.spacing(), in_.coords);
    const GradientScaling jscale = jacobian_scaling(u.spacing(), in_.coords);
    run(rigid_region_, in_.scales.rigid, [&](const Mat3& gi, std::size_t) { return rigid_term(gi, sscale); },
        out.rigid, unused);
    run(shear_region_, in_.scales.shear,
        [&](const Mat3& gi, std::size_t i) {
          return shear_term(gi, projector((*in_.normals)[i], in_.shear_variant), sscale);
        },
        out.shear, unused);
    run(jac_region_, in_.scales.jac, [&](const Mat3& gi, std::size_t) { return jac_term(gi, jscale, in_.eps); },
        out.jac, out.n_clamped);
    if (reg_grad) gradient_adjoint(d, wfield, *grad);
  }
  out.n_rigid = rigid_region_.size();
  out.n_shear = shear_region_.size();
  out.n_jac = jac_region_.size();
  out.total = w.alpha * out.mse + w.gamma * out.dice +
              w.lambda * (in_.scales.rigid * out.rigid + in_.scales.shear * out.shear + in_.scales.jac * out.jac);
  return out;
}

LossBreakdown composite_loss(const CompositeInputs& in, const DisplacementField& u) {
  return CompositeObjective(in).evaluate(u, nullptr);
}

DisplacementField composite_gradient(const CompositeInputs& in, const DisplacementField& u) {
  VectorField g;
  CompositeObjective(in).evaluate(u, &g);
  return DisplacementField(std::move(g));
}

}  // namespace mechreg
