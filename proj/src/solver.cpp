#include "mechreg/solver.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include "mechreg/anatomy.hpp"
#include "mechreg/error.hpp"

namespace mechreg {

RegMask configure_mask(const RegMask& full, RegConfiguration c) {
  RegMask out = full;
  for (std::size_t i = 0; i < out.size(); ++i) {
    switch (c) {
      case RegConfiguration::jacobian_only:
        out[i] = RegLabel::J;
        break;
      case RegConfiguration::rigid_jacobian:
        if (out[i] == RegLabel::S) out[i] = RegLabel::J;
        break;
      case RegConfiguration::rigid_shear_jacobian:
        break;
    }
  }
  return out;
}

void SolverConfig::validate() const {
  if (iters < 1) throw ParameterError("iters must be >= 1");
  if (!(lr > 0.0)) throw ParameterError("lr must be > 0");
  if (levels < 1) throw ParameterError("levels must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ParameterError("Adam betas must be in [0, 1)");
  if (!(adam_eps > 0.0)) throw ParameterError("adam_eps must be > 0");
  if (svf_steps < 1) throw ParameterError("svf_steps must be >= 1");
  if (stop_window < 1 || stop_tol < 0.0) throw ParameterError("invalid stopping rule");
  if (!(logdet_eps > 0.0)) throw ParameterError("logdet_eps must be > 0");
  if (!(scales.rigid >= 0.0 && scales.shear >= 0.0 && scales.jac >= 0.0))
    throw ParameterError("term scales must be nonnegative");
  weights.validate();
}

ScalarVolume subsample_labels(const ScalarVolume& labels) {
  const Dims f = labels.dims();
  const Dims c{(f.nx + 1) / 2, (f.ny + 1) / 2, (f.nz + 1) / 2};
  const Spacing& s = labels.spacing();
  ScalarVolume out(c, {2.0 * s[0], 2.0 * s[1], 2.0 * s[2]});
  for (int z = 0; z < c.nz; ++z)
    for (int y = 0; y < c.ny; ++y)
      for (int x = 0; x < c.nx; ++x) out.at(x, y, z) = labels.at(2 * x, 2 * y, 2 * z);
  return out;
}

namespace {

struct Level {
  ScalarVolume fixed;
  ScalarVolume moving;
  std::optional<ScalarVolume> fixed_labels;
  std::optional<ScalarVolume> moving_labels;
  RegMask mask;
  DirectionField normals;
  bool has_normals = false;
};

// levels[0] is the input grid; each further entry halves the previous one.
std::vector<Level> build_pyramid(const RegistrationInputs& in, int count) {
  std::vector<Level> levels(1);
  Level& top = levels[0];
  top.fixed = *in.fixed;
  top.moving = *in.moving;
  if (in.fixed_labels && in.moving_labels) {
    top.fixed_labels = *in.fixed_labels;
    top.moving_labels = *in.moving_labels;
  }
  top.mask = *in.mask;
  if (in.normals) {
    top.normals = *in.normals;
    top.has_normals = true;
  }
  for (int l = 1; l < count; ++l) {
    const Level& f = levels.back();
    const Dims& d = f.fixed.dims();
    if (d.nx < 6 || d.ny < 6 || d.nz < 6) throw ParameterError("too many levels for the image size");
    Level c;
    c.fixed = downsample2(f.fixed);
    c.moving = downsample2(f.moving);
    if (f.fixed_labels) {
      c.fixed_labels = subsample_labels(*f.fixed_labels);
      c.moving_labels = subsample_labels(*f.moving_labels);
    }
    auto [m, n] = downsample_mask(f.mask, f.has_normals ? &f.normals : nullptr);
    c.mask = std::move(m);
    c.normals = std::move(n);
    c.has_normals = f.has_normals;
    levels.push_back(std::move(c));
  }
  return levels;
}

void adam_step(VectorField& x, VectorField& m, VectorField& v, const VectorField& g, int t, const SolverConfig& cfg) {
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(x.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i].cwiseProduct(g[i]);
    const Vec3 mh = m[i] / c1;
    const Vec3 vh = v[i] / c2;
    x[i] -= cfg.lr * mh.cwiseQuotient((vh.cwiseSqrt().array() + cfg.adam_eps).matrix());
  }
}

}  // namespace

SolveResult register_images(const RegistrationInputs& in, const SolverConfig& cfg) {
  cfg.validate();
  if (!in.fixed || !in.moving || !in.mask) throw ParameterError("register needs fixed, moving and mask");
  const Dims d = in.fixed->dims();
  if (!(in.moving->dims() == d) || !(in.mask->dims() == d)) throw ShapeError("register: grid mismatch");
  if (in.normals && !(in.normals->dims() == d)) throw ShapeError("register: normals grid mismatch");
  if (in.fixed_labels && !(in.fixed_labels->dims() == d)) throw ShapeError("register: label grid mismatch");
  if (in.moving_labels && !(in.moving_labels->dims() == d)) throw ShapeError("register: label grid mismatch");
  in.fixed->check_finite();
  in.moving->check_finite();

  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<Level> pyramid = build_pyramid(in, cfg.levels);
  const bool svf = cfg.parametrization == Parametrization::svf;

  SolveResult result;
  VectorField params;  // u or v on the current level
  for (int l = cfg.levels - 1; l >= 0; --l) {
    const Level& lv = pyramid[l];
    const Dims ld = lv.fixed.dims();
    const Spacing& ls = lv.fixed.spacing();
    if (l == cfg.levels - 1)
      params = VectorField(ld, ls);
    else
      params = upsample2(params, ld, ls);

    CompositeInputs ci;
    ci.fixed = &lv.fixed;
    ci.moving = &lv.moving;
    if (lv.fixed_labels) {
      ci.fixed_labels = &*lv.fixed_labels;
      ci.moving_labels = &*lv.moving_labels;
    }
    ci.mask = &lv.mask;
    ci.normals = lv.has_normals ? &lv.normals : nullptr;
    ci.weights = cfg.weights;
    ci.scales = cfg.scales;
    ci.eps = cfg.logdet_eps;
    ci.coords = cfg.coords;
    ci.shear_variant = cfg.shear_variant;
    const CompositeObjective objective(ci);

    VectorField m(ld, ls), v(ld, ls), grad(ld, ls);
    std::vector<double> history;
    double best = std::numeric_limits<double>::infinity();
    for (int it = 0; it < cfg.iters; ++it) {
      std::vector<DisplacementField> trace;
      DisplacementField u;
      if (svf) {
        trace = integrate_svf_trace(VelocityField(params), cfg.svf_steps);
        u = trace.back();
      } else {
        u = DisplacementField(params);
      }
      const LossBreakdown loss = objective.evaluate(u, &grad);
      if (!std::isfinite(loss.total))
        throw NumericalError("non-finite loss at level " + std::to_string(l) + ", iteration " + std::to_string(it) +
                             "; try a smaller learning rate");
      result.trace.iterations.push_back({l, it, loss});
      history.push_back(loss.total);
      if (l == 0 && loss.total < best) {
        best = loss.total;
        result.trace.best_total = loss.total;
        result.trace.best_iter = it;
        result.field = u;
        if (svf) result.velocity = VelocityField(params);
      }
      if (it >= cfg.stop_window) {
        const double past = history[it - cfg.stop_window];
        const double rel = (past - loss.total) / std::max(std::abs(past), 1e-300);
        if (rel < cfg.stop_tol) {
          if (l == 0) result.trace.converged = true;
          break;
        }
      }
      if (it + 1 == cfg.iters) break;  // the last gradient would not be evaluated
      if (svf) grad = integrate_svf_adjoint(trace, grad);
      adam_step(params, m, v, grad, it + 1, cfg);
    }
  }
  result.trace.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

}  // namespace mechreg
