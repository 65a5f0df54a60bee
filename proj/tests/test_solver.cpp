#include <algorithm>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "doctest.h"
#include "mechreg/error.hpp"
#include "mechreg/solver.hpp"
#include "mechreg/synthgen.hpp"
#include "test_util.hpp"

using namespace mechreg;

namespace {

RigidParams small_rigid() {
  RigidParams p;
  p.dims = Dims{32, 32, 32};
  p.edge_min = 8;
  p.edge_max = 12;
  p.center_jitter = 2;
  p.max_angle_deg = 10;
  p.max_translation = 2;
  return p;
}

struct Problem {
  RigidSample s;
  RegMask full;
  RegMask mask;
  RegistrationInputs in;

  Problem(std::uint64_t seed, RegConfiguration c) : s(gen_rigid(seed, small_rigid())) {
    full = build_mask(s.fixed_labels, rigid_sample_anatomy());
    mask = configure_mask(full, c);
    in.fixed = &s.fixed;
    in.moving = &s.moving;
    in.mask = &mask;
  }
};

SolverConfig quick(double lambda, Parametrization p = Parametrization::displacement) {
  SolverConfig c;
  c.parametrization = p;
  c.iters = 40;
  c.lr = 0.05;
  c.levels = 2;
  c.weights = LossWeights::synthetic(lambda);
  return c;
}

}  // namespace

TEST_CASE("solver config validation") {
  SolverConfig c;
  CHECK_NOTHROW(c.validate());
  c.iters = 0;
  CHECK_THROWS_AS(c.validate(), ParameterError);
  c = SolverConfig{};
  c.lr = 0;
  CHECK_THROWS_AS(c.validate(), ParameterError);
  c = SolverConfig{};
  c.levels = 0;
  CHECK_THROWS_AS(c.validate(), ParameterError);
  c = SolverConfig{};
  c.beta1 = 1.0;
  CHECK_THROWS_AS(c.validate(), ParameterError);
  c = SolverConfig{};
  c.weights = LossWeights{0.5, 0.0, 0.4};
  CHECK_THROWS_AS(c.validate(), ParameterError);
}

TEST_CASE("configure_mask relabels per configuration") {
  const Dims d{3, 1, 1};
  RegMask m(d);
  m[0] = RegLabel::R;
  m[1] = RegLabel::S;
  const RegMask j = configure_mask(m, RegConfiguration::jacobian_only);
  const RegMask rj = configure_mask(m, RegConfiguration::rigid_jacobian);
  const RegMask all = configure_mask(m, RegConfiguration::rigid_shear_jacobian);
  CHECK(j.counts()[0] == 3);
  CHECK(rj[0] == RegLabel::R);
  CHECK(rj[1] == RegLabel::J);
  CHECK(all == m);
}

TEST_CASE("subsample_labels keeps even voxels") {
  const Dims d{5, 4, 3};
  ScalarVolume l(d);
  for (std::size_t i = 0; i < d.count(); ++i) l[i] = static_cast<double>(i);
  const ScalarVolume c = subsample_labels(l);
  CHECK(c.dims() == Dims{3, 2, 2});
  CHECK(c.at(1, 1, 1) == l.at(2, 2, 2));
  CHECK(c.at(2, 0, 1) == l.at(4, 0, 2));
}

TEST_CASE("already registered images stay put") {
  const Dims d{16, 16, 16};
  const ScalarVolume img = test::random_volume(d, 3);
  const RegMask mask(d);
  RegistrationInputs in;
  in.fixed = &img;
  in.moving = &img;
  in.mask = &mask;
  for (Parametrization p : {Parametrization::displacement, Parametrization::svf}) {
    SolverConfig c = quick(0.3, p);
    c.iters = 5;
    c.levels = 1;
    const SolveResult r = register_images(in, c);
    CHECK(r.trace.iterations.size() <= 5);
    CHECK(r.trace.best_total < 1e-8);
    CHECK(r.field.max_norm() < 1e-6);
  }
}

TEST_CASE("registration lowers the loss and reports the best iterate") {
  Problem pr(5, RegConfiguration::jacobian_only);
  const SolverConfig c = quick(0.1);
  const SolveResult r = register_images(pr.in, c);
  const auto& it = r.trace.iterations;
  CHECK(it.size() <= static_cast<std::size_t>(c.iters * c.levels));
  double first = -1, running = 1e300;
  for (const IterationRecord& rec : it) {
    if (rec.level != 0) continue;
    if (first < 0) first = rec.loss.total;
    running = std::min(running, rec.loss.total);
  }
  CHECK(r.trace.best_total == running);
  CHECK(r.trace.best_total <= first);
  CHECK(r.trace.best_total < 0.5 * it.front().loss.total);

  CompositeInputs ci;
  ci.fixed = pr.in.fixed;
  ci.moving = pr.in.moving;
  ci.mask = pr.in.mask;
  ci.weights = c.weights;
  CHECK(composite_loss(ci, r.field).total == doctest::Approx(r.trace.best_total).epsilon(1e-12));
  CHECK(mse_loss(pr.s.fixed, warp(pr.s.moving, r.field)) < 0.25 * mse_loss(pr.s.fixed, pr.s.moving));
}

TEST_CASE("svf registration has no folds") {
  for (std::uint64_t seed : {7u, 8u}) {
    Problem pr(seed, RegConfiguration::rigid_jacobian);
    const SolveResult r = register_images(pr.in, quick(0.1, Parametrization::svf));
    const ScalarVolume det = determinant(jacobian(r.field));
    for (double v : det.data()) CHECK(v > 0.0);
    CHECK(r.velocity.size() == r.field.size());
    CHECK(r.field == integrate_svf(r.velocity, 7));
  }
}

TEST_CASE("registration is deterministic across runs and thread counts") {
  Problem pr(9, RegConfiguration::rigid_jacobian);
  const SolverConfig c = quick(0.2, Parametrization::svf);
#ifdef _OPENMP
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
#endif
  const SolveResult a = register_images(pr.in, c);
#ifdef _OPENMP
  omp_set_num_threads(3);
#endif
  const SolveResult b = register_images(pr.in, c);
#ifdef _OPENMP
  omp_set_num_threads(saved);
#endif
  CHECK(a.field == b.field);
  REQUIRE(a.trace.iterations.size() == b.trace.iterations.size());
  for (std::size_t k = 0; k < a.trace.iterations.size(); ++k)
    CHECK(a.trace.iterations[k].loss.total == b.trace.iterations[k].loss.total);
}

TEST_CASE("rigid regularization keeps the cuboid rigid") {
  Problem pj(11, RegConfiguration::jacobian_only);
  Problem pr(11, RegConfiguration::rigid_jacobian);
  const SolverConfig c = quick(0.1, Parametrization::svf);
  const SolveResult rj = register_images(pj.in, c);
  const SolveResult rr = register_images(pr.in, c);
  const auto inside = pr.full.region(RegLabel::R);
  CHECK(rigidity_loss(rr.field, inside).mean < rigidity_loss(rj.field, inside).mean);
}

TEST_CASE("exploding steps raise a numerical error") {
  Problem pr(12, RegConfiguration::jacobian_only);
  SolverConfig c = quick(0.5);
  c.lr = 1e300;
  c.levels = 1;
  CHECK_THROWS_AS(register_images(pr.in, c), NumericalError);
}

TEST_CASE("mismatched grids are rejected") {
  Problem pr(13, RegConfiguration::jacobian_only);
  const ScalarVolume other(Dims{32, 32, 31});
  RegistrationInputs in = pr.in;
  in.moving = &other;
  CHECK_THROWS_AS(register_images(in, quick(0.1)), ShapeError);
}
