#include "mechreg/sweep.hpp"

#include "mechreg/error.hpp"
#include "mechreg/reduce.hpp"

namespace mechreg {

SweepCell run_cell(const SweepCase& c, const LossWeights& w, const SolverConfig& base, RegConfiguration conf) {
  SweepCell cell;
  cell.case_name = c.name;
  cell.weights = w;
  try {
    SolverConfig cfg = base;
    cfg.weights = w;
    const RegMask mask = configure_mask(c.mask, conf);
    RegistrationInputs in;
    in.fixed = &c.fixed;
    in.moving = &c.moving;
    if (c.fixed_labels && c.moving_labels) {
      in.fixed_labels = &*c.fixed_labels;
      in.moving_labels = &*c.moving_labels;
    }
    in.mask = &mask;
    in.normals = c.normals ? &*c.normals : nullptr;
    const SolveResult res = register_images(in, cfg);

    EvalInputs ev;
    ev.fixed = &c.fixed;
    ev.moving = &c.moving;
    ev.fixed_labels = in.fixed_labels;
    ev.moving_labels = in.moving_labels;
    ev.mask = &c.mask;
    ev.eps = cfg.logdet_eps;
    ev.coords = cfg.coords;
    cell.report = evaluate(ev, res.field);
    std::vector<double> norms(res.field.size());
    for (std::size_t i = 0; i < norms.size(); ++i) norms[i] = res.field[i].norm();
    cell.mean_displacement = pairwise_mean(norms);
  } catch (const Error& e) {
    cell.error = e.what();
  }
  return cell;
}

std::vector<SweepCell> run_sweep(const std::vector<SweepCase>& cases, const std::vector<LossWeights>& grid,
                                 const SolverConfig& base, RegConfiguration conf) {
  if (cases.empty() || grid.empty()) throw ParameterError("sweep needs a nonempty grid and dataset");
  std::vector<SweepCell> out;
  out.reserve(cases.size() * grid.size());
  for (const LossWeights& w : grid)
    for (const SweepCase& c : cases) out.push_back(run_cell(c, w, base, conf));
  return out;
}

std::vector<SweepAggregate> aggregate_sweep(const std::vector<SweepCell>& cells, const std::vector<LossWeights>& grid) {
  std::vector<std::string> names = report_columns();
  names.push_back("mean_displacement");
  std::vector<SweepAggregate> out;
  for (const LossWeights& w : grid) {
    SweepAggregate a;
    a.weights = w;
    std::vector<std::vector<double>> rows;
    for (const SweepCell& c : cells) {
      if (c.weights.alpha != w.alpha || c.weights.gamma != w.gamma || c.weights.lambda != w.lambda) continue;
      if (!c.report) {
        ++a.failed;
        continue;
      }
      std::vector<double> row = report_values(*c.report);
      row.push_back(c.mean_displacement);
      rows.push_back(std::move(row));
    }
    a.columns = aggregate(names, rows);
    out.push_back(std::move(a));
  }
  return out;
}

}  // namespace mechreg
