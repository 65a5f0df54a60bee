#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mechreg/metrics.hpp"
#include "mechreg/solver.hpp"

namespace mechreg {

/// One registration problem of a sweep. `mask` is the full anatomical mask;
/// the sweep configuration relabels it for solving, evaluation uses it as is.
struct SweepCase {
  std::string name;
  ScalarVolume fixed;
  ScalarVolume moving;
  std::optional<ScalarVolume> fixed_labels;
  std::optional<ScalarVolume> moving_labels;
  RegMask mask;
  std::optional<DirectionField> normals;
};

struct SweepCell {
  std::string case_name;
  LossWeights weights;
  std::optional<MetricsReport> report;  ///< empty when the cell failed
  double mean_displacement = 0.0;       ///< mean |u| over the domain
  std::string error;
};

/// Register-and-evaluate for a single case, the unit a sweep repeats.
SweepCell run_cell(const SweepCase& c, const LossWeights& w, const SolverConfig& base, RegConfiguration conf);

/// Every (weights, case) cell, weights-major. Failed cells are recorded and the sweep continues.
std::vector<SweepCell> run_sweep(const std::vector<SweepCase>& cases, const std::vector<LossWeights>& grid,
                                 const SolverConfig& base, RegConfiguration conf);

struct SweepAggregate {
  LossWeights weights;
  std::vector<ColumnStats> columns;  ///< report_columns() plus mean_displacement
  std::size_t failed = 0;
};

std::vector<SweepAggregate> aggregate_sweep(const std::vector<SweepCell>& cells, const std::vector<LossWeights>& grid);

}  // namespace mechreg
