#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mechreg/config.hpp"
#include "mechreg/sweep.hpp"

namespace mechreg {

namespace fs = std::filesystem;

struct SynthOptions {
  std::string kind = "rigid";  ///< rigid or shear
  std::array<int, 3> counts{200, 50, 50};  ///< train, val, test
  std::uint64_t seed = 0;
  fs::path out;
  /// Neighbour count for the normals of shear samples.
  int knn = 120;
};

/// Writes one directory per sample plus manifest.json; returns the manifest.
Json cmd_synth(const SynthOptions& o);

struct MakeMasksOptions {
  fs::path labels;
  std::optional<fs::path> config;  ///< anatomy JSON; default_anatomy.json when absent
  fs::path out;
};

void cmd_make_masks(const MakeMasksOptions& o);

struct RegisterOptions {
  fs::path fixed;
  fs::path moving;
  fs::path mask;
  std::optional<fs::path> normals;
  std::optional<fs::path> fixed_labels;
  std::optional<fs::path> moving_labels;
  std::optional<fs::path> config;  ///< experiment JSON (solver + configuration)
  std::optional<std::uint64_t> seed;
  fs::path out;
  bool timing = false;
};

/// Writes field.bmrv, trace.json and report.json.
MetricsReport cmd_register(const RegisterOptions& o);

struct EvaluateOptions {
  fs::path fixed;
  fs::path moving;
  fs::path field;
  fs::path mask;
  std::optional<fs::path> fixed_labels;
  std::optional<fs::path> moving_labels;
  fs::path out;
};

MetricsReport cmd_evaluate(const EvaluateOptions& o);

struct SweepOptions {
  fs::path config;
  std::optional<std::uint64_t> seed;
  std::optional<fs::path> out;
};

/// Writes sweep.csv (one row per cell), sweep_summary.csv and sweep_summary.json.
std::vector<SweepCell> cmd_sweep(const SweepOptions& o);

struct ReportOptions {
  std::vector<fs::path> inputs;  ///< report.json files
  fs::path out;
};

/// Writes reports.csv (one row per input) and summary.csv (mean and std per column).
void cmd_report(const ReportOptions& o);

/// Loads the pairs of one manifest split as sweep cases.
std::vector<SweepCase> load_cases(const fs::path& manifest, const std::string& split, int max_pairs);

fs::path default_anatomy_path();

/// Shortest round-trip decimal form; empty for NaN.
std::string csv_number(double x);

}  // namespace mechreg
