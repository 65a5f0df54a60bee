#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mechreg/anatomy.hpp"
#include "mechreg/metrics.hpp"
#include "mechreg/solver.hpp"

namespace mechreg {

using Json = nlohmann::json;

/// Parses a file; IoError if unreadable, ConfigError if not JSON.
Json read_json(const std::filesystem::path& path);
/// Pretty-printed with sorted keys and a trailing newline.
void write_json(const std::filesystem::path& path, const Json& j);

// Config parsers reject unknown keys with ConfigError; keys starting with '_' are comments.
AnatomyConfig anatomy_from_json(const Json& j);
Json to_json(const AnatomyConfig& c);

SolverConfig solver_from_json(const Json& j);
Json to_json(const SolverConfig& c);

RegConfiguration parse_configuration(const std::string& s);
std::string to_string(RegConfiguration c);

/// alpha values linspace(0.99, 0.01, 13), lambda = 1 - alpha.
std::vector<LossWeights> default_sweep_grid();
/// {"alphas": [...]}, {"lambdas": [...]} or {"weights": [{"alpha", "gamma", "lambda"}, ...]}.
std::vector<LossWeights> sweep_grid_from_json(const Json& j);

struct ExperimentConfig {
  std::optional<std::filesystem::path> manifest;
  std::optional<AnatomyConfig> anatomy;
  SolverConfig solver;
  RegConfiguration configuration = RegConfiguration::rigid_shear_jacobian;
  std::vector<LossWeights> sweep_grid = default_sweep_grid();
  /// Manifest split the sweep runs on, and how many of its pairs (0 = all).
  std::string split = "test";
  int max_pairs = 0;
  std::optional<std::filesystem::path> out_dir;
  std::optional<std::uint64_t> seed;
};

/// Relative paths resolve against the config file's directory; referenced files must exist.
ExperimentConfig load_experiment(const std::filesystem::path& path);
ExperimentConfig experiment_from_json(const Json& j, const std::filesystem::path& base_dir);

Json to_json(const LossBreakdown& b);
/// Per-iteration records plus summary; wall time only when `timing` is set.
Json to_json(const SolveTrace& t, bool timing);
Json to_json(const MetricsReport& r);
MetricsReport report_from_json(const Json& j);

}  // namespace mechreg
