#include "mechreg/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "mechreg/error.hpp"

namespace mechreg {

namespace {

void check_keys(const Json& j, const std::set<std::string>& allowed, const char* what) {
  if (!j.is_object()) throw ConfigError(std::string(what) + " must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (!k.empty() && k[0] == '_') continue;
    if (!allowed.count(k)) throw ConfigError(std::string("unknown key '") + k + "' in " + what);
  }
}

template <class T>
void read_opt(const Json& j, const char* key, T& out, const char* what) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const Json::exception&) {
    throw ConfigError(std::string(what) + ": bad type for '" + key + "'");
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path q(p);
  return q.is_absolute() ? q : base / q;
}

Json nullable(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

}  // namespace

Json read_json(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  try {
    return Json::parse(is);
  } catch (const Json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const Json& j) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << j.dump(2) << '\n';
  if (!os) throw IoError("write failed: " + path.string());
}

AnatomyConfig anatomy_from_json(const Json& j) {
  check_keys(j, {"rigid_label_ids", "shear_pairs", "dilation_radius", "knn", "shear_over_rigid", "skip_missing_labels",
                 "label_names"},
             "anatomy config");
  AnatomyConfig c;
  read_opt(j, "rigid_label_ids", c.rigid_label_ids, "anatomy config");
  if (j.contains("shear_pairs")) {
    for (const Json& p : j.at("shear_pairs")) {
      if (!p.is_array() || p.size() != 2 || !p[0].is_number_integer() || !p[1].is_number_integer())
        throw ConfigError("shear_pairs entries must be [id, id]");
      c.shear_pairs.emplace_back(p[0].get<int>(), p[1].get<int>());
    }
  }
  read_opt(j, "dilation_radius", c.dilation_radius, "anatomy config");
  read_opt(j, "knn", c.knn, "anatomy config");
  read_opt(j, "shear_over_rigid", c.shear_over_rigid, "anatomy config");
  read_opt(j, "skip_missing_labels", c.skip_missing_labels, "anatomy config");
  c.validate();
  return c;
}

Json to_json(const AnatomyConfig& c) {
  Json pairs = Json::array();
  for (auto [a, b] : c.shear_pairs) pairs.push_back({a, b});
  return {{"rigid_label_ids", c.rigid_label_ids}, {"shear_pairs", pairs},
          {"dilation_radius", c.dilation_radius}, {"knn", c.knn},
          {"shear_over_rigid", c.shear_over_rigid}, {"skip_missing_labels", c.skip_missing_labels}};
}

SolverConfig solver_from_json(const Json& j) {
  check_keys(j,
             {"parametrization", "svf_steps", "iters", "lr", "beta1", "beta2", "adam_eps", "weights", "scales",
              "levels", "stop_tol", "stop_window", "logdet_eps", "coords", "shear_variant", "seed"},
             "solver config");
  SolverConfig c;
  if (j.contains("parametrization")) {
    const std::string p = j["parametrization"].get<std::string>();
    if (p == "displacement")
      c.parametrization = Parametrization::displacement;
    else if (p == "svf")
      c.parametrization = Parametrization::svf;
    else
      throw ConfigError("parametrization must be 'displacement' or 'svf'");
  }
  read_opt(j, "svf_steps", c.svf_steps, "solver config");
  read_opt(j, "iters", c.iters, "solver config");
  read_opt(j, "lr", c.lr, "solver config");
  read_opt(j, "beta1", c.beta1, "solver config");
  read_opt(j, "beta2", c.beta2, "solver config");
  read_opt(j, "adam_eps", c.adam_eps, "solver config");
  if (j.contains("weights")) {
    const Json& w = j["weights"];
    check_keys(w, {"alpha", "gamma", "lambda"}, "weights");
    read_opt(w, "alpha", c.weights.alpha, "weights");
    read_opt(w, "gamma", c.weights.gamma, "weights");
    read_opt(w, "lambda", c.weights.lambda, "weights");
  }
  if (j.contains("scales")) {
    const Json& s = j["scales"];
    check_keys(s, {"rigid", "shear", "jac"}, "scales");
    read_opt(s, "rigid", c.scales.rigid, "scales");
    read_opt(s, "shear", c.scales.shear, "scales");
    read_opt(s, "jac", c.scales.jac, "scales");
  }
  read_opt(j, "levels", c.levels, "solver config");
  read_opt(j, "stop_tol", c.stop_tol, "solver config");
  read_opt(j, "stop_window", c.stop_window, "solver config");
  read_opt(j, "logdet_eps", c.logdet_eps, "solver config");
  if (j.contains("coords")) {
    const std::string s = j["coords"].get<std::string>();
    if (s == "voxel")
      c.coords = Coordinates::voxel;
    else if (s == "millimeter")
      c.coords = Coordinates::millimeter;
    else
      throw ConfigError("coords must be 'voxel' or 'millimeter'");
  }
  if (j.contains("shear_variant")) {
    const std::string s = j["shear_variant"].get<std::string>();
    if (s == "projected")
      c.shear_variant = ShearVariant::projected;
    else if (s == "residual")
      c.shear_variant = ShearVariant::residual;
    else
      throw ConfigError("shear_variant must be 'projected' or 'residual'");
  }
  read_opt(j, "seed", c.seed, "solver config");
  try {
    c.validate();
  } catch (const ParameterError& e) {
    throw ConfigError(std::string("solver config: ") + e.what());
  }
  return c;
}

Json to_json(const SolverConfig& c) {
  return {{"parametrization", c.parametrization == Parametrization::svf ? "svf" : "displacement"},
          {"svf_steps", c.svf_steps},
          {"iters", c.iters},
          {"lr", c.lr},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"adam_eps", c.adam_eps},
          {"weights", {{"alpha", c.weights.alpha}, {"gamma", c.weights.gamma}, {"lambda", c.weights.lambda}}},
          {"scales", {{"rigid", c.scales.rigid}, {"shear", c.scales.shear}, {"jac", c.scales.jac}}},
          {"levels", c.levels},
          {"stop_tol", c.stop_tol},
          {"stop_window", c.stop_window},
          {"logdet_eps", c.logdet_eps},
          {"coords", c.coords == Coordinates::voxel ? "voxel" : "millimeter"},
          {"shear_variant", c.shear_variant == ShearVariant::projected ? "projected" : "residual"},
          {"seed", c.seed}};
}

RegConfiguration parse_configuration(const std::string& s) {
  if (s == "jacobian_only" || s == "J") return RegConfiguration::jacobian_only;
  if (s == "rigid_jacobian" || s == "R+J") return RegConfiguration::rigid_jacobian;
  if (s == "rigid_shear_jacobian" || s == "R+S+J") return RegConfiguration::rigid_shear_jacobian;
  throw ConfigError("configuration must be jacobian_only, rigid_jacobian or rigid_shear_jacobian");
}

std::string to_string(RegConfiguration c) {
  switch (c) {
    case RegConfiguration::jacobian_only:
      return "jacobian_only";
    case RegConfiguration::rigid_jacobian:
      return "rigid_jacobian";
    default:
      return "rigid_shear_jacobian";
  }
}

std::vector<LossWeights> default_sweep_grid() {
  std::vector<LossWeights> g;
  for (int k = 0; k < 13; ++k) {
    const double alpha = 0.99 - 0.98 * k / 12.0;
    g.push_back({alpha, 0.0, 1.0 - alpha});
  }
  return g;
}

std::vector<LossWeights> sweep_grid_from_json(const Json& j) {
  check_keys(j, {"alphas", "lambdas", "weights"}, "sweep grid");
  if (j.size() != 1) throw ConfigError("sweep grid takes exactly one of alphas, lambdas, weights");
  std::vector<LossWeights> g;
  try {
    if (j.contains("alphas"))
      for (double a : j["alphas"].get<std::vector<double>>()) g.push_back({a, 0.0, 1.0 - a});
    if (j.contains("lambdas"))
      for (double l : j["lambdas"].get<std::vector<double>>()) g.push_back(LossWeights::synthetic(l));
    if (j.contains("weights"))
      for (const Json& w : j["weights"]) {
        check_keys(w, {"alpha", "gamma", "lambda"}, "sweep weights");
        g.push_back({w.value("alpha", 1.0), w.value("gamma", 0.0), w.value("lambda", 0.0)});
      }
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("sweep grid: ") + e.what());
  }
  if (g.empty()) throw ConfigError("sweep grid is empty");
  for (const LossWeights& w : g) {
    try {
      w.validate();
    } catch (const ParameterError& e) {
      throw ConfigError(std::string("sweep grid: ") + e.what());
    }
  }
  return g;
}

ExperimentConfig experiment_from_json(const Json& j, const std::filesystem::path& base_dir) {
  check_keys(j, {"manifest", "anatomy", "solver", "configuration", "sweep", "split", "max_pairs", "out_dir", "seed"},
             "experiment config");
  ExperimentConfig e;
  if (j.contains("manifest")) {
    e.manifest = resolve(base_dir, j["manifest"].get<std::string>());
    if (!std::filesystem::exists(*e.manifest)) throw ConfigError("manifest not found: " + e.manifest->string());
  }
  if (j.contains("anatomy")) {
    const Json& a = j["anatomy"];
    if (a.is_string()) {
      const std::filesystem::path p = resolve(base_dir, a.get<std::string>());
      if (!std::filesystem::exists(p)) throw ConfigError("anatomy config not found: " + p.string());
      e.anatomy = anatomy_from_json(read_json(p));
    } else {
      e.anatomy = anatomy_from_json(a);
    }
  }
  if (j.contains("solver")) e.solver = solver_from_json(j["solver"]);
  if (j.contains("configuration")) e.configuration = parse_configuration(j["configuration"].get<std::string>());
  if (j.contains("sweep")) e.sweep_grid = sweep_grid_from_json(j["sweep"]);
  read_opt(j, "split", e.split, "experiment config");
  if (e.split != "train" && e.split != "val" && e.split != "test") throw ConfigError("split must be train, val or test");
  read_opt(j, "max_pairs", e.max_pairs, "experiment config");
  if (e.max_pairs < 0) throw ConfigError("max_pairs must be >= 0");
  if (j.contains("out_dir")) e.out_dir = resolve(base_dir, j["out_dir"].get<std::string>());
  if (j.contains("seed")) e.seed = j["seed"].get<std::uint64_t>();
  return e;
}

ExperimentConfig load_experiment(const std::filesystem::path& path) {
  return experiment_from_json(read_json(path), path.parent_path());
}

Json to_json(const LossBreakdown& b) {
  return {{"mse", b.mse},         {"dice", b.dice},       {"rigid", b.rigid},     {"shear", b.shear},
          {"jac", b.jac},         {"total", b.total},     {"n_rigid", b.n_rigid}, {"n_shear", b.n_shear},
          {"n_jac", b.n_jac},     {"n_clamped", b.n_clamped}};
}

Json to_json(const SolveTrace& t, bool timing) {
  Json iters = Json::array();
  for (const IterationRecord& r : t.iterations) {
    Json e = to_json(r.loss);
    e["level"] = r.level;
    e["iter"] = r.iter;
    iters.push_back(std::move(e));
  }
  Json j = {{"iterations", iters}, {"converged", t.converged}, {"best_total", t.best_total}, {"best_iter", t.best_iter}};
  if (timing) j["wall_seconds"] = t.wall_seconds;
  return j;
}

Json to_json(const MetricsReport& r) {
  Json dice = Json::object();
  for (const auto& [id, s] : r.dice) dice[std::to_string(id)] = s;
  Json j = {{"mse", r.mse},
            {"dice", dice},
            {"dice_mean", r.dice_mean ? Json(*r.dice_mean) : Json(nullptr)},
            {"foldings_pct", r.foldings_pct},
            {"sdlog_j", nullable(r.sdlog_j)},
            {"sdlog_j_masked", nullable(r.sdlog_j_masked)},
            {"l_rigid", r.l_rigid ? Json(*r.l_rigid) : Json(nullptr)}};
  if (r.runtime_s) j["runtime_s"] = *r.runtime_s;
  return j;
}

MetricsReport report_from_json(const Json& j) {
  MetricsReport r;
  try {
    r.mse = j.at("mse").get<double>();
    if (j.contains("dice"))
      for (const auto& [k, v] : j["dice"].items()) r.dice.emplace_back(std::stoi(k), v.get<double>());
    if (j.contains("dice_mean") && !j["dice_mean"].is_null()) r.dice_mean = j["dice_mean"].get<double>();
    r.foldings_pct = j.at("foldings_pct").get<double>();
    const auto num = [](const Json& v) { return v.is_null() ? std::nan("") : v.get<double>(); };
    r.sdlog_j = num(j.at("sdlog_j"));
    r.sdlog_j_masked = num(j.at("sdlog_j_masked"));
    if (j.contains("l_rigid") && !j["l_rigid"].is_null()) r.l_rigid = j["l_rigid"].get<double>();
    if (j.contains("runtime_s")) r.runtime_s = j["runtime_s"].get<double>();
  } catch (const std::exception& e) {
    throw DataError(std::string("malformed metrics report: ") + e.what());
  }
  return r;
}

}  // namespace mechreg
