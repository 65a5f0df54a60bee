#include "mechreg/commands.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "mechreg/anatomy.hpp"
#include "mechreg/error.hpp"
#include "mechreg/synthgen.hpp"
#include "mechreg/volume_io.hpp"

namespace mechreg {

namespace {

constexpr double kSelfCheckMse = 1e-3;
const char* const kSplits[3] = {"train", "val", "test"};

void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw IoError("cannot create directory " + p.string() + ": " + ec.message());
}

Json vec_json(const Vec3& v) { return {v[0], v[1], v[2]}; }

Json cuboid_json(const Cuboid& c) { return {{"center", vec_json(c.center)}, {"half", vec_json(c.half)}}; }

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream os(p, std::ios::trunc | std::ios::binary);
  if (!os) throw IoError("cannot open " + p.string() + " for writing");
  os << s;
  if (!os) throw IoError("write failed: " + p.string());
}

void self_check(const ScalarVolume& fixed, const ScalarVolume& moving, const DisplacementField& gt, std::uint64_t seed) {
  const double mse = mse_loss(fixed, warp(moving, gt));
  if (!(mse < kSelfCheckMse)) {
    std::ostringstream os;
    os << "sample with seed " << seed << " fails its ground-truth self-check (MSE " << mse << ")";
    throw DataError(os.str());
  }
}

struct WrittenSample {
  Json files;
  Json truth;
};

WrittenSample write_common(const fs::path& dir, const ScalarVolume& fixed, const ScalarVolume& moving,
                           const ScalarVolume& fl, const ScalarVolume& ml, const RegMask& mask,
                           const DirectionField& normals, const DisplacementField& gt) {
  ensure_dir(dir);
  write_volume(dir / "fixed.bmrv", fixed);
  write_volume(dir / "moving.bmrv", moving);
  write_volume(dir / "fixed_labels.bmrv", fl, VolumeDtype::u16);
  write_volume(dir / "moving_labels.bmrv", ml, VolumeDtype::u16);
  write_volume(dir / "mask.bmrv", mask.to_volume(), VolumeDtype::u16);
  write_volume(dir / "normals.bmrv", normals);
  write_volume(dir / "gt.bmrv", gt);
  WrittenSample w;
  const std::string d = dir.filename().string();
  w.files = {{"fixed", d + "/fixed.bmrv"},   {"moving", d + "/moving.bmrv"},
             {"fixed_labels", d + "/fixed_labels.bmrv"}, {"moving_labels", d + "/moving_labels.bmrv"},
             {"mask", d + "/mask.bmrv"},     {"normals", d + "/normals.bmrv"},
             {"gt", d + "/gt.bmrv"}};
  return w;
}

std::string join_csv(const std::vector<std::string>& cells) {
  std::string s;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) s += ',';
    const std::string& c = cells[i];
    if (c.find_first_of(",\"\n") != std::string::npos) {
      s += '"';
      for (char ch : c) {
        if (ch == '"') s += '"';
        s += ch;
      }
      s += '"';
    } else {
      s += c;
    }
  }
  return s + '\n';
}

}  // namespace

std::string csv_number(double x) {
  if (std::isnan(x)) return "";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

fs::path default_anatomy_path() { return fs::path(MECHREG_DEFAULT_CONFIG_DIR) / "default_anatomy.json"; }

Json cmd_synth(const SynthOptions& o) {
  if (o.kind != "rigid" && o.kind != "shear") throw ParameterError("--kind must be rigid or shear");
  for (int c : o.counts)
    if (c < 0) throw ParameterError("sample counts must be nonnegative");
  ensure_dir(o.out);
  const bool rigid = o.kind == "rigid";
  AnatomyConfig anatomy = rigid ? rigid_sample_anatomy() : shear_sample_anatomy();
  if (!rigid) anatomy.knn = o.knn;

  Json samples = Json::array();
  for (int split = 0; split < 3; ++split) {
    for (int k = 0; k < o.counts[split]; ++k) {
      const std::uint64_t seed = sample_seed(o.seed, split, static_cast<std::uint64_t>(k));
      char name[32];
      std::snprintf(name, sizeof name, "%s_%04d", kSplits[split], k);
      const fs::path dir = o.out / name;
      WrittenSample w;
      if (rigid) {
        const RigidSample s = gen_rigid(seed);
        const DisplacementField gt = gt_field(s);
        self_check(s.fixed, s.moving, gt, seed);
        const RegMask mask = build_mask(s.fixed_labels, anatomy);
        const DirectionField normals(s.fixed.dims(), s.fixed.spacing());
        w = write_common(dir, s.fixed, s.moving, s.fixed_labels, s.moving_labels, mask, normals, gt);
        w.truth = {{"type", "rigid"},
                   {"cuboid", cuboid_json(s.cuboid)},
                   {"axis", vec_json(s.motion.axis)},
                   {"angle_rad", s.motion.angle},
                   {"translation", vec_json(s.motion.translation)},
                   {"center", vec_json(s.motion.center)}};
      } else {
        const ShearSample s = gen_shear(seed);
        const DisplacementField gt = gt_field(s);
        self_check(s.fixed, s.moving, gt, seed);
        const RegMask mask = build_mask(s.fixed_labels, anatomy);
        const DirectionField normals = estimate_normals(mask, anatomy);
        w = write_common(dir, s.fixed, s.moving, s.fixed_labels, s.moving_labels, mask, normals, gt);
        w.truth = {{"type", "shear"},
                   {"a", cuboid_json(s.a)},
                   {"b", cuboid_json(s.b)},
                   {"translation_a", vec_json(s.translation_a)},
                   {"translation_b", vec_json(s.translation_b)},
                   {"interface_x", s.interface_x}};
      }
      samples.push_back({{"split", kSplits[split]},
                         {"index", k},
                         {"seed", seed},
                         {"files", w.files},
                         {"ground_truth", w.truth}});
    }
  }
  Json manifest = {{"kind", o.kind},
                   {"seed", o.seed},
                   {"counts", {{"train", o.counts[0]}, {"val", o.counts[1]}, {"test", o.counts[2]}}},
                   {"anatomy", to_json(anatomy)},
                   {"samples", samples}};
  write_json(o.out / "manifest.json", manifest);
  return manifest;
}

void cmd_make_masks(const MakeMasksOptions& o) {
  const AnatomyConfig cfg = anatomy_from_json(read_json(o.config.value_or(default_anatomy_path())));
  const ScalarVolume labels = read_scalar_volume(o.labels);
  const RegMask mask = build_mask(labels, cfg);
  ensure_dir(o.out);
  const DirectionField normals =
      mask.counts()[static_cast<int>(RegLabel::S)] > 0 ? estimate_normals(mask, cfg)
                                                       : DirectionField(mask.dims(), mask.spacing());
  write_volume(o.out / "mask.bmrv", mask.to_volume(), VolumeDtype::u16);
  write_volume(o.out / "normals.bmrv", normals);
  const auto c = mask.counts();
  write_json(o.out / "mask.json", {{"provenance", mask.provenance()},
                                   {"anatomy", to_json(cfg)},
                                   {"counts", {{"J", c[0]}, {"R", c[1]}, {"S", c[2]}}}});
}

MetricsReport cmd_register(const RegisterOptions& o) {
  ExperimentConfig exp;
  if (o.config) exp = load_experiment(*o.config);
  SolverConfig cfg = exp.solver;
  if (o.seed) cfg.seed = *o.seed;
  else if (exp.seed) cfg.seed = *exp.seed;

  const ScalarVolume fixed = read_scalar_volume(o.fixed);
  const ScalarVolume moving = read_scalar_volume(o.moving);
  const RegMask full = RegMask::from_volume(read_scalar_volume(o.mask));
  std::optional<DirectionField> normals;
  if (o.normals) normals = DirectionField(read_vector_volume(*o.normals));
  std::optional<ScalarVolume> fl, ml;
  if (o.fixed_labels) fl = read_scalar_volume(*o.fixed_labels);
  if (o.moving_labels) ml = read_scalar_volume(*o.moving_labels);

  const RegMask mask = configure_mask(full, exp.configuration);
  RegistrationInputs in;
  in.fixed = &fixed;
  in.moving = &moving;
  in.fixed_labels = fl ? &*fl : nullptr;
  in.moving_labels = ml ? &*ml : nullptr;
  in.mask = &mask;
  in.normals = normals ? &*normals : nullptr;
  const SolveResult res = register_images(in, cfg);

  EvalInputs ev;
  ev.fixed = &fixed;
  ev.moving = &moving;
  ev.fixed_labels = in.fixed_labels;
  ev.moving_labels = in.moving_labels;
  ev.mask = &full;
  ev.eps = cfg.logdet_eps;
  ev.coords = cfg.coords;
  MetricsReport report = evaluate(ev, res.field);
  if (o.timing) report.runtime_s = res.trace.wall_seconds;

  ensure_dir(o.out);
  write_volume(o.out / "field.bmrv", res.field);
  Json trace = to_json(res.trace, o.timing);
  trace["solver"] = to_json(cfg);
  trace["configuration"] = to_string(exp.configuration);
  write_json(o.out / "trace.json", trace);
  write_json(o.out / "report.json", to_json(report));
  return report;
}

MetricsReport cmd_evaluate(const EvaluateOptions& o) {
  const ScalarVolume fixed = read_scalar_volume(o.fixed);
  const ScalarVolume moving = read_scalar_volume(o.moving);
  const DisplacementField u(read_vector_volume(o.field));
  const RegMask mask = RegMask::from_volume(read_scalar_volume(o.mask));
  std::optional<ScalarVolume> fl, ml;
  if (o.fixed_labels) fl = read_scalar_volume(*o.fixed_labels);
  if (o.moving_labels) ml = read_scalar_volume(*o.moving_labels);
  EvalInputs ev;
  ev.fixed = &fixed;
  ev.moving = &moving;
  ev.fixed_labels = fl ? &*fl : nullptr;
  ev.moving_labels = ml ? &*ml : nullptr;
  ev.mask = &mask;
  const MetricsReport r = evaluate(ev, u);
  ensure_dir(o.out);
  write_json(o.out / "report.json", to_json(r));
  return r;
}

std::vector<SweepCase> load_cases(const fs::path& manifest, const std::string& split, int max_pairs) {
  const Json m = read_json(manifest);
  const fs::path base = manifest.parent_path();
  std::vector<SweepCase> cases;
  try {
    for (const Json& s : m.at("samples")) {
      if (s.at("split").get<std::string>() != split) continue;
      if (max_pairs > 0 && static_cast<int>(cases.size()) >= max_pairs) break;
      const Json& f = s.at("files");
      auto path = [&](const char* key) { return base / f.at(key).get<std::string>(); };
      SweepCase c;
      c.name = split + "_" + std::to_string(s.at("index").get<int>());
      c.fixed = read_scalar_volume(path("fixed"));
      c.moving = read_scalar_volume(path("moving"));
      if (f.contains("fixed_labels") && f.contains("moving_labels")) {
        c.fixed_labels = read_scalar_volume(path("fixed_labels"));
        c.moving_labels = read_scalar_volume(path("moving_labels"));
      }
      c.mask = RegMask::from_volume(read_scalar_volume(path("mask")));
      if (f.contains("normals")) c.normals = DirectionField(read_vector_volume(path("normals")));
      cases.push_back(std::move(c));
    }
  } catch (const Json::exception& e) {
    throw DataError(manifest.string() + ": malformed manifest: " + e.what());
  }
  if (cases.empty()) throw DataError(manifest.string() + ": no samples in split '" + split + "'");
  return cases;
}

std::vector<SweepCell> cmd_sweep(const SweepOptions& o) {
  const ExperimentConfig exp = load_experiment(o.config);
  if (!exp.manifest) throw ConfigError("sweep config needs a 'manifest'");
  const fs::path out = o.out ? *o.out : exp.out_dir.value_or(fs::path("."));
  SolverConfig base = exp.solver;
  if (o.seed) base.seed = *o.seed;
  else if (exp.seed) base.seed = *exp.seed;

  const std::vector<SweepCase> cases = load_cases(*exp.manifest, exp.split, exp.max_pairs);
  const std::vector<SweepCell> cells = run_sweep(cases, exp.sweep_grid, base, exp.configuration);

  ensure_dir(out);
  std::vector<std::string> header = {"case", "alpha", "gamma", "lambda"};
  for (const std::string& c : report_columns()) header.push_back(c);
  header.push_back("mean_displacement");
  header.push_back("error");
  std::string csv = join_csv(header);
  for (const SweepCell& c : cells) {
    std::vector<std::string> row = {c.case_name, csv_number(c.weights.alpha), csv_number(c.weights.gamma),
                                    csv_number(c.weights.lambda)};
    if (c.report)
      for (double v : report_values(*c.report)) row.push_back(csv_number(v));
    else
      row.insert(row.end(), report_columns().size(), "");
    row.push_back(c.report ? csv_number(c.mean_displacement) : "");
    row.push_back(c.error);
    csv += join_csv(row);
  }
  write_text(out / "sweep.csv", csv);

  const std::vector<SweepAggregate> agg = aggregate_sweep(cells, exp.sweep_grid);
  std::vector<std::string> sh = {"alpha", "gamma", "lambda", "n", "failed"};
  for (const ColumnStats& s : agg.front().columns) {
    sh.push_back(s.name + "_mean");
    sh.push_back(s.name + "_std");
  }
  std::string summary = join_csv(sh);
  Json js = Json::array();
  for (const SweepAggregate& a : agg) {
    std::vector<std::string> row = {csv_number(a.weights.alpha), csv_number(a.weights.gamma),
                                    csv_number(a.weights.lambda), std::to_string(cases.size() - a.failed),
                                    std::to_string(a.failed)};
    Json cols = Json::object();
    for (const ColumnStats& s : a.columns) {
      row.push_back(csv_number(s.mean));
      row.push_back(csv_number(s.std));
      cols[s.name] = {{"mean", std::isnan(s.mean) ? Json(nullptr) : Json(s.mean)},
                      {"std", std::isnan(s.std) ? Json(nullptr) : Json(s.std)},
                      {"count", s.count}};
    }
    summary += join_csv(row);
    js.push_back({{"alpha", a.weights.alpha},
                  {"gamma", a.weights.gamma},
                  {"lambda", a.weights.lambda},
                  {"failed", a.failed},
                  {"columns", cols}});
  }
  write_text(out / "sweep_summary.csv", summary);
  write_json(out / "sweep_summary.json",
             {{"configuration", to_string(exp.configuration)}, {"solver", to_json(base)}, {"cells", js}});
  return cells;
}

void cmd_report(const ReportOptions& o) {
  if (o.inputs.empty()) throw ParameterError("report needs at least one input");
  std::vector<std::string> header = {"source"};
  for (const std::string& c : report_columns()) header.push_back(c);
  std::string csv = join_csv(header);
  std::vector<std::vector<double>> rows;
  for (const fs::path& p : o.inputs) {
    const MetricsReport r = report_from_json(read_json(p));
    std::vector<std::string> row = {p.string()};
    const std::vector<double> v = report_values(r);
    for (double x : v) row.push_back(csv_number(x));
    csv += join_csv(row);
    rows.push_back(v);
  }
  ensure_dir(o.out);
  write_text(o.out / "reports.csv", csv);
  std::string summary = join_csv({"column", "mean", "std", "count"});
  for (const ColumnStats& s : aggregate(report_columns(), rows))
    summary += join_csv({s.name, csv_number(s.mean), csv_number(s.std), std::to_string(s.count)});
  write_text(o.out / "summary.csv", summary);
}

}  // namespace mechreg
