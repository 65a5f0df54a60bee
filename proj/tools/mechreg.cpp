#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "mechreg/commands.hpp"
#include "mechreg/error.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace {

using namespace mechreg;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mechreg: biomechanically regularized deformable registration"};
  app.require_subcommand(1);
  app.fallthrough();
  int threads = 0;
  std::optional<std::uint64_t> seed;
  app.add_option("--threads", threads, "worker threads, 0 = auto")->check(CLI::NonNegativeNumber);
  app.add_option_function<std::uint64_t>("--seed", [&](std::uint64_t s) { seed = s; }, "run seed");

  SynthOptions synth;
  std::string counts = "200,50,50";
  auto* c_synth = app.add_subcommand("synth", "generate a synthetic dataset");
  c_synth->add_option("--kind", synth.kind, "rigid or shear")->check(CLI::IsMember({"rigid", "shear"}));
  c_synth->add_option("--counts", counts, "train,val,test pair counts");
  c_synth->add_option("--knn", synth.knn, "neighbours for shear-band normals");
  c_synth->add_option("--out", synth.out, "output directory")->required();

  MakeMasksOptions masks;
  std::string masks_config;
  auto* c_masks = app.add_subcommand("make-masks", "build the R/S/J mask and normals from a label map");
  c_masks->add_option("--labels", masks.labels, "label volume")->required()->check(CLI::ExistingFile);
  c_masks->add_option("--config", masks_config, "anatomy config JSON")->check(CLI::ExistingFile);
  c_masks->add_option("--out", masks.out, "output directory")->required();

  RegisterOptions reg;
  std::string reg_normals, reg_fl, reg_ml, reg_config;
  auto* c_reg = app.add_subcommand("register", "register a moving image onto a fixed image");
  c_reg->add_option("--fixed", reg.fixed)->required()->check(CLI::ExistingFile);
  c_reg->add_option("--moving", reg.moving)->required()->check(CLI::ExistingFile);
  c_reg->add_option("--mask", reg.mask, "full R/S/J mask")->required()->check(CLI::ExistingFile);
  c_reg->add_option("--normals", reg_normals)->check(CLI::ExistingFile);
  c_reg->add_option("--fixed-labels", reg_fl)->check(CLI::ExistingFile);
  c_reg->add_option("--moving-labels", reg_ml)->check(CLI::ExistingFile);
  c_reg->add_option("--config", reg_config, "experiment config JSON")->check(CLI::ExistingFile);
  c_reg->add_option("--out", reg.out, "output directory")->required();
  c_reg->add_flag("--timing", reg.timing, "record wall time in the outputs");

  EvaluateOptions ev;
  std::string ev_fl, ev_ml;
  auto* c_ev = app.add_subcommand("evaluate", "compute metrics of a stored field");
  c_ev->add_option("--fixed", ev.fixed)->required()->check(CLI::ExistingFile);
  c_ev->add_option("--moving", ev.moving)->required()->check(CLI::ExistingFile);
  c_ev->add_option("--field", ev.field)->required()->check(CLI::ExistingFile);
  c_ev->add_option("--mask", ev.mask)->required()->check(CLI::ExistingFile);
  c_ev->add_option("--fixed-labels", ev_fl)->check(CLI::ExistingFile);
  c_ev->add_option("--moving-labels", ev_ml)->check(CLI::ExistingFile);
  c_ev->add_option("--out", ev.out, "output directory")->required();

  SweepOptions sw;
  std::string sw_out;
  auto* c_sw = app.add_subcommand("sweep", "run a loss-weight grid over a dataset split");
  c_sw->add_option("--config", sw.config, "experiment config JSON")->required()->check(CLI::ExistingFile);
  c_sw->add_option("--out", sw_out, "output directory");

  ReportOptions rep;
  std::vector<std::string> rep_inputs;
  auto* c_rep = app.add_subcommand("report", "aggregate report.json files into CSV tables");
  c_rep->add_option("inputs", rep_inputs, "report.json files")->required()->check(CLI::ExistingFile);
  c_rep->add_option("--out", rep.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

#ifdef _OPENMP
  if (threads > 0) omp_set_num_threads(threads);
#endif

  auto opt = [](const std::string& s) { return s.empty() ? std::optional<fs::path>() : std::optional<fs::path>(s); };
  try {
    if (*c_synth) {
      std::stringstream ss(counts);
      std::string part;
      int k = 0;
      while (std::getline(ss, part, ',')) {
        if (k >= 3) throw ParameterError("--counts takes three values");
        synth.counts[k++] = std::stoi(part);
      }
      if (k != 3) throw ParameterError("--counts takes three values");
      synth.seed = seed.value_or(0);
      const Json m = cmd_synth(synth);
      std::cout << "wrote " << m["samples"].size() << " samples to " << synth.out.string() << "\n";
    } else if (*c_masks) {
      masks.config = opt(masks_config);
      cmd_make_masks(masks);
    } else if (*c_reg) {
      reg.normals = opt(reg_normals);
      reg.fixed_labels = opt(reg_fl);
      reg.moving_labels = opt(reg_ml);
      reg.config = opt(reg_config);
      reg.seed = seed;
      const MetricsReport r = cmd_register(reg);
      std::cout << to_json(r).dump() << "\n";
    } else if (*c_ev) {
      ev.fixed_labels = opt(ev_fl);
      ev.moving_labels = opt(ev_ml);
      std::cout << to_json(cmd_evaluate(ev)).dump() << "\n";
    } else if (*c_sw) {
      sw.out = opt(sw_out);
      sw.seed = seed;
      const auto cells = cmd_sweep(sw);
      std::size_t failed = 0;
      for (const auto& c : cells) failed += c.report ? 0 : 1;
      std::cout << cells.size() << " cells, " << failed << " failed\n";
    } else if (*c_rep) {
      for (const auto& s : rep_inputs) rep.inputs.emplace_back(s);
      cmd_report(rep);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: bad numeric argument\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
