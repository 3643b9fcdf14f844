// nalm_lab: training sweeps, landscapes, surfaces, self-checks and reports
// for neural arithmetic units.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "nalm/nalm.hpp"

namespace {

struct Args {
  std::string config;
  std::string out;
  std::size_t seeds = 0;
  std::string preset;
  std::size_t workers = 0;
  bool quiet = false;

  nalm::LandscapeOptions landscape;
  double y = 0.0;

  nalm::SurfaceOptions surface;

  std::string level = "quick";
  bool inject_fault = false;

  std::string report_dir;
};

int do_run(const Args& a) {
  nalm::ExperimentConfig cfg;
  try {
    cfg = nalm::load_config(a.config);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return nalm::kExitConfig;
  }
  nalm::RunOptions opt;
  opt.out = a.out;
  if (a.seeds > 0) opt.seeds = a.seeds;
  if (!a.preset.empty()) {
    try {
      opt.preset = nalm::parse_preset(a.preset);
    } catch (const std::exception& e) {
      std::cerr << "config error: " << e.what() << "\n";
      return nalm::kExitConfig;
    }
  }
  opt.workers = a.workers;
  opt.quiet = a.quiet;
  return nalm::cmd_run(std::move(cfg), opt, std::cout);
}

}  // namespace

int main(int argc, char** argv) {
  Args a;
  CLI::App app{"nalm_lab: experiments with neural arithmetic units"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "nalm_lab 1.0");

  auto* run = app.add_subcommand("run", "Train a sweep described by a config file");
  run->add_option("--config", a.config, "Experiment config file")->required();
  run->add_option("--out", a.out, "Output directory (overrides output_dir)");
  run->add_option("--seeds", a.seeds, "Number of seeds 0..N-1 (overrides the config)")->check(CLI::PositiveNumber);
  run->add_option("--preset", a.preset, "Training schedule preset")->check(CLI::IsMember({"paper", "desk"}));
  run->add_option("--workers", a.workers, "Worker threads (default: all cores; NALM_LAB_WORKERS wins)");
  run->add_flag("--quiet", a.quiet, "Only print errors");

  auto* land = app.add_subcommand("landscape", "Evaluate the NMU loss on a (w1, w2) grid for one sample");
  land->add_option("--x1", a.landscape.x1, "First input")->capture_default_str();
  land->add_option("--x2", a.landscape.x2, "Second input")->capture_default_str();
  auto* yopt = land->add_option("--y", a.y, "Target (default x1 * x2)");
  land->add_option("--lo", a.landscape.lo, "Axis lower bound")->capture_default_str();
  land->add_option("--hi", a.landscape.hi, "Axis upper bound")->capture_default_str();
  land->add_option("--points", a.landscape.points, "Points per axis")->capture_default_str();
  land->add_option("--name", a.landscape.name, "Grid file name")->capture_default_str();
  land->add_option("--out", a.landscape.out, "Output directory")->capture_default_str();

  auto* surf = app.add_subcommand("surface", "Sample a trained model (or the exact product) on a 2D grid");
  surf->add_option("--run", a.surface.run, "Run JSON written by 'run' (2-input task)");
  surf->add_option("--range", a.surface.range, "Range name when no run is given")->capture_default_str();
  surf->add_option("--bins", a.surface.bins, "Bins per axis")->capture_default_str();
  surf->add_option("--out", a.surface.out, "Output directory")->capture_default_str();

  auto* ver = app.add_subcommand("verify", "Gradient, cancellation and case-study self-checks");
  ver->add_option("--level", a.level, "quick or full")->check(CLI::IsMember({"quick", "full"}))->capture_default_str();
  ver->add_flag("--inject-fault", a.inject_fault, "Run against an sNMU with a broken denominator");

  auto* rep = app.add_subcommand("report", "Merge summary.json files into a table");
  rep->add_option("dir", a.report_dir, "Results directory")->required();
  rep->add_option("--out", a.out, "Where to write report.csv / report.txt (default: dir)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return nalm::kExitConfig;
  }

  try {
    if (*run) return do_run(a);
    if (*land) {
      if (*yopt) a.landscape.y = a.y;
      return nalm::cmd_landscape(a.landscape, std::cout);
    }
    if (*surf) return nalm::cmd_surface(a.surface, std::cout);
    if (*ver) {
      const auto level = nalm::parse_verify_level(a.level);
      return a.inject_fault ? nalm::cmd_verify(level, std::cout, nalm::faulty_snmu_training)
                            : nalm::cmd_verify(level, std::cout);
    }
    if (*rep) return nalm::cmd_report(a.report_dir, a.out, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return nalm::kExitFailure;
  }
  return nalm::kExitConfig;
}
