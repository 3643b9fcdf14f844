#pragma once

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "nalm/analysis.hpp"
#include "nalm/config.hpp"
#include "nalm/io.hpp"
#include "nalm/metrics.hpp"
#include "nalm/trainer.hpp"

namespace nalm {

namespace fs = std::filesystem;

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitConfig = 2, kExitOutput = 3 };

struct RunOptions {
  std::string out;                     // overrides config output_dir
  std::optional<std::size_t> seeds;    // overrides the seed count
  std::optional<Preset> preset;        // overrides the config preset
  std::size_t workers = 0;             // 0: hardware concurrency
  bool quiet = false;
};

/// Worker count: NALM_LAB_WORKERS wins over the requested value, which wins
/// over the number of hardware threads.
inline std::size_t resolve_workers(std::size_t requested) {
  if (const char* env = std::getenv("NALM_LAB_WORKERS"); env && *env) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
  }
  if (requested > 0) return requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

inline bool dir_writable(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) return false;
  const fs::path probe = dir / ".write-probe";
  {
    std::ofstream out(probe);
    if (!out) return false;
    out << "ok";
    if (!out) return false;
  }
  fs::remove(probe, ec);
  return true;
}

/// Loads a previously written run file if it belongs to the same job;
/// anything unreadable counts as missing.
inline std::optional<RunRecord> load_completed_run(const fs::path& file, const SweepJob& job, const TaskSpec& task) {
  std::error_code ec;
  if (!fs::exists(file, ec)) return std::nullopt;
  try {
    const json j = json::parse(read_file(file));
    RunRecord r = run_from_json(j);
    if (r.model == job.model && r.seed == job.seed && r.range == job.pair.name() && r.task == task) return r;
  } catch (const std::exception&) {
  }
  return std::nullopt;
}

/// Summaries per (model, range) cell in configuration order.
inline std::vector<SummaryRecord> summarize_sweep(const ExperimentConfig& cfg, const std::vector<RunRecord>& runs,
                                                  const std::string& hash) {
  const auto pairs = cfg.resolve_ranges();
  const auto seeds = cfg.seeds();
  std::vector<SummaryRecord> out;
  std::size_t k = 0;
  for (const auto& m : cfg.models) {
    for (const auto& p : pairs) {
      std::vector<RunRecord> cell(runs.begin() + static_cast<long>(k), runs.begin() + static_cast<long>(k + seeds.size()));
      k += seeds.size();
      out.push_back(summarize(m.name, p.name(), cell, cached_threshold(cfg.task, p), hash));
    }
  }
  return out;
}

/// Executes (or resumes) a sweep and writes runs/, series/, summary.csv and
/// summary.json below the output directory.
inline int cmd_run(ExperimentConfig cfg, const RunOptions& opt, std::ostream& log = std::cout) {
  if (opt.seeds) {
    cfg.seed_count = *opt.seeds;
    cfg.seed_list.clear();
  }
  if (opt.preset) cfg.preset = *opt.preset;
  if (!opt.out.empty()) cfg.output_dir = opt.out;
  try {
    cfg.validate();
  } catch (const std::exception& e) {
    fmt::print(log, "config error: {}\n", e.what());
    return kExitConfig;
  }
  if (cfg.output_dir.empty()) {
    fmt::print(log, "config error: no output directory (use --out or output_dir)\n");
    return kExitConfig;
  }
  const fs::path root(cfg.output_dir);
  if (!dir_writable(root) || !dir_writable(root / "runs") || !dir_writable(root / "series")) {
    fmt::print(log, "error: output directory {} is not writable\n", root.string());
    return kExitOutput;
  }

  const std::string hash = config_hash(cfg);
  const TrainConfig train = cfg.train_config();
  const auto jobs = sweep_jobs(cfg.models, cfg.resolve_ranges(), cfg.seeds());
  // Completed runs are reused only when they were produced by the same config.
  bool resume = false;
  try {
    resume = fs::exists(root / "config.cfg") && config_hash(parse_config(read_file(root / "config.cfg"))) == hash;
  } catch (const std::exception&) {
  }
  std::vector<std::optional<RunRecord>> results(jobs.size());
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const auto id = run_id(jobs[i].model.name, jobs[i].pair, jobs[i].seed);
    if (resume) results[i] = load_completed_run(root / "runs" / (id + ".json"), jobs[i], cfg.task);
    if (!results[i]) todo.push_back(i);
  }
  const std::size_t workers = resolve_workers(opt.workers);
  if (!opt.quiet) {
    fmt::print(log, "{}: {} runs ({} already complete), {} worker(s)\n", cfg.name, jobs.size(),
               jobs.size() - todo.size(), workers);
  }

  std::mutex log_mu;
  std::size_t done = 0;
  try {
    atomic_write(root / "config.cfg", serialize_config(cfg));
    parallel_for(todo.size(), workers, [&](std::size_t t) {
      const std::size_t i = todo[t];
      RunRecord r = run_job(jobs[i], cfg.task, train);
      atomic_write(root / "series" / (r.id + ".csv"), series_csv(r));
      atomic_write(root / "runs" / (r.id + ".json"), to_json_value(r).dump(1) + "\n");
      std::lock_guard lock(log_mu);
      ++done;
      if (!opt.quiet) {
        fmt::print(log, "[{}/{}] {} best_iter={} extrap_mse={:.3g}{}\n", done, todo.size(), r.id, r.best.iteration,
                   r.best.extrap_mse, r.failed ? " FAILED: " + r.failure : "");
      }
      results[i] = std::move(r);
    });
  } catch (const std::exception& e) {
    fmt::print(log, "error: {}\n", e.what());
    return kExitOutput;
  }

  std::vector<RunRecord> runs;
  runs.reserve(results.size());
  for (auto& r : results) runs.push_back(std::move(*r));
  const auto summaries = summarize_sweep(cfg, runs, hash);

  std::string csv = kSummaryCsvHeader;
  json js = {{"experiment", cfg.name},
             {"task", to_json_value(cfg.task)},
             {"config_hash", hash},
             {"train", to_json_value(train)},
             {"ci_method", kCiMethod},
             {"rows", json::array()}};
  for (const auto& s : summaries) {
    csv += summary_csv_row(s);
    js["rows"].push_back(to_json_value(s));
  }
  try {
    atomic_write(root / "summary.csv", csv);
    atomic_write(root / "summary.json", js.dump(1) + "\n");
  } catch (const std::exception& e) {
    fmt::print(log, "error: {}\n", e.what());
    return kExitOutput;
  }
  if (!opt.quiet) {
    for (const auto& s : summaries) {
      fmt::print(log, "  {:<8} {:<14} success {}/{}\n", s.model, s.range, s.successes, s.n_seeds);
    }
  }
  return kExitOk;
}

// Report ----------------------------------------------------------------------

inline std::string fmt_interval(const std::optional<MeanInterval>& m, const char* spec = "{:.2e}") {
  if (!m) return "-";
  return fmt::format(fmt::runtime(std::string(spec) + " [" + spec + ", " + spec + "]"), m->mean, m->lo, m->hi);
}

/// Merges every summary.json below `results_dir` into report.csv and
/// report.txt (rows per range, one block per model).
inline int cmd_report(const std::string& results_dir, const std::string& out_dir, std::ostream& log = std::cout) {
  std::vector<fs::path> files;
  std::error_code ec;
  if (!fs::is_directory(results_dir, ec)) {
    fmt::print(log, "error: {} is not a directory\n", results_dir);
    return kExitConfig;
  }
  for (auto it = fs::recursive_directory_iterator(results_dir, ec); it != fs::recursive_directory_iterator();
       it.increment(ec)) {
    if (ec) break;
    if (it->is_regular_file() && it->path().filename() == "summary.json") files.push_back(it->path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) {
    fmt::print(log, "error: no summary.json below {}\n", results_dir);
    return kExitConfig;
  }
  struct Row {
    std::string experiment;
    SummaryRecord s;
  };
  std::vector<Row> rows;
  for (const auto& f : files) {
    try {
      const json j = json::parse(read_file(f));
      const auto name = j.at("experiment").get<std::string>();
      for (const auto& r : j.at("rows")) rows.push_back({name, summary_from_json(r)});
    } catch (const std::exception& e) {
      fmt::print(log, "error: corrupt summary {}: {}\n", f.string(), e.what());
      return kExitConfig;
    }
  }

  // Tables are grouped by (experiment, model) in first-seen order.
  std::vector<std::pair<std::string, std::string>> groups;
  for (const auto& r : rows) {
    const std::pair<std::string, std::string> g{r.experiment, r.s.model};
    if (std::find(groups.begin(), groups.end(), g) == groups.end()) groups.push_back(g);
  }
  auto iv = [](const std::optional<MeanInterval>& v) {
    return v ? fmt::format("{},{},{}", fmt_num(v->mean), fmt_num(v->lo), fmt_num(v->hi)) : std::string(",,");
  };

  std::string csv =
      "experiment,model,range,n_seeds,success_rate,success_lo,success_hi,convergence_mean,convergence_lo,"
      "convergence_hi,sparsity_mean,sparsity_lo,sparsity_hi\n";
  std::string txt;
  for (const auto& [exp, model] : groups) {
    txt += fmt::format("{} / {}\n", exp, model);
    txt += fmt::format("  {:<16} {:>5} {:>22} {:>34} {:>34}\n", "range", "n", "success [95% CI]",
                       "solved iteration [95% CI]", "sparsity error [95% CI]");
    for (const auto& [e, s] : rows) {
      if (e != exp || s.model != model) continue;
      csv += fmt::format("{},{},\"{}\",{},{},{},{},{},{}\n", e, s.model, s.range, s.n_seeds, fmt_num(s.success_rate),
                         fmt_num(s.success_ci.lo), fmt_num(s.success_ci.hi), iv(s.convergence), iv(s.sparsity));
      txt += fmt::format("  {:<16} {:>5} {:>22} {:>34} {:>34}\n", s.range, s.n_seeds,
                         fmt::format("{:.0f}% [{:.0f}, {:.0f}]", 100 * s.success_rate, 100 * s.success_ci.lo,
                                     100 * s.success_ci.hi),
                         fmt_interval(s.convergence), fmt_interval(s.sparsity));
    }
    txt += "\n";
  }
  const fs::path out = out_dir.empty() ? fs::path(results_dir) : fs::path(out_dir);
  if (!dir_writable(out)) {
    fmt::print(log, "error: output directory {} is not writable\n", out.string());
    return kExitOutput;
  }
  try {
    atomic_write(out / "report.csv", csv);
    atomic_write(out / "report.txt", txt);
  } catch (const std::exception& e) {
    fmt::print(log, "error: {}\n", e.what());
    return kExitOutput;
  }
  fmt::print(log, "{}", txt);
  return kExitOk;
}

// Landscapes and surfaces -------------------------------------------------------

struct LandscapeOptions {
  double x1 = -2.0, x2 = -1.8;
  std::optional<double> y;  // defaults to x1 * x2
  double lo = -1.0, hi = 1.5;
  std::size_t points = 251;
  std::string out = "results";
  std::string name = "landscape";
};

inline int cmd_landscape(const LandscapeOptions& o, std::ostream& log = std::cout) {
  if (o.points < 2 || !(o.lo < o.hi)) {
    fmt::print(log, "error: need at least 2 points and lo < hi\n");
    return kExitConfig;
  }
  const fs::path dir = fs::path(o.out) / "grids";
  if (!dir_writable(dir)) {
    fmt::print(log, "error: output directory {} is not writable\n", dir.string());
    return kExitOutput;
  }
  const double y = o.y.value_or(o.x1 * o.x2);
  const auto axis = linspace(o.lo, o.hi, o.points);
  const double x[2] = {o.x1, o.x2};
  Grid2D g = loss_grid(x, y, axis, axis);
  json minima = json::array();
  for (const auto& p : grid_local_minima(g, 1e-2)) minima.push_back({{"w1", p.a1}, {"w2", p.a2}, {"loss", p.value}});
  g.metadata["local_minima"] = minima;
  const auto csv = dir / (o.name + ".csv");
  write_grid_csv(csv.string(), g, (dir / (o.name + ".meta.json")).string());
  fmt::print(log, "wrote {} ({}x{}); {} near-zero local minima\n", csv.string(), o.points, o.points, minima.size());
  for (std::size_t k = 0; k < std::min<std::size_t>(minima.size(), 10); ++k) {
    fmt::print(log, "  ({:.4f}, {:.4f}) loss {:.3g}\n", minima[k]["w1"].get<double>(), minima[k]["w2"].get<double>(),
               minima[k]["loss"].get<double>());
  }
  if (minima.size() > 10) fmt::print(log, "  ... (all listed in the metadata)\n");
  return kExitOk;
}

struct SurfaceOptions {
  std::string run;  // run JSON; empty: golden only
  std::string range = "U[1,2)";
  std::size_t bins = 20;
  std::string out = "results";
};

/// Square covering both the interpolation and extrapolation ranges.
inline RangeSpec surface_domain(const ExtrapolationPair& p) {
  return {std::min(p.interp.lo(), p.extrap.lo()), std::max(p.interp.hi(), p.extrap.hi())};
}

inline int cmd_surface(const SurfaceOptions& o, std::ostream& log = std::cout) {
  if (o.bins == 0) {
    fmt::print(log, "error: bins must be positive\n");
    return kExitConfig;
  }
  std::optional<RunRecord> run;
  std::string range = o.range;
  if (!o.run.empty()) {
    try {
      run = run_from_json(json::parse(read_file(o.run)));
    } catch (const std::exception& e) {
      fmt::print(log, "error: cannot load run {}: {}\n", o.run, e.what());
      return kExitConfig;
    }
    if (run->task.kind != TaskKind::Smt) {
      fmt::print(log, "error: surfaces need a 2-input (smt) run\n");
      return kExitConfig;
    }
    range = run->range;
  }
  ExtrapolationPair pair;
  try {
    pair = find_builtin_range(range);
  } catch (const std::exception& e) {
    fmt::print(log, "error: {}\n", e.what());
    return kExitConfig;
  }
  const fs::path dir = fs::path(o.out) / "grids";
  if (!dir_writable(dir)) {
    fmt::print(log, "error: output directory {} is not writable\n", dir.string());
    return kExitOutput;
  }
  const RangeSpec dom = surface_domain(pair);
  Grid2D golden = golden_surface(dom, dom, o.bins);
  write_grid_csv((dir / "surface_golden.csv").string(), golden, (dir / "surface_golden.meta.json").string());
  fmt::print(log, "wrote {}\n", (dir / "surface_golden.csv").string());
  if (!run) return kExitOk;

  Rng unused(0);
  Model model(run->model, 2, false, unused);
  model.set_weights(run->best.weights);
  Grid2D g = function_surface(
      [&](double a, double b) { return model.predict(Matrix::row({a, b})).item(); }, dom, dom, o.bins);
  g.metadata["model"] = to_json_value(run->model);
  g.metadata["run"] = run->id;
  g.metadata["interp_pass"] = run->best.val_mse < 1e-5;
  g.metadata["extrap_pass"] = run->best.extrap_mse < 1e-5;
  double worst = 0.0;
  for (std::size_t i = 0; i < g.values.size(); ++i) worst = std::max(worst, std::fabs(g.values[i] - golden.values[i]));
  g.metadata["max_abs_error_vs_golden"] = worst;
  const auto name = "surface_" + run->id;
  write_grid_csv((dir / (name + ".csv")).string(), g, (dir / (name + ".meta.json")).string());
  fmt::print(log, "wrote {} (max |model - golden| = {:.3g}; interp {} extrap {})\n", (dir / (name + ".csv")).string(),
             worst, g.metadata["interp_pass"].get<bool>() ? "T" : "F", g.metadata["extrap_pass"].get<bool>() ? "T" : "F");
  return kExitOk;
}

}  // namespace nalm
