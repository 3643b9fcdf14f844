// End-to-end acceptance suite. Each criterion prints exactly one
// [PASS]/[FAIL] line; the exit status is non-zero if any criterion fails.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "nalm/nalm.hpp"
#include "oracles.hpp"

using namespace nalm;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

const std::vector<std::uint64_t> kTenSeeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
const std::vector<std::uint64_t> kFiveSeeds{0, 1, 2, 3, 4};

std::size_t workers() { return resolve_workers(0); }

/// (model name, range name) -> runs, in seed order.
using Cells = std::map<std::pair<std::string, std::string>, std::vector<RunRecord>>;

Cells sweep(const std::vector<ModelSpec>& models, const std::vector<ExtrapolationPair>& pairs,
            const std::vector<std::uint64_t>& seeds, const TaskSpec& task, const TrainConfig& cfg) {
  Cells cells;
  for (auto& r : run_sweep(models, pairs, seeds, task, cfg, workers())) {
    cells[{r.model.name, r.range}].push_back(std::move(r));
  }
  return cells;
}

std::size_t successes(const std::vector<RunRecord>& runs, const TaskSpec& task, const ExtrapolationPair& pair) {
  const Threshold th = cached_threshold(task, pair);
  std::size_t k = 0;
  for (const auto& r : runs) k += success(r, th);
  return k;
}

std::string range_list(const std::vector<std::string>& names) {
  std::string out;
  for (const auto& n : names) out += (out.empty() ? "" : ", ") + n;
  return out.empty() ? "none" : out;
}

// 1 -------------------------------------------------------------------------

Outcome snmu_all_ranges() {
  const TaskSpec task;
  const auto pairs = builtin_ranges();
  const auto cells = sweep({ModelSpec::snmu(NoiseConfig::fixed(1, 5))}, pairs, kTenSeeds, task, TrainConfig::smt());
  std::vector<std::string> short_of_full;
  std::string rates;
  for (const auto& p : pairs) {
    const std::size_t k = successes(cells.at({"snmu", p.name()}), task, p);
    rates += fmt::format(" {}:{}", p.name(), k);
    if (k != kTenSeeds.size()) short_of_full.push_back(p.name());
  }
  return {short_of_full.empty(), fmt::format("successes/10 per range:{}; below 100%: {}", rates, range_list(short_of_full))};
}

// 2 -------------------------------------------------------------------------

Outcome nmu_failure_pattern() {
  const TaskSpec task;
  const std::vector<std::string> zero{"U[-2,-1)", "U[-1.2,-1.1)"};
  const std::vector<std::string> high{"U[1,2)", "U[10,20)", "U[-20,-10)"};
  std::vector<ExtrapolationPair> pairs;
  for (const auto& n : zero) pairs.push_back(find_builtin_range(n));
  for (const auto& n : high) pairs.push_back(find_builtin_range(n));
  const auto cells = sweep({ModelSpec::nmu()}, pairs, kTenSeeds, task, TrainConfig::smt());
  bool pass = true;
  std::string rates;
  for (const auto& p : pairs) {
    const std::size_t k = successes(cells.at({"nmu", p.name()}), task, p);
    const double rate = static_cast<double>(k) / static_cast<double>(kTenSeeds.size());
    const bool expect_zero = std::find(zero.begin(), zero.end(), p.name()) != zero.end();
    const bool ok = expect_zero ? k == 0 : rate >= 0.9;
    pass = pass && ok;
    rates += fmt::format(" {}:{}/10{}", p.name(), k, ok ? "" : "(!)");
  }
  return {pass, "expected 0/10 on U[-2,-1), U[-1.2,-1.1) and >=9/10 elsewhere;" + rates};
}

// 3 -------------------------------------------------------------------------

Outcome nmu_and_mlp_on_positive_range() {
  const TaskSpec task;
  const auto pair = find_builtin_range("U[1,2)");
  const auto nmu_cells = sweep({ModelSpec::nmu()}, {pair}, kTenSeeds, task, TrainConfig::smt());
  TrainConfig mlp_cfg = TrainConfig::smt();
  mlp_cfg.iterations = 200000;
  const auto mlp_cells = sweep({ModelSpec::mlp(100)}, {pair}, kTenSeeds, task, mlp_cfg);

  const auto& nmu = nmu_cells.at({"nmu", pair.name()});
  std::size_t nmu_solved = 0;
  double iter_sum = 0.0;
  for (const auto& r : nmu) {
    nmu_solved += !r.failed && r.best.val_mse < 1e-5 && r.best.extrap_mse < 1e-5;
    iter_sum += static_cast<double>(r.best.iteration);
  }
  const double mean_iter = iter_sum / static_cast<double>(nmu.size());

  const auto& mlp = mlp_cells.at({"mlp", pair.name()});
  std::size_t mlp_interp = 0, mlp_bad_extrap = 0;
  double mlp_extrap_min = INFINITY, mlp_val_max = 0.0;
  for (const auto& r : mlp) {
    mlp_interp += r.best.val_mse < 1e-5;
    mlp_bad_extrap += r.best.extrap_mse > 1.0;
    mlp_extrap_min = std::min(mlp_extrap_min, r.best.extrap_mse);
    mlp_val_max = std::max(mlp_val_max, r.best.val_mse);
  }
  const bool pass = nmu_solved == nmu.size() && mean_iter >= 8000 && mean_iter <= 13000 && mlp_interp == mlp.size() &&
                    mlp_bad_extrap == mlp.size();
  return {pass, fmt::format("NMU solved {}/10, mean solved iteration {:.0f} (need [8000, 13000]); MLP-100 interp<1e-5 "
                            "{}/10 (worst {:.2e}), extrap>1 {}/10 (lowest {:.3g})",
                            nmu_solved, mean_iter, mlp_interp, mlp_val_max, mlp_bad_extrap, mlp_extrap_min)};
}

// 4 -------------------------------------------------------------------------

Outcome case_study_table() {
  struct Printed {
    double value;
    int decimals;
  };
  const Printed expected[3][4] = {{{35, 0}, {0, 0}, {5.1075, 4}, {0, 0}},
                                  {{33.6, 1}, {1.4, 1}, {4.85326, 5}, {0.25424, 5}},
                                  {{46.2, 1}, {11.2, 1}, {4.89412, 5}, {0.21338, 5}}};
  const auto rows = selection_case_study();
  if (rows.size() != 3) return {false, fmt::format("expected 3 rows, got {}", rows.size())};
  std::string bad;
  for (std::size_t r = 0; r < 3; ++r) {
    const double got[4] = {rows[r].i1_out, rows[r].i1_abs_error, rows[r].i2_out, rows[r].i2_abs_error};
    for (int c = 0; c < 4; ++c) {
      const double half_ulp = 0.5 * std::pow(10.0, -expected[r][c].decimals);
      if (!(std::fabs(got[c] - expected[r][c].value) <= half_ulp))
        bad += fmt::format(" row{} col{}: {} vs {}", r + 1, c + 1, got[c], expected[r][c].value);
    }
  }
  return {bad.empty(), bad.empty() ? "all 12 values match to printed precision" : "mismatch:" + bad};
}

// 5 -------------------------------------------------------------------------

Outcome landscape_values() {
  const double x[2] = {-2.0, -1.8};
  const double y = 3.6;
  const std::vector<double> w1{-1.0 / 6.0, 0.0, 1.0}, w2{-0.5, 0.0, 1.0};
  const Grid2D g = loss_grid(x, y, w1, w2);
  const double lalt = g.values(0, 0), l00 = g.values(1, 1), l11 = g.values(2, 2);
  const bool pass = l11 < 1e-12 && lalt < 1e-12 && std::fabs(l00 - 6.76) <= 1e-12;
  return {pass, fmt::format("loss(1,1) = {:.3g}, loss(-1/6,-0.5) = {:.3g}, loss(0,0) = {:.15g}", l11, lalt, l00)};
}

// 6 -------------------------------------------------------------------------

Matrix uniform_matrix(std::size_t r, std::size_t c, double lo, double hi, Rng& rng) {
  Matrix m(r, c);
  for (double& v : m.data()) v = rng.uniform(lo, hi);
  return m;
}

Outcome gradient_equivalence() {
  Rng rng = Rng::stream(6, "acceptance-gradients");
  double worst_analytic = 0.0, worst_fd = 0.0;
  std::size_t instances = 0;
  for (std::size_t I : {2u, 4u, 100u}) {
    for (int k = 0; k < 100; ++k) {
      for (bool noisy : {false, true}) {
        const std::size_t B = 8;
        const Matrix X = uniform_matrix(B, I, -2.0, 2.0, rng);
        const Matrix y = uniform_matrix(B, 1, -4.0, 4.0, rng);
        const Matrix Wa = uniform_matrix(I, 2, -1.0, 1.0, rng);
        const Matrix Wm = uniform_matrix(2, 1, 0.0, 1.0, rng);
        const Matrix N = noisy ? uniform_matrix(B, 2, 1.0, 5.0, rng) : Matrix(B, 2, 1.0);

        Tape t;
        const NodeId x = t.constant(X), target = t.constant(y);
        const NodeId wa = t.parameter("nau.W", Wa), wm = t.parameter("unit.W", Wm);
        const NodeId z = nau_node(t, x, wa);
        const NodeId pred = noisy ? snmu_node(t, z, wm, t.constant(N), 1) : nmu_node(t, z, wm, 1);
        const NodeId d = t.sub(target, pred);
        const NodeId loss = t.mean(t.mul(d, d));
        t.forward(loss);
        const std::vector<double> autodiff = flatten_gradients(t, t.backward(loss));

        const auto [ga, gm] = noisy ? analytic_grad_nau_snmu(X, y, Wa, Wm, N) : analytic_grad_nau_nmu(X, y, Wa, Wm);
        std::vector<double> analytic(ga.data().begin(), ga.data().end());
        analytic.insert(analytic.end(), gm.data().begin(), gm.data().end());
        worst_analytic = std::max(worst_analytic, max_relative_error(autodiff, analytic, 1e-12));

        const std::vector<double> fd = tape_finite_diff(t, loss, 1e-6);
        worst_fd = std::max(worst_fd, max_relative_error(autodiff, fd, 1e-6));
        ++instances;
      }
    }
  }
  const bool pass = worst_analytic <= 1e-10 && worst_fd <= 1e-5;
  return {pass, fmt::format("{} instances; autodiff vs closed form max rel {:.2e} (<= 1e-10), vs finite differences "
                            "h=1e-6 max rel {:.2e} (<= 1e-5)",
                            instances, worst_analytic, worst_fd)};
}

// 7 -------------------------------------------------------------------------

Outcome cancellation() {
  Rng rng = Rng::stream(7, "acceptance-cancellation");
  double worst_train = 0.0, worst_infer = 0.0, worst_oracle = 0.0;
  for (int k = 0; k < 10000; ++k) {
    const std::size_t I = 1 + rng.uniform_index(8), B = 4;
    const Matrix X = uniform_matrix(B, I, -3.0, 3.0, rng);
    Matrix W(I, 1);
    for (double& w : W.data()) w = rng.uniform01() < 0.5 ? 0.0 : 1.0;
    const Matrix N = uniform_matrix(B, I, 1.0, 5.0, rng);
    const Matrix nmu = nmu_forward(X, W);
    const Matrix train = snmu_forward(X, W, N, true);
    const Matrix infer = snmu_forward(X, W, N, false);
    for (std::size_t b = 0; b < B; ++b) {
      worst_train = std::max(worst_train, std::fabs(train(b, 0) - nmu(b, 0)));
      worst_infer = std::max(worst_infer, std::fabs(infer(b, 0) - nmu(b, 0)));
      oracle::Vec xr(I);
      for (std::size_t i = 0; i < I; ++i) xr[i] = X(b, i);
      const double ref = oracle::nmu(xr, W.values());
      worst_oracle = std::max(worst_oracle, std::fabs(nmu(b, 0) - ref));
    }
  }
  const bool pass = worst_train <= 1e-9 && worst_infer <= 1e-15 && worst_oracle <= 1e-12;
  return {pass, fmt::format("10000 triples; training |sNMU - NMU| max {:.2e} (<= 1e-9), inference max {:.2e} "
                            "(<= 1e-15), NMU vs reference product max {:.2e}",
                            worst_train, worst_infer, worst_oracle)};
}

// 8 -------------------------------------------------------------------------

Outcome adt_desk_scale() {
  const TaskSpec task{TaskKind::Adt};
  const auto wide = find_builtin_range("U[-2,2)");
  const auto pos = find_builtin_range("U[1.1,1.2)");
  const auto neg = find_builtin_range("U[-1.2,-1.1)");
  const TrainConfig cfg = TrainConfig::adt_desk();
  const auto snmu = sweep({ModelSpec::snmu(NoiseConfig::fixed(1, 5))}, {wide, pos, neg}, kFiveSeeds, task, cfg);
  const auto nmu = sweep({ModelSpec::nmu()}, {pos, neg}, kFiveSeeds, task, cfg);
  const std::size_t s_wide = successes(snmu.at({"snmu", wide.name()}), task, wide);
  const std::size_t s_pos = successes(snmu.at({"snmu", pos.name()}), task, pos);
  const std::size_t s_neg = successes(snmu.at({"snmu", neg.name()}), task, neg);
  const std::size_t n_pos = successes(nmu.at({"nmu", pos.name()}), task, pos);
  const std::size_t n_neg = successes(nmu.at({"nmu", neg.name()}), task, neg);
  const bool pass = s_wide == 5 && s_pos == 0 && s_neg == 0 && n_pos == 0 && n_neg == 0;
  return {pass, fmt::format("sNMU U[-2,2) {}/5 (need 5); U[1.1,1.2) sNMU {}/5 NMU {}/5, U[-1.2,-1.1) sNMU {}/5 NMU "
                            "{}/5 (need 0)",
                            s_wide, s_pos, n_pos, s_neg, n_neg)};
}

// 9 -------------------------------------------------------------------------

Outcome metrics_self_tests() {
  std::string detail;
  bool pass = true;

  // Wilson bounds against the closed form evaluated independently.
  const auto [lo25, hi25] = oracle::wilson95(25, 25);
  const auto [lo0, hi0] = oracle::wilson95(0, 25);
  const Interval full = binomial_ci(25, 25), none = binomial_ci(0, 25);
  const bool wilson_ok = std::fabs(full.lo - lo25) <= 1e-4 && std::fabs(full.hi - hi25) <= 1e-4 &&
                         std::fabs(none.lo - lo0) <= 1e-4 && std::fabs(none.hi - hi0) <= 1e-4 &&
                         std::fabs(full.lo - (1.0 - none.hi)) <= 1e-12;
  pass = pass && wilson_ok;
  detail += fmt::format("Wilson 25/25 [{:.5f}, {:.5f}], 0/25 [{:.5f}, {:.5f}]", full.lo, full.hi, none.lo, none.hi);

  // Thresholds strictly increase with epsilon on every range and both tasks.
  bool mono = true;
  const TaskSpec smt, adt{TaskKind::Adt};
  for (const auto& p : builtin_ranges()) {
    for (const TaskSpec* task : {&smt, &adt}) {
      const std::size_t n = task->kind == TaskKind::Smt ? kDefaultThresholdSamples : 100000;
      const double a = make_threshold(*task, p, 1e-7, n).simulated_mse;
      const double b = make_threshold(*task, p, 1e-5, n).simulated_mse;
      const double c = make_threshold(*task, p, 1e-3, n).simulated_mse;
      mono = mono && a < b && b < c;
    }
  }
  pass = pass && mono;
  detail += fmt::format("; thresholds monotone in epsilon: {}", mono ? "yes" : "no");

  // Two executions of the same sweep give byte-identical summaries.
  const auto root = std::filesystem::temp_directory_path() / "nalm_acceptance_determinism";
  std::filesystem::remove_all(root);
  ExperimentConfig cfg = parse_config(
      "[experiment]\nname = determinism\ntask = smt\nseeds = 3\nranges = U[1,2) U[-2,-1)\n"
      "[model nmu]\nunit = nmu\n[model snmu]\nunit = snmu\nnoise = uniform 1 5\n");
  std::ostringstream log;
  RunOptions opt;
  opt.quiet = true;
  opt.out = (root / "a").string();
  const int ra = cmd_run(cfg, opt, log);
  opt.out = (root / "b").string();
  const int rb = cmd_run(cfg, opt, log);
  bool same = ra == 0 && rb == 0;
  for (const char* f : {"summary.csv", "summary.json"}) {
    same = same && read_file(root / "a" / f) == read_file(root / "b" / f);
  }
  std::filesystem::remove_all(root);
  pass = pass && same;
  detail += fmt::format("; repeated run summaries identical: {}", same ? "yes" : "no");
  return {pass, detail};
}

// 10 ------------------------------------------------------------------------

Outcome alternate_stochastic() {
  bool decreasing = true;
  for (double eta : {0.01, 0.3, 1.0}) {
    double prev = grad_noise_sigma2(0, eta);
    for (long t = 1; t <= 1000000; t += 1 + t / 10) {
      const double v = grad_noise_sigma2(t, eta);
      decreasing = decreasing && v < prev && v > 0.0;
      prev = v;
    }
  }

  // Standard normal CDF table values at z = mu / sigma, sigma = 0.5.
  const std::pair<double, double> table[] = {{0.0, 0.5},
                                             {0.5, 0.691462461274013},
                                             {1.0, 0.841344746068543},
                                             {1.5, 0.933192798731142},
                                             {2.0, 0.977249868051821},
                                             {-1.0, 0.158655253931457}};
  double worst_phi = 0.0, sum_expected = 0.0;
  std::vector<double> all_mu;
  for (const auto& [z, phi] : table) {
    const double mu = 0.5 * z;
    const double got = stg_l0_penalty(std::vector<double>{mu}, 0.5);
    worst_phi = std::max(worst_phi, std::fabs(got - phi));
    all_mu.push_back(mu);
    sum_expected += phi;
  }
  worst_phi = std::max(worst_phi, std::fabs(stg_l0_penalty(all_mu, 0.5) - sum_expected));

  const TaskSpec task;
  const auto pair = find_builtin_range("U[1,2)");
  const auto cells = sweep({ModelSpec::stg(0.01)}, {pair}, kFiveSeeds, task, TrainConfig::smt());
  const std::size_t k = successes(cells.at({"stgnmu", pair.name()}), task, pair);

  const bool pass = decreasing && worst_phi <= 1e-6 && k == kFiveSeeds.size();
  return {pass, fmt::format("gradient-noise variance decreasing: {}; L0 penalty vs normal table max error {:.2e} "
                            "(<= 1e-6); stgNMU lambda=0.01 on U[1,2) {}/5 (need 5)",
                            decreasing ? "yes" : "no", worst_phi, k)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"1 sNMU succeeds on every single-module range", snmu_all_ranges},
      {"2 NMU failure pattern on the single-module task", nmu_failure_pattern},
      {"3 NMU and MLP-100 on U[1,2)", nmu_and_mlp_on_positive_range},
      {"4 selection case study outputs", case_study_table},
      {"5 loss landscape for x = (-2, -1.8)", landscape_values},
      {"6 autodiff vs closed-form and finite-difference gradients", gradient_equivalence},
      {"7 sNMU noise cancellation at binary weights", cancellation},
      {"8 arithmetic dataset task at desk scale", adt_desk_scale},
      {"9 metrics self-tests", metrics_self_tests},
      {"10 gradient noise and stochastic gates", alternate_stochastic},
  };
  std::size_t passed = 0;
  for (const auto& [name, run] : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << fmt::format("[{}] {}: {} ({:.0f}s)", o.pass ? "PASS" : "FAIL", name, o.detail, secs) << std::endl;
    passed += o.pass;
  }
  std::cout << fmt::format("{}/{} criteria passed", passed, criteria.size()) << std::endl;
  return passed == criteria.size() ? 0 : 1;
}
