#pragma once

#include <cmath>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "nalm/analysis.hpp"
#include "nalm/gradcheck.hpp"
#include "nalm/model.hpp"

namespace nalm {

enum class VerifyLevel { Quick, Full };

inline VerifyLevel parse_verify_level(const std::string& s) {
  if (s == "quick") return VerifyLevel::Quick;
  if (s == "full") return VerifyLevel::Full;
  throw std::invalid_argument("unknown verify level '" + s + "' (expected quick or full)");
}

struct VerifyCheck {
  std::string name;
  bool pass = false;
  std::string detail;
};

/// Training-mode sNMU forward, swappable so the suite can be run against a
/// deliberately broken implementation.
using SnmuForwardFn = std::function<Matrix(const Matrix&, const Matrix&, const Matrix&)>;

inline Matrix reference_snmu_training(const Matrix& X, const Matrix& W, const Matrix& N) {
  return snmu_forward(X, W, N, true);
}

/// Broken on purpose: the denominator is prod_i n_i, ignoring the weights.
inline Matrix faulty_snmu_training(const Matrix& X, const Matrix& W, const Matrix& N) {
  Matrix out(X.rows(), W.cols());
  for (std::size_t b = 0; b < X.rows(); ++b) {
    for (std::size_t o = 0; o < W.cols(); ++o) {
      double num = 1.0, den = 1.0;
      for (std::size_t i = 0; i < X.cols(); ++i) {
        const double w = W(i, o), n = N(b, i);
        num *= (n * X(b, i)) * w + (1.0 - w);
        den *= n;
      }
      out(b, o) = num / den;
    }
  }
  return out;
}

namespace detail {

inline Matrix random_matrix(std::size_t r, std::size_t c, double lo, double hi, Rng& rng) {
  Matrix m(r, c);
  for (double& v : m.data()) v = rng.uniform(lo, hi);
  return m;
}

/// Backprop against central differences for every parameter of a model's
/// full training loss.
inline VerifyCheck model_gradient_check(const ModelSpec& spec, std::size_t input, bool stacked, Rng& rng) {
  Model m(spec, input, stacked, rng);
  const std::size_t B = 8;
  const Matrix X = random_matrix(B, input, 1.0, 2.0, rng);
  Matrix y(B, 1);
  for (std::size_t b = 0; b < B; ++b) y(b, 0) = X(b, 0) * X(b, input - 1);
  Tape& t = m.tape();
  const auto& n = m.nodes();
  t.bind(n.x, X);
  t.bind(n.y, y);
  t.bind(n.lambda, Matrix::scalar(0.3));
  if (n.noise) t.bind(*n.noise, random_matrix(B, m.unit_input_size(), 1.0, 5.0, rng));
  if (n.gate_noise) t.bind(*n.gate_noise, random_matrix(m.unit_input_size(), 1, -0.2, 0.2, rng));
  t.forward(n.loss);
  const auto analytic = flatten_gradients(t, t.backward(n.loss));
  const auto numeric = tape_finite_diff(t, n.loss, 1e-6);
  const double err = max_relative_error(analytic, numeric, 1e-9);
  return {fmt::format("backprop vs finite differences: {} input {}{}", spec.name, input, stacked ? " (NAU stacked)" : ""),
          err < 1e-5, fmt::format("max rel error {:.2e}", err)};
}

/// Closed-form NAU -> NMU / sNMU gradients against the tape.
inline VerifyCheck analytic_check(bool noisy, std::size_t input, Rng& rng) {
  const std::size_t B = 16;
  const Matrix X = random_matrix(B, input, -2.0, 2.0, rng);
  const Matrix y = random_matrix(B, 1, -4.0, 4.0, rng);
  const Matrix Wa = random_matrix(input, 2, -1.0, 1.0, rng);
  const Matrix Wm = random_matrix(2, 1, 0.0, 1.0, rng);
  const Matrix N = noisy ? random_matrix(B, 2, 1.0, 5.0, rng) : Matrix(B, 2, 1.0);

  Tape t;
  const NodeId x = t.constant(X), target = t.constant(y);
  const NodeId wa = t.parameter("nau.W", Wa), wm = t.parameter("unit.W", Wm);
  const NodeId z = nau_node(t, x, wa);
  const NodeId pred = noisy ? snmu_node(t, z, wm, t.constant(N), 1) : nmu_node(t, z, wm, 1);
  const NodeId d = t.sub(target, pred);
  const NodeId loss = t.mean(t.mul(d, d));
  t.forward(loss);
  const Gradients g = t.backward(loss);

  const auto [ga, gm] = noisy ? analytic_grad_nau_snmu(X, y, Wa, Wm, N) : analytic_grad_nau_nmu(X, y, Wa, Wm);
  std::vector<double> a(ga.data().begin(), ga.data().end()), b(g.at(wa).data().begin(), g.at(wa).data().end());
  a.insert(a.end(), gm.data().begin(), gm.data().end());
  b.insert(b.end(), g.at(wm).data().begin(), g.at(wm).data().end());
  const double err = max_relative_error(a, b, 1e-13);
  return {fmt::format("closed-form gradients vs backprop: NAU -> {} input {}", noisy ? "sNMU" : "NMU", input),
          err < 1e-9, fmt::format("max rel error {:.2e}", err)};
}

}  // namespace detail

/// Random binary-weight cancellation test: the training-mode sNMU must equal
/// the NMU for any positive noise.
inline VerifyCheck cancellation_check(const SnmuForwardFn& snmu, std::size_t trials, Rng& rng) {
  double worst = 0.0;
  for (std::size_t k = 0; k < trials; ++k) {
    const std::size_t I = 1 + rng.uniform_index(6);
    const Matrix X = detail::random_matrix(1, I, -100.0, 100.0, rng);
    Matrix W(I, 1);
    for (double& w : W.data()) w = rng.uniform01() < 0.5 ? 0.0 : 1.0;
    const Matrix N = detail::random_matrix(1, I, 1.0, 5.0, rng);
    const double ref = nmu_forward(X, W).item();
    const double got = snmu(X, W, N).item();
    worst = std::max(worst, std::fabs(got - ref) / std::max(1.0, std::fabs(ref)));
  }
  return {fmt::format("sNMU noise cancellation at binary weights ({} trials)", trials), worst <= 1e-9,
          fmt::format("max scaled deviation {:.2e}", worst)};
}

/// Selection case study against the published outputs and absolute errors.
inline VerifyCheck case_study_check() {
  const double expected[3][4] = {{35, 0, 5.1075, 0}, {33.6, 1.4, 4.85326, 0.25424}, {46.2, 11.2, 4.89412, 0.21338}};
  const auto rows = selection_case_study();
  double worst = 0.0;
  for (std::size_t r = 0; r < 3; ++r) {
    const double got[4] = {rows[r].i1_out, rows[r].i1_abs_error, rows[r].i2_out, rows[r].i2_abs_error};
    for (int c = 0; c < 4; ++c) worst = std::max(worst, std::fabs(got[c] - expected[r][c]));
  }
  return {"two-layer selection case study outputs", worst < 1e-9, fmt::format("max abs deviation {:.2e}", worst)};
}

/// The (-2, -1.8) landscape is zero at (1, 1) and at (-1/6, -0.5), the
/// non-extrapolating solution, while (0, 0) is not a solution.
inline VerifyCheck landscape_check() {
  const auto axis = landscape_axis();
  const double x[2] = {-2.0, -1.8};
  const Grid2D g = loss_grid(x, 3.6, axis, axis);
  auto at = [&](double a, double b) { return g.values(nearest_index(axis, a), nearest_index(axis, b)); };
  const double l11 = at(1.0, 1.0), lalt = at(-1.0 / 6.0, -0.5), l00 = at(0.0, 0.0);
  const bool pass = l11 < 1e-12 && lalt < 1e-2 && l00 > 1.0;
  return {"loss landscape for x = (-2, -1.8)", pass,
          fmt::format("loss(1,1) = {:.2e}, loss(-1/6,-0.5) = {:.2e}, loss(0,0) = {:.3g}", l11, lalt, l00)};
}

inline std::vector<VerifyCheck> run_verify(VerifyLevel level, const SnmuForwardFn& snmu = reference_snmu_training) {
  Rng rng = Rng::stream(1, "verify");
  std::vector<VerifyCheck> out;
  const std::vector<std::size_t> sizes =
      level == VerifyLevel::Full ? std::vector<std::size_t>{2, 4, 100} : std::vector<std::size_t>{2, 4};
  for (std::size_t I : sizes) {
    out.push_back(detail::analytic_check(false, I, rng));
    out.push_back(detail::analytic_check(true, I, rng));
  }
  out.push_back(detail::model_gradient_check(ModelSpec::nmu(), 2, false, rng));
  out.push_back(detail::model_gradient_check(ModelSpec::snmu(NoiseConfig::fixed(1, 5)), 2, false, rng));
  out.push_back(detail::model_gradient_check(ModelSpec::stg(0.1), 2, false, rng));
  out.push_back(detail::model_gradient_check(ModelSpec::mlp(8), 2, false, rng));
  out.push_back(detail::model_gradient_check(ModelSpec::nmu(), 10, true, rng));
  out.push_back(detail::model_gradient_check(ModelSpec::snmu(NoiseConfig::fixed(1, 5)), 10, true, rng));
  out.push_back(cancellation_check(snmu, level == VerifyLevel::Full ? 10000 : 1000, rng));
  out.push_back(case_study_check());
  out.push_back(landscape_check());
  return out;
}

inline bool all_pass(const std::vector<VerifyCheck>& checks) {
  for (const auto& c : checks)
    if (!c.pass) return false;
  return true;
}

inline int cmd_verify(VerifyLevel level, std::ostream& log, const SnmuForwardFn& snmu = reference_snmu_training) {
  const auto checks = run_verify(level, snmu);
  std::size_t passed = 0;
  for (const auto& c : checks) {
    fmt::print(log, "[{}] {} ({})\n", c.pass ? "PASS" : "FAIL", c.name, c.detail);
    passed += c.pass;
  }
  fmt::print(log, "{}/{} checks passed\n", passed, checks.size());
  return passed == checks.size() ? 0 : 1;
}

}  // namespace nalm
