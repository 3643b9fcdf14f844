#pragma once

#include <cmath>
#include <fstream>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "nalm/layers.hpp"
#include "nalm/matrix.hpp"
#include "nalm/tasks.hpp"

namespace nalm {

/// Values on a rectangular grid; values(i, j) belongs to (axis1[i], axis2[j]).
struct Grid2D {
  std::vector<double> axis1, axis2;
  Matrix values;
  nlohmann::json metadata = nlohmann::json::object();
};

inline std::vector<double> linspace(double lo, double hi, std::size_t n) {
  if (n < 2 || !(lo < hi)) throw std::invalid_argument("linspace: need n >= 2 and lo < hi");
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  out.back() = hi;
  return out;
}

/// Default landscape axis: [-1, 1.5] in 0.01 steps.
inline std::vector<double> landscape_axis() { return linspace(-1.0, 1.5, 251); }

namespace detail {
inline void check_axis(const std::vector<double>& a, const char* what) {
  if (a.empty()) throw std::invalid_argument(fmt::format("{}: empty axis", what));
  for (std::size_t i = 1; i < a.size(); ++i)
    if (!(a[i] > a[i - 1])) throw std::invalid_argument(fmt::format("{}: axis must be strictly increasing", what));
}
}  // namespace detail

/// Squared error of a 2-input NMU on a single sample for every (w1, w2) of
/// the grid. No clamping, so weights outside [0, 1] are evaluated as-is.
inline Grid2D loss_grid(std::span<const double> x, double y, const std::vector<double>& w1_axis,
                        const std::vector<double>& w2_axis) {
  if (x.size() != 2) throw std::invalid_argument("loss_grid: expected a 2-input sample");
  detail::check_axis(w1_axis, "loss_grid");
  detail::check_axis(w2_axis, "loss_grid");
  Grid2D g{w1_axis, w2_axis, Matrix(w1_axis.size(), w2_axis.size())};
  const Matrix X = Matrix::row({x[0], x[1]});
  Matrix W(2, 1);
  for (std::size_t i = 0; i < w1_axis.size(); ++i) {
    for (std::size_t j = 0; j < w2_axis.size(); ++j) {
      W(0, 0) = w1_axis[i];
      W(1, 0) = w2_axis[j];
      const double d = y - nmu_forward(X, W).item();
      g.values(i, j) = d * d;
    }
  }
  g.metadata = {{"kind", "loss_landscape"}, {"sample", {{"x", {x[0], x[1]}}, {"y", y}}}, {"unit", "nmu"}};
  return g;
}

/// Centres of `bins` equal bins over [lo, hi).
inline std::vector<double> bin_centres(const RangeSpec& r, std::size_t bins) {
  if (bins == 0) throw std::invalid_argument("bin_centres: need at least one bin");
  std::vector<double> out(bins);
  const double w = r.width() / static_cast<double>(bins);
  for (std::size_t i = 0; i < bins; ++i) out[i] = r.lo + (static_cast<double>(i) + 0.5) * w;
  return out;
}

inline double golden_product(double a, double b) { return a * b; }

/// f evaluated on the bins x bins grid of bin centres.
inline Grid2D function_surface(const std::function<double(double, double)>& f, const RangeSpec& d1,
                               const RangeSpec& d2, std::size_t bins = 20) {
  Grid2D g{bin_centres(d1, bins), bin_centres(d2, bins), Matrix(bins, bins)};
  for (std::size_t i = 0; i < bins; ++i)
    for (std::size_t j = 0; j < bins; ++j) g.values(i, j) = f(g.axis1[i], g.axis2[j]);
  g.metadata = {{"kind", "surface"}, {"domain", {d1.to_string(), d2.to_string()}}, {"bins", bins}};
  return g;
}

inline Grid2D golden_surface(const RangeSpec& d1, const RangeSpec& d2, std::size_t bins = 20) {
  Grid2D g = function_surface(golden_product, d1, d2, bins);
  g.metadata["model"] = "golden";
  return g;
}

struct GridPoint {
  std::size_t i = 0, j = 0;
  double a1 = 0.0, a2 = 0.0, value = 0.0;
};

/// Interior cells no larger than any of their 8 neighbours and at most
/// `max_value`.
inline std::vector<GridPoint> grid_local_minima(const Grid2D& g, double max_value) {
  std::vector<GridPoint> out;
  const std::size_t R = g.values.rows(), C = g.values.cols();
  for (std::size_t i = 1; i + 1 < R; ++i) {
    for (std::size_t j = 1; j + 1 < C; ++j) {
      const double v = g.values(i, j);
      if (v > max_value) continue;
      bool is_min = true;
      for (int di = -1; di <= 1 && is_min; ++di)
        for (int dj = -1; dj <= 1; ++dj)
          if ((di || dj) && g.values(i + di, j + dj) < v) {
            is_min = false;
            break;
          }
      if (is_min) out.push_back({i, j, g.axis1[i], g.axis2[j], v});
    }
  }
  return out;
}

inline std::size_t nearest_index(const std::vector<double>& axis, double v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < axis.size(); ++i)
    if (std::fabs(axis[i] - v) < std::fabs(axis[best] - v)) best = i;
  return best;
}

/// Long-form CSV (axis1, axis2, value) plus a JSON sidecar `<path>.meta.json`
/// when `meta_path` is non-empty.
inline void write_grid_csv(const std::string& path, const Grid2D& g, const std::string& meta_path = {}) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "axis1,axis2,value\n";
  for (std::size_t i = 0; i < g.axis1.size(); ++i)
    for (std::size_t j = 0; j < g.axis2.size(); ++j)
      out << fmt::format("{:.17g},{:.17g},{:.17g}\n", g.axis1[i], g.axis2[j], g.values(i, j));
  if (!meta_path.empty()) {
    nlohmann::json meta = g.metadata;
    meta["axis1"] = {{"min", g.axis1.front()}, {"max", g.axis1.back()}, {"points", g.axis1.size()}};
    meta["axis2"] = {{"min", g.axis2.front()}, {"max", g.axis2.back()}, {"points", g.axis2.size()}};
    std::ofstream m(meta_path);
    if (!m) throw std::runtime_error("cannot write " + meta_path);
    m << meta.dump(2) << '\n';
  }
}

// Closed-form gradients of the MSE for a stacked NAU -> NMU / sNMU with one
// output. X is B x I, W_nau is I x O, W_unit is O x 1; the loss is the batch
// mean of (y - y_hat)^2.

namespace detail {
inline void check_stack(const Matrix& X, const Matrix& y, const Matrix& Wa, const Matrix& Wm) {
  if (Wm.cols() != 1) throw std::invalid_argument("analytic gradient: output size must be 1, got " + Wm.shape());
  if (X.cols() != Wa.rows() || Wa.cols() != Wm.rows() || y.rows() != X.rows() || y.cols() != 1) {
    throw std::invalid_argument("analytic gradient: inconsistent shapes X " + X.shape() + ", y " + y.shape() +
                                ", W_nau " + Wa.shape() + ", W_unit " + Wm.shape());
  }
}
}  // namespace detail

inline std::pair<Matrix, Matrix> analytic_grad_nau_nmu(const Matrix& X, const Matrix& y, const Matrix& Wa,
                                                       const Matrix& Wm) {
  detail::check_stack(X, y, Wa, Wm);
  const std::size_t B = X.rows(), I = X.cols(), O = Wa.cols();
  Matrix dWa(I, O), dWm(O, 1);
  std::vector<double> z(O), f(O);
  for (std::size_t n = 0; n < B; ++n) {
    double yhat = 1.0;
    for (std::size_t l = 0; l < O; ++l) {
      z[l] = 0.0;
      for (std::size_t i = 0; i < I; ++i) z[l] += X(n, i) * Wa(i, l);
      f[l] = Wm(l, 0) * z[l] + (1.0 - Wm(l, 0));
      yhat *= f[l];
    }
    const double r2 = -2.0 * (y(n, 0) - yhat);
    for (std::size_t l = 0; l < O; ++l) {
      double A = 1.0;  // prod_{j != l} of the NMU factors
      for (std::size_t j = 0; j < O; ++j)
        if (j != l) A *= f[j];
      for (std::size_t i = 0; i < I; ++i) dWa(i, l) += r2 * A * Wm(l, 0) * X(n, i);
      dWm(l, 0) += r2 * A * (z[l] - 1.0);
    }
  }
  const double inv = 1.0 / static_cast<double>(B);
  for (double& v : dWa.data()) v *= inv;
  for (double& v : dWm.data()) v *= inv;
  return {dWa, dWm};
}

/// Quotient-rule gradients of the stacked NAU -> sNMU. With the noisy factors
/// num_j = N_j W_j z_j + 1 - W_j, the denoising factors den_j = N_j W_j + 1 - W_j,
/// A = prod_{j != l} num_j and D = prod_j den_j:
///   dL/dW^A_{i,l} = -2 r (A / D) W_l N_l x_i
///   dL/dW^M_l     = -2 r (A / D^2) [D (N_l z_l - 1) - num_l (N_l - 1) prod_{j != l} den_j]
/// N is B x O (one noise value per NAU output).
inline std::pair<Matrix, Matrix> analytic_grad_nau_snmu(const Matrix& X, const Matrix& y, const Matrix& Wa,
                                                        const Matrix& Wm, const Matrix& N) {
  detail::check_stack(X, y, Wa, Wm);
  const std::size_t B = X.rows(), I = X.cols(), O = Wa.cols();
  if (N.rows() != B || N.cols() != O) {
    throw std::invalid_argument("analytic_grad_nau_snmu: noise is " + N.shape() + ", expected " + std::to_string(B) +
                                "x" + std::to_string(O));
  }
  for (double v : N.data())
    if (!(v > 0.0)) throw std::invalid_argument("analytic_grad_nau_snmu: noise must be strictly positive");
  Matrix dWa(I, O), dWm(O, 1);
  std::vector<double> z(O), num(O), den(O);
  for (std::size_t n = 0; n < B; ++n) {
    double P = 1.0, D = 1.0;
    for (std::size_t l = 0; l < O; ++l) {
      z[l] = 0.0;
      for (std::size_t i = 0; i < I; ++i) z[l] += X(n, i) * Wa(i, l);
      const double w = Wm(l, 0), nz = N(n, l);
      num[l] = (nz * z[l]) * w + (1.0 - w);
      den[l] = nz * w + (1.0 - w);
      P *= num[l];
      D *= den[l];
    }
    const double r2 = -2.0 * (y(n, 0) - P / D);
    for (std::size_t l = 0; l < O; ++l) {
      const double w = Wm(l, 0), nz = N(n, l);
      double A = 1.0, Dl = 1.0;
      for (std::size_t j = 0; j < O; ++j) {
        if (j == l) continue;
        A *= num[j];
        Dl *= den[j];
      }
      for (std::size_t i = 0; i < I; ++i) dWa(i, l) += r2 * (A / D) * (w * nz) * X(n, i);
      dWm(l, 0) += r2 * (A / (D * D)) * (D * (nz * z[l] - 1.0) - num[l] * (nz - 1.0) * Dl);
    }
  }
  const double inv = 1.0 / static_cast<double>(B);
  for (double& v : dWa.data()) v *= inv;
  for (double& v : dWm.data()) v *= inv;
  return {dWa, dWm};
}

// Two-layer selection case study: input size 4, slices {2,3} and {3,4}
// (1-based), NMU weights fixed at 1.

struct CaseStudyRow {
  std::string name;
  Matrix nau_weights;  // 4 x 2
  double i1_out = 0.0, i1_abs_error = 0.0;
  double i2_out = 0.0, i2_abs_error = 0.0;
};

inline double case_study_forward(const Matrix& x, const Matrix& Wa) {
  return nmu_forward(nau_forward(x, Wa), Matrix(2, 1, 1.0)).item();
}

inline std::vector<CaseStudyRow> selection_case_study() {
  const Matrix i1 = Matrix::row({1.0, 2.0, 3.0, 4.0});
  const Matrix i2 = Matrix::row({1.11, 1.12, 1.13, 1.14});
  const Matrix correct = Matrix::from_rows({{0, 0}, {1, 0}, {1, 1}, {0, 1}});
  auto target = [&](const Matrix& x) { return case_study_forward(x, correct); };
  const std::vector<std::pair<std::string, Matrix>> cases = {
      {"selection correct, weights correct", correct},
      {"selection correct, weights wrong", Matrix::from_rows({{0, 0}, {0.9, 0}, {1, 1}, {0, 1}})},
      {"selection wrong, weights wrong", Matrix::from_rows({{0, 0}, {0, 0}, {1, 1}, {0.9, 1}})},
  };
  std::vector<CaseStudyRow> rows;
  for (const auto& [name, W] : cases) {
    CaseStudyRow r{name, W};
    r.i1_out = case_study_forward(i1, W);
    r.i1_abs_error = std::fabs(target(i1) - r.i1_out);
    r.i2_out = case_study_forward(i2, W);
    r.i2_abs_error = std::fabs(target(i2) - r.i2_out);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace nalm
