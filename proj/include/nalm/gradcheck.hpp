#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "nalm/matrix.hpp"
#include "nalm/tape.hpp"

namespace nalm {

/// Central-difference gradient (f(p + h e_i) - f(p - h e_i)) / 2h.
/// Non-finite values of f propagate into the result.
inline std::vector<double> finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                                            std::span<const double> p, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_grad: step must be positive");
  std::vector<double> point(p.begin(), p.end());
  std::vector<double> grad(point.size());
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double orig = point[i];
    point[i] = orig + h;
    const double fp = f(point);
    point[i] = orig - h;
    const double fm = f(point);
    point[i] = orig;
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

/// Largest elementwise relative error between two sequences, where pairs
/// whose absolute difference is at most `abs_floor` count as exact.
inline double max_relative_error(std::span<const double> a, std::span<const double> b, double abs_floor = 0.0) {
  if (a.size() != b.size()) throw std::invalid_argument("max_relative_error: length mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = std::fabs(a[i] - b[i]);
    if (!(diff <= abs_floor)) {
      const double scale = std::max(std::fabs(a[i]), std::fabs(b[i]));
      const double rel = scale > 0.0 ? diff / scale : diff;
      if (!(rel <= worst)) worst = std::isnan(rel) ? INFINITY : rel;
    }
  }
  return worst;
}

/// Concatenates the values of all parameters of `tape`, in parameter order.
inline std::vector<double> flatten_parameters(const Tape& tape) {
  std::vector<double> out;
  for (NodeId p : tape.parameters()) {
    const auto v = tape.value(p).data();
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

inline std::vector<double> flatten_gradients(const Tape& tape, const Gradients& grads) {
  std::vector<double> out;
  for (NodeId p : tape.parameters()) {
    const auto v = grads.at(p).data();
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

/// Finite-difference gradient of the scalar node `loss` with respect to every
/// parameter of `tape`, using the inputs currently bound. Parameter values are
/// restored afterwards.
inline std::vector<double> tape_finite_diff(Tape& tape, NodeId loss, double h) {
  const std::vector<double> base = flatten_parameters(tape);
  auto set_all = [&](std::span<const double> values) {
    std::size_t k = 0;
    for (NodeId p : tape.parameters()) {
      for (double& v : tape.parameter_value(p).data()) v = values[k++];
    }
  };
  auto f = [&](std::span<const double> values) {
    set_all(values);
    return tape.forward(loss).item();
  };
  std::vector<double> g = finite_diff_grad(f, base, h);
  set_all(base);
  tape.forward(loss);
  return g;
}

}  // namespace nalm
