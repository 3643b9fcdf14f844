#pragma once

// Reference implementations used as test oracles. They are written from the
// unit definitions directly, without sharing code with the library.

#include <cmath>
#include <functional>
#include <vector>

namespace oracle {

using Vec = std::vector<double>;

/// z_o = sum_i x_i W[i][o]
inline Vec nau(const Vec& x, const std::vector<Vec>& W) {
  Vec z(W.at(0).size(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t o = 0; o < z.size(); ++o) z[o] += x[i] * W[i][o];
  return z;
}

/// prod_i (W_i x_i + 1 - W_i) for one output.
inline double nmu(const Vec& x, const Vec& w) {
  double p = 1.0;
  for (std::size_t i = 0; i < x.size(); ++i) p *= (w[i] * x[i] + 1.0 - w[i]);
  return p;
}

/// Noised product divided by the same product evaluated at x = 1.
inline double snmu(const Vec& x, const Vec& w, const Vec& n) {
  double num = 1.0, den = 1.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    num *= w[i] * (n[i] * x[i]) + 1.0 - w[i];
    den *= w[i] * n[i] + 1.0 - w[i];
  }
  return num / den;
}

inline double reg(const Vec& w) {
  double s = 0.0;
  for (double v : w) s += std::min(std::fabs(v), 1.0 - std::fabs(v));
  return s / static_cast<double>(w.size());
}

/// Five-point central difference of f at x along coordinate k.
inline double derivative(const std::function<double(const Vec&)>& f, Vec x, std::size_t k, double h = 1e-4) {
  const double x0 = x[k];
  auto at = [&](double d) {
    x[k] = x0 + d;
    return f(x);
  };
  return (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12 * h);
}

/// Textbook Adam on a parameter vector.
struct Adam {
  double lr, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  Vec m, v;
  int t = 0;
  explicit Adam(double lr_) : lr(lr_) {}
  void step(Vec& p, const Vec& g) {
    if (m.empty()) m.assign(p.size(), 0.0), v.assign(p.size(), 0.0);
    ++t;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = b1 * m[i] + (1 - b1) * g[i];
      v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
      const double mh = m[i] / (1 - std::pow(b1, t));
      const double vh = v[i] / (1 - std::pow(b2, t));
      p[i] -= lr * mh / (std::sqrt(vh) + eps);
    }
  }
};

/// Wilson score interval with z fixed at the two-sided 95% normal quantile.
inline std::pair<double, double> wilson95(double k, double n) {
  const double z = 1.959963984540054;
  const double p = k / n;
  const double denom = 1 + z * z / n;
  const double centre = p + z * z / (2 * n);
  const double rad = z * std::sqrt(p * (1 - p) / n + z * z / (4 * n * n));
  return {(centre - rad) / denom, (centre + rad) / denom};
}

}  // namespace oracle
