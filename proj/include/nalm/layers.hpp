#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "nalm/matrix.hpp"
#include "nalm/random.hpp"
#include "nalm/tape.hpp"

namespace nalm {

/// Input noise of the stochastic NMU.
struct NoiseConfig {
  enum class Mode { None, Fixed, BatchStat };

  Mode mode = Mode::None;
  double lo = 1.0;
  double hi = 1.0;

  static NoiseConfig none() { return {}; }
  static NoiseConfig fixed(double a, double b) {
    if (!(a > 0.0) || !(a <= b)) {
      throw std::invalid_argument("NoiseConfig::fixed requires 0 < a <= b, got [" + std::to_string(a) + ", " +
                                  std::to_string(b) + "]");
    }
    return {Mode::Fixed, a, b};
  }
  static NoiseConfig batch_stat() { return {Mode::BatchStat, 1.0, 1.0}; }

  /// "none", "uniform A B" or "batch".
  std::string to_string() const {
    switch (mode) {
      case Mode::None: return "none";
      case Mode::BatchStat: return "batch";
      case Mode::Fixed: {
        std::ostringstream os;
        os.precision(17);
        os << "uniform " << lo << ' ' << hi;
        return os.str();
      }
    }
    return "none";
  }

  static NoiseConfig parse(const std::string& text) {
    std::istringstream is(text);
    std::string kind;
    is >> kind;
    if (kind == "none" || kind.empty()) return none();
    if (kind == "batch") return batch_stat();
    if (kind == "uniform") {
      double a = 0.0, b = 0.0;
      if (!(is >> a >> b)) throw std::invalid_argument("noise: expected 'uniform A B', got '" + text + "'");
      std::string rest;
      if (is >> rest) throw std::invalid_argument("noise: trailing text in '" + text + "'");
      return fixed(a, b);
    }
    throw std::invalid_argument("noise: unknown mode '" + kind + "'");
  }

  friend bool operator==(const NoiseConfig&, const NoiseConfig&) = default;
};

enum class LayerKind { Nau, Nmu, Snmu, Mlp };

struct LayerSpec {
  LayerKind kind = LayerKind::Nmu;
  std::size_t in_size = 2;
  std::size_t out_size = 1;
  std::size_t mlp_width = 1;
  NoiseConfig noise;
};

// ---------------------------------------------------------------------------
// Plain forwards

namespace detail {
inline void check_layer_shapes(const char* what, const Matrix& X, const Matrix& W) {
  if (X.cols() != W.rows()) {
    throw std::invalid_argument(std::string(what) + ": input " + X.shape() + " does not match weights " + W.shape());
  }
}
}  // namespace detail

/// a_o = sum_i W(i,o) x_i for each batch row.
inline Matrix nau_forward(const Matrix& X, const Matrix& W) {
  detail::check_layer_shapes("nau_forward", X, W);
  return matmul(X, W);
}

/// m_o = prod_i (W(i,o) x_i + 1 - W(i,o)) for each batch row.
inline Matrix nmu_forward(const Matrix& X, const Matrix& W) {
  detail::check_layer_shapes("nmu_forward", X, W);
  Matrix out(X.rows(), W.cols());
  for (std::size_t b = 0; b < X.rows(); ++b) {
    for (std::size_t o = 0; o < W.cols(); ++o) {
      double p = 1.0;
      for (std::size_t i = 0; i < X.cols(); ++i) {
        const double w = W(i, o);
        p *= w * X(b, i) + (1.0 - w);
      }
      out(b, o) = p;
    }
  }
  return out;
}

/// Stochastic NMU. In training mode the inputs are scaled by the noise N and
/// the product is divided by prod_i (n_i W(i,o) + 1 - W(i,o)), which cancels
/// the noise exactly when every weight is 0 or 1. In inference mode N is
/// ignored and the result equals nmu_forward.
inline Matrix snmu_forward(const Matrix& X, const Matrix& W, const Matrix& N, bool training) {
  if (!training) return nmu_forward(X, W);
  detail::check_layer_shapes("snmu_forward", X, W);
  if (!N.same_shape(X)) {
    throw std::invalid_argument("snmu_forward: noise " + N.shape() + " does not match input " + X.shape());
  }
  for (double n : N.data()) {
    if (!(n > 0.0)) throw std::invalid_argument("snmu_forward: noise entries must be strictly positive");
  }
  Matrix out(X.rows(), W.cols());
  for (std::size_t b = 0; b < X.rows(); ++b) {
    for (std::size_t o = 0; o < W.cols(); ++o) {
      double num = 1.0;
      double den = 1.0;
      for (std::size_t i = 0; i < X.cols(); ++i) {
        const double w = W(i, o);
        const double n = N(b, i);
        num *= (n * X(b, i)) * w + (1.0 - w);
        den *= n * w + (1.0 - w);
      }
      out(b, o) = num / den;
    }
  }
  return out;
}

/// Sample standard deviation over every element of X.
inline double batch_stddev(const Matrix& X) {
  const std::size_t n = X.size();
  if (n < 2) return NAN;
  double mean = 0.0;
  for (double v : X.data()) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : X.data()) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(n - 1));
}

inline constexpr double kBatchStatSigmaFloor = 0.01;

/// Upper bound 1 + 1/sigma(X) for batch-statistic noise; sigma is floored at
/// 0.01. Returns NaN when sigma is not finite.
inline double batch_noise_upper(const Matrix& X) {
  const double sigma = batch_stddev(X);
  if (!std::isfinite(sigma)) return NAN;
  return 1.0 + 1.0 / std::max(sigma, kBatchStatSigmaFloor);
}

/// Noise matrix with the shape of X. Every element is drawn independently.
inline Matrix sample_noise(const NoiseConfig& cfg, const Matrix& X, Rng& rng) {
  Matrix N(X.rows(), X.cols(), 1.0);
  double lo = cfg.lo, hi = cfg.hi;
  switch (cfg.mode) {
    case NoiseConfig::Mode::None:
      return N;
    case NoiseConfig::Mode::Fixed:
      break;
    case NoiseConfig::Mode::BatchStat: {
      const double upper = batch_noise_upper(X);
      if (!std::isfinite(upper)) return N;  // falls back to U[1,1]
      lo = 1.0;
      hi = upper;
      break;
    }
  }
  if (lo == hi) {
    N.fill(lo);
    return N;
  }
  for (double& v : N.data()) v = lo + (hi - lo) * rng.uniform01();
  return N;
}

struct MlpParams {
  Matrix w1;  // I x H
  Matrix b1;  // 1 x H
  Matrix w2;  // H x 1
  Matrix b2;  // 1 x 1
};

/// One hidden ReLU layer with biases: W2 relu(W1 x + b1) + b2.
inline Matrix mlp_forward(const Matrix& X, const MlpParams& p) {
  detail::check_layer_shapes("mlp_forward", X, p.w1);
  if (p.b1.rows() != 1 || p.b1.cols() != p.w1.cols() || p.w2.rows() != p.w1.cols() || p.b2.rows() != 1 ||
      p.b2.cols() != p.w2.cols()) {
    throw std::invalid_argument("mlp_forward: inconsistent parameter shapes");
  }
  Matrix h = matmul(X, p.w1);
  for (std::size_t r = 0; r < h.rows(); ++r)
    for (std::size_t c = 0; c < h.cols(); ++c) {
      const double v = h(r, c) + p.b1(0, c);
      h(r, c) = v > 0.0 ? v : 0.0;
    }
  Matrix out = matmul(h, p.w2);
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += p.b2(0, c);
  return out;
}

inline Matrix clamp_weights(Matrix W, double lo, double hi) {
  for (double& w : W.data()) w = std::min(hi, std::max(lo, w));
  return W;
}

/// Discretisation penalty (1/(I*O)) * sum min(|w|, 1 - |w|).
inline double reg_penalty(const Matrix& W) {
  if (W.empty()) return 0.0;
  double acc = 0.0;
  for (double w : W.data()) {
    const double a = std::fabs(w);
    acc += std::min(a, 1.0 - a);
  }
  return acc / static_cast<double>(W.size());
}

/// Regularisation strength: ramps linearly from 0 at `start` to lambda_hat at
/// `end` and stays there.
inline double reg_lambda(long iteration, double lambda_hat, long start, long end) {
  if (!(start < end)) throw std::invalid_argument("reg_lambda: start must be below end");
  const double t = static_cast<double>(iteration - start) / static_cast<double>(end - start);
  return lambda_hat * std::max(std::min(t, 1.0), 0.0);
}

// ---------------------------------------------------------------------------
// Initialisation

/// NMU weights ~ U[0.25, 0.75].
inline Matrix init_nmu_weights(std::size_t in, std::size_t out, Rng& rng) {
  Matrix W(in, out);
  for (double& w : W.data()) w = rng.uniform(0.25, 0.75);
  return W;
}

/// Fan-based U[-r, r] with r = sqrt(6 / (in + out)); used by NAU and MLP.
inline Matrix init_fan_uniform(std::size_t in, std::size_t out, Rng& rng) {
  const double r = std::sqrt(6.0 / static_cast<double>(in + out));
  Matrix W(in, out);
  for (double& w : W.data()) w = rng.uniform(-r, r);
  return W;
}

inline MlpParams init_mlp(std::size_t in, std::size_t width, Rng& rng) {
  MlpParams p;
  p.w1 = init_fan_uniform(in, width, rng);
  p.b1 = Matrix(1, width, 0.0);
  p.w2 = init_fan_uniform(width, 1, rng);
  p.b2 = Matrix(1, 1, 0.0);
  return p;
}

// ---------------------------------------------------------------------------
// Graph builders. They record the same arithmetic as the plain forwards so
// the two agree bit for bit on identical inputs.

inline NodeId nau_node(Tape& t, NodeId x, NodeId w) { return t.matmul(x, w, "nau"); }

inline NodeId nmu_node(Tape& t, NodeId x, NodeId w, std::size_t out_size) {
  std::vector<NodeId> outs;
  outs.reserve(out_size);
  for (std::size_t o = 0; o < out_size; ++o) {
    const NodeId wo = t.transpose(t.column(w, o));  // 1 x I
    const NodeId factors = t.add(t.mul(x, wo), t.scalar_sub(1.0, wo), "nmu.factors");
    outs.push_back(t.prod_cols(factors, "nmu.out"));
  }
  return out_size == 1 ? outs.front() : t.concat_cols(std::move(outs));
}

/// Training-mode stochastic NMU; `noise` has the shape of `x`.
inline NodeId snmu_node(Tape& t, NodeId x, NodeId w, NodeId noise, std::size_t out_size) {
  const NodeId noisy = t.mul(noise, x, "snmu.noisy_input");
  std::vector<NodeId> outs;
  outs.reserve(out_size);
  for (std::size_t o = 0; o < out_size; ++o) {
    const NodeId wo = t.transpose(t.column(w, o));
    const NodeId one_minus = t.scalar_sub(1.0, wo);
    const NodeId num = t.prod_cols(t.add(t.mul(noisy, wo), one_minus), "snmu.numerator");
    const NodeId den = t.prod_cols(t.add(t.mul(noise, wo), one_minus), "snmu.denominator");
    outs.push_back(t.div(num, den, "snmu.out"));
  }
  return out_size == 1 ? outs.front() : t.concat_cols(std::move(outs));
}

struct MlpNodes {
  NodeId w1, b1, w2, b2;
};

inline NodeId mlp_node(Tape& t, NodeId x, const MlpNodes& p) {
  const NodeId hidden = t.relu(t.add(t.matmul(x, p.w1), p.b1));
  return t.add(t.matmul(hidden, p.w2), p.b2, "mlp.out");
}

/// Scalar node for the discretisation penalty of W, using
/// min(a, 1 - a) = 0.5 - |a - 0.5|.
inline NodeId reg_penalty_node(Tape& t, NodeId w) {
  const NodeId a = t.abs(w);
  return t.mean(t.scalar_sub(0.5, t.abs(t.add_scalar(a, -0.5))));
}

}  // namespace nalm
