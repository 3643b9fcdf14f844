#pragma once

#include <cmath>
#include <span>
#include <stdexcept>

#include "nalm/matrix.hpp"
#include "nalm/random.hpp"
#include "nalm/tape.hpp"

namespace nalm {

// Annealed gradient noise -----------------------------------------------------

struct GradNoiseConfig {
  double eta = 0.0;
  friend bool operator==(const GradNoiseConfig&, const GradNoiseConfig&) = default;
};

/// sigma^2_t = eta / (1 + t)^0.55. The training loop passes the iteration
/// index as t since the synthetic tasks have no epoch boundary.
inline double grad_noise_sigma2(long epoch, double eta) {
  return eta / std::pow(1.0 + static_cast<double>(epoch), 0.55);
}

inline Matrix apply_gradient_noise(Matrix grads, double sigma2, Rng& rng) {
  if (sigma2 < 0.0) throw std::invalid_argument("apply_gradient_noise: negative variance");
  if (sigma2 == 0.0) return grads;
  const double sd = std::sqrt(sigma2);
  for (double& g : grads.data()) g += rng.normal(0.0, sd);
  return grads;
}

// Stochastic gates --------------------------------------------------------------

inline constexpr double kStgSigma = 0.5;
inline constexpr double kStgInitMean = 0.5;

inline double clamp01(double v) { return std::max(0.0, std::min(1.0, v)); }

/// Gate weight for a given noise draw.
inline double stg_weight_with(double mu, double eps) { return clamp01(mu + eps); }

/// Training: clamp01(mu + eps) with eps ~ N(0, sigma^2), sigma = 0.5.
/// Inference: clamp01(mu).
inline double stg_weight(double mu, bool training, Rng& rng) {
  if (!training) return clamp01(mu);
  return stg_weight_with(mu, rng.normal(0.0, kStgSigma));
}

/// Expected number of open gates: sum_i Phi(mu_i / sigma).
inline double stg_l0_penalty(std::span<const double> mu, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("stg_l0_penalty: sigma must be positive");
  double acc = 0.0;
  for (double m : mu) acc += normal_cdf(m / sigma);
  return acc;
}

/// Gate-noise matrix of the same shape as the gate means.
inline Matrix sample_gate_noise(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix E(rows, cols);
  for (double& e : E.data()) e = rng.normal(0.0, kStgSigma);
  return E;
}

/// Graph node for the stochastic gate weights clamp01(mu + eps).
inline NodeId stg_weight_node(Tape& t, NodeId mu, NodeId eps) { return t.clamp(t.add(mu, eps), 0.0, 1.0); }

/// Graph node for sum Phi(mu / sigma).
inline NodeId stg_l0_node(Tape& t, NodeId mu, double sigma) {
  return t.sum(t.normal_cdf(t.mul_scalar(mu, 1.0 / sigma)));
}

}  // namespace nalm
