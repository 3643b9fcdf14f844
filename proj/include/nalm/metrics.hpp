#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "nalm/random.hpp"
#include "nalm/tasks.hpp"
#include "nalm/trainer.hpp"

namespace nalm {

inline constexpr double kDefaultEpsilon = 1e-5;
inline constexpr std::size_t kDefaultThresholdSamples = 1000000;
inline constexpr std::uint64_t kThresholdSeed = 20220913;
inline constexpr std::uint64_t kBootstrapSeed = 8675309;
inline constexpr std::size_t kBootstrapResamples = 10000;

struct Threshold {
  double epsilon = kDefaultEpsilon;
  double simulated_mse = 0.0;
  std::size_t n_sim = kDefaultThresholdSamples;
  std::uint64_t seed = kThresholdSeed;
};

/// MSE between x1*x2 and (x1*x2)(1-eps)^2 over n_sim samples from `range`.
inline double epsilon_perfect_mse_smt(const RangeSet& range, double epsilon, std::size_t n_sim, Rng& rng) {
  if (epsilon < 0.0) throw std::invalid_argument("epsilon_perfect_mse_smt: negative epsilon");
  if (n_sim == 0) throw std::invalid_argument("epsilon_perfect_mse_smt: n_sim must be positive");
  const double k = (1.0 - epsilon) * (1.0 - epsilon);
  double acc = 0.0;
  for (std::size_t s = 0; s < n_sim; ++s) {
    const double x1 = range.sample(rng), x2 = range.sample(rng);
    const double y = x1 * x2;
    const double d = y - y * k;
    acc += d * d;
  }
  return acc / static_cast<double>(n_sim);
}

/// Selection-layer weights of the eps-perfect model: 1-eps on selected
/// inputs, eps elsewhere.
inline Matrix epsilon_perfect_nau_weights(const AdtSpec& spec, double epsilon) {
  Matrix W(spec.input_size, 2, epsilon);
  for (std::size_t i = spec.s1; i < spec.e1; ++i) W(i, 0) = 1.0 - epsilon;
  for (std::size_t i = spec.s2; i < spec.e2; ++i) W(i, 1) = 1.0 - epsilon;
  return W;
}

inline double epsilon_perfect_mse_adt(const AdtSpec& spec, const RangeSet& range, double epsilon, std::size_t n_sim,
                                      Rng& rng) {
  if (epsilon < 0.0) throw std::invalid_argument("epsilon_perfect_mse_adt: negative epsilon");
  if (!spec.valid()) throw std::invalid_argument("epsilon_perfect_mse_adt: invalid subset specification");
  if (n_sim == 0) throw std::invalid_argument("epsilon_perfect_mse_adt: n_sim must be positive");
  std::vector<double> x(spec.input_size);
  double acc = 0.0;
  for (std::size_t s = 0; s < n_sim; ++s) {
    double total = 0.0, a = 0.0, b = 0.0;
    for (std::size_t i = 0; i < spec.input_size; ++i) {
      x[i] = range.sample(rng);
      total += x[i];
    }
    for (std::size_t i = spec.s1; i < spec.e1; ++i) a += x[i];
    for (std::size_t i = spec.s2; i < spec.e2; ++i) b += x[i];
    // z_k = (1-eps) * selected + eps * rest; NMU with weights 1 multiplies.
    const double z1 = (1.0 - epsilon) * a + epsilon * (total - a);
    const double z2 = (1.0 - epsilon) * b + epsilon * (total - b);
    const double d = a * b - z1 * z2;
    acc += d * d;
  }
  return acc / static_cast<double>(n_sim);
}

/// Threshold for a (task, range) cell. ADT uses the canonical slice layout
/// starting at input 0 since the MSE only depends on the slice lengths.
inline Threshold make_threshold(const TaskSpec& task, const ExtrapolationPair& pair, double epsilon = kDefaultEpsilon,
                                std::size_t n_sim = kDefaultThresholdSamples, std::uint64_t seed = kThresholdSeed) {
  Threshold th{epsilon, 0.0, n_sim, seed};
  Rng rng = Rng::stream(seed, "threshold:" + pair.extrap.to_string());
  if (task.kind == TaskKind::Smt) {
    th.simulated_mse = epsilon_perfect_mse_smt(pair.extrap, epsilon, n_sim, rng);
  } else {
    const auto len = static_cast<std::size_t>(std::llround(task.subset_ratio * static_cast<double>(task.input_size)));
    const auto overlap = static_cast<std::size_t>(std::floor(task.overlap_ratio * static_cast<double>(len)));
    AdtSpec spec{task.input_size, len, 0, len, len - overlap, 2 * len - overlap, overlap};
    th.simulated_mse = epsilon_perfect_mse_adt(spec, pair.extrap, epsilon, n_sim, rng);
  }
  return th;
}

/// Process-wide memo of make_threshold; the Monte Carlo is the slow part of
/// summarising a sweep.
inline Threshold cached_threshold(const TaskSpec& task, const ExtrapolationPair& pair) {
  static std::mutex mu;
  static std::map<std::string, Threshold> cache;
  const std::string key = fmt::format("{}|{}|{}|{}|{}", to_string(task.kind), task.input_size, task.subset_ratio,
                                      task.overlap_ratio, pair.extrap.to_string());
  {
    std::lock_guard lock(mu);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
  }
  Threshold th = make_threshold(task, pair);
  std::lock_guard lock(mu);
  cache.emplace(key, th);
  return th;
}

inline bool success(double extrap_mse, const Threshold& th) { return extrap_mse < th.simulated_mse; }

inline bool success(const RunRecord& run, const Threshold& th) {
  return !run.failed && success(run.best.extrap_mse, th);
}

/// First eval iteration below the threshold, for successful runs only.
inline std::optional<long> convergence_iteration(const RunRecord& run, const Threshold& th) {
  if (!success(run, th)) return std::nullopt;
  for (const auto& e : run.evals)
    if (success(e.extrap_mse, th)) return e.iteration;
  return std::nullopt;
}

inline double sparsity_error(std::span<const Matrix> weights) {
  if (weights.empty()) throw std::invalid_argument("sparsity_error: no weight matrices");
  double worst = 0.0;
  for (const Matrix& w : weights) worst = std::max(worst, max_abs_deviation(w));
  return worst;
}

// Confidence intervals --------------------------------------------------------

struct Interval {
  double lo = 0.0, hi = 0.0;
};

struct MeanInterval {
  double mean = 0.0, lo = 0.0, hi = 0.0;
};

inline double normal_quantile(double p) { return boost::math::quantile(boost::math::normal_distribution<double>(), p); }

/// Wilson score interval.
inline Interval binomial_ci(std::size_t successes, std::size_t trials, double level = 0.95) {
  if (trials == 0 || successes > trials) throw std::invalid_argument("binomial_ci: need 0 <= successes <= trials, trials >= 1");
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("binomial_ci: level must be in (0, 1)");
  const double z = normal_quantile(0.5 + level / 2.0);
  const double n = static_cast<double>(trials);
  const double p = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
  const double half = z / (1.0 + z2 / n) * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n));
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

namespace detail {

inline std::pair<double, double> mean_var(std::span<const double> xs) {
  double m = 0.0;
  for (double x : xs) m += x;
  m /= static_cast<double>(xs.size());
  double v = 0.0;
  for (double x : xs) v += (x - m) * (x - m);
  v /= static_cast<double>(xs.size() - 1);
  return {m, v};
}

inline double percentile(std::vector<double>& xs, double q) {
  std::sort(xs.begin(), xs.end());
  const double pos = q * static_cast<double>(xs.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(pos));
  const std::size_t j = std::min(i + 1, xs.size() - 1);
  const double f = pos - static_cast<double>(i);
  return xs[i] + f * (xs[j] - xs[i]);
}

/// Percentile interval of the mean of `n` draws from `draw`, over B resamples.
template <class Draw>
MeanInterval bootstrap_mean(double mean, std::size_t n, double level, Draw&& draw, Rng& rng) {
  std::vector<double> means(kBootstrapResamples);
  for (double& bm : means) {
    double acc = 0.0;
    for (std::size_t k = 0; k < n; ++k) acc += draw(rng);
    bm = acc / static_cast<double>(n);
  }
  const double a = (1.0 - level) / 2.0;
  const double lo = percentile(means, a);
  const double hi = percentile(means, 1.0 - a);
  return {mean, lo, hi};
}

}  // namespace detail

/// Gamma moment fit (k = m^2/v, theta = v/m) with a parametric bootstrap of
/// the mean.
inline MeanInterval gamma_ci(std::span<const double> samples, double level = 0.95,
                             std::uint64_t seed = kBootstrapSeed) {
  if (samples.empty()) throw std::invalid_argument("gamma_ci: no samples");
  for (double s : samples)
    if (!(s > 0.0)) throw std::invalid_argument("gamma_ci: samples must be positive");
  if (samples.size() < 2) return {samples[0], samples[0], samples[0]};
  const auto [m, v] = detail::mean_var(samples);
  if (!(v > 0.0)) return {m, m, m};
  const double k = m * m / v, theta = v / m;
  Rng rng(seed);
  return detail::bootstrap_mean(m, samples.size(), level, [&](Rng& r) { return r.gamma(k, theta); }, rng);
}

/// Beta moment fit with a parametric bootstrap of the mean. Values of exactly
/// 0 or 1 are nudged by 1e-9. If the sample variance is too large for a Beta
/// with that mean, the data are resampled directly instead.
inline MeanInterval beta_ci(std::span<const double> samples, double level = 0.95,
                            std::uint64_t seed = kBootstrapSeed) {
  if (samples.empty()) throw std::invalid_argument("beta_ci: no samples");
  std::vector<double> xs;
  xs.reserve(samples.size());
  for (double s : samples) {
    if (!(s >= 0.0 && s <= 1.0)) throw std::invalid_argument("beta_ci: samples must lie in [0, 1]");
    xs.push_back(std::clamp(s, 1e-9, 1.0 - 1e-9));
  }
  if (xs.size() < 2) return {xs[0], xs[0], xs[0]};
  const auto [m, v] = detail::mean_var(xs);
  if (!(v > 0.0)) return {m, m, m};
  Rng rng(seed);
  const double common = m * (1.0 - m) / v - 1.0;
  if (!(common > 0.0)) {
    return detail::bootstrap_mean(m, xs.size(), level, [&](Rng& r) { return xs[r.uniform_index(xs.size())]; }, rng);
  }
  const double a = m * common, b = (1.0 - m) * common;
  return detail::bootstrap_mean(
      m, xs.size(), level,
      [&](Rng& r) {
        const double g1 = r.gamma(a, 1.0), g2 = r.gamma(b, 1.0);
        return g1 / (g1 + g2);
      },
      rng);
}

// Summaries -------------------------------------------------------------------

struct SummaryRecord {
  std::string model;
  std::string range;
  std::size_t n_seeds = 0;
  std::size_t successes = 0;
  std::size_t failed_runs = 0;  // non-finite loss or exceptions
  double success_rate = 0.0;
  Interval success_ci;
  std::optional<MeanInterval> convergence;  // first solved iteration
  std::optional<MeanInterval> best_iteration;  // early-stopping checkpoint iteration
  std::optional<MeanInterval> sparsity;
  double interp_mse_mean = 0.0;
  double extrap_mse_mean = 0.0;
  Threshold threshold;
  std::vector<std::uint64_t> seeds;
  std::string config_hash;
};

inline constexpr const char* kCiMethod =
    "success: Wilson score; convergence: Gamma moment fit + parametric bootstrap; sparsity: Beta moment fit + "
    "parametric bootstrap; 10000 resamples, percentile method, level 0.95";

/// Aggregates the runs of one (model, range) cell. Convergence, best
/// iteration and sparsity are over successful runs only.
inline SummaryRecord summarize(const std::string& model, const std::string& range, std::span<const RunRecord> runs,
                               const Threshold& th, std::string config_hash = {}) {
  if (runs.empty()) throw std::invalid_argument("summarize: no runs");
  SummaryRecord s;
  s.model = model;
  s.range = range;
  s.n_seeds = runs.size();
  s.threshold = th;
  s.config_hash = std::move(config_hash);
  std::vector<double> conv, best_it, sparse;
  double interp = 0.0, extrap = 0.0;
  for (const auto& r : runs) {
    s.seeds.push_back(r.seed);
    if (r.failed) ++s.failed_runs;
    interp += r.best.val_mse;
    extrap += r.best.extrap_mse;
    if (!success(r, th)) continue;
    ++s.successes;
    conv.push_back(std::max(1e-9, static_cast<double>(*convergence_iteration(r, th))));
    best_it.push_back(std::max(1e-9, static_cast<double>(r.best.iteration)));
    if (std::isfinite(r.best.sparsity)) sparse.push_back(r.best.sparsity);
  }
  s.interp_mse_mean = interp / static_cast<double>(runs.size());
  s.extrap_mse_mean = extrap / static_cast<double>(runs.size());
  s.success_rate = static_cast<double>(s.successes) / static_cast<double>(s.n_seeds);
  s.success_ci = binomial_ci(s.successes, s.n_seeds);
  if (!conv.empty()) {
    s.convergence = gamma_ci(conv);
    s.best_iteration = gamma_ci(best_it);
  }
  if (!sparse.empty()) s.sparsity = beta_ci(sparse);
  return s;
}

}  // namespace nalm
