#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <fmt/format.h>

#include "nalm/model.hpp"
#include "nalm/random.hpp"
#include "nalm/stochastic.hpp"
#include "nalm/tasks.hpp"

namespace nalm {

struct TrainConfig {
  long iterations = 50000;
  std::size_t batch_size = 128;
  double lr = 1e-3;
  double lambda_hat = 10.0;
  long lambda_start = 20000;
  long lambda_end = 35000;
  long eval_every = 100;
  std::uint64_t seed = 0;
  std::size_t val_samples = 10000;
  std::size_t test_samples = 10000;

  static TrainConfig smt() { return {}; }
  static TrainConfig adt_paper() {
    TrainConfig c;
    c.iterations = 5000000;
    c.lambda_start = 1000000;
    c.lambda_end = 2000000;
    c.eval_every = 1000;
    return c;
  }
  /// ADT budget reduced to 2e5 iterations with the lambda ramp scaled alike.
  static TrainConfig adt_desk() {
    TrainConfig c = adt_paper();
    c.iterations = 200000;
    c.lambda_start = 40000;
    c.lambda_end = 80000;
    return c;
  }

  void validate() const {
    if (iterations <= 0) throw std::invalid_argument("train: iterations must be positive");
    if (batch_size == 0) throw std::invalid_argument("train: batch_size must be positive");
    if (!(lr > 0.0)) throw std::invalid_argument("train: lr must be positive");
    if (lambda_hat < 0.0) throw std::invalid_argument("train: lambda_hat must be non-negative");
    if (!(lambda_start >= 0 && lambda_start < lambda_end && lambda_end <= iterations)) {
      throw std::invalid_argument(fmt::format("train: need 0 <= lambda_start < lambda_end <= iterations (got {}, {}, {})",
                                              lambda_start, lambda_end, iterations));
    }
    if (eval_every <= 0 || iterations % eval_every != 0) {
      throw std::invalid_argument(
          fmt::format("train: eval_every ({}) must be positive and divide iterations ({})", eval_every, iterations));
    }
    if (val_samples == 0 || test_samples == 0) throw std::invalid_argument("train: empty evaluation set");
  }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct EvalPoint {
  long iteration = 0;
  double train_loss = 0.0;
  double val_mse = 0.0;
  double extrap_mse = 0.0;
  double sparsity = 0.0;
  double lambda = 0.0;
  friend bool operator==(const EvalPoint&, const EvalPoint&) = default;
};

/// Early-stopping checkpoint: the eval point with the lowest validation MSE.
struct Checkpoint {
  long iteration = -1;
  double val_mse = std::numeric_limits<double>::infinity();
  double extrap_mse = std::numeric_limits<double>::infinity();
  double sparsity = std::numeric_limits<double>::quiet_NaN();
  WeightMap weights;
  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

struct RunRecord {
  std::string id;
  ModelSpec model;
  TaskSpec task;
  std::string range;  // ExtrapolationPair::name()
  std::uint64_t seed = 0;
  std::optional<AdtSpec> adt;
  bool failed = false;
  std::string failure;
  std::vector<EvalPoint> evals;
  Checkpoint best;
  WeightMap final_weights;
};

inline std::string run_id(const std::string& model, const ExtrapolationPair& pair, std::uint64_t seed) {
  return fmt::format("{}__{}__s{}", model, pair.key(), seed);
}

inline double max_abs_deviation(const Matrix& m) {
  double worst = 0.0;
  for (double w : m.data()) worst = std::max(worst, std::min(std::fabs(w), 1.0 - std::fabs(w)));
  return worst;
}

// Adam ----------------------------------------------------------------------

struct AdamState {
  Matrix m, v;
  long step = 0;
};

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update applied in place.
inline void adam_step(Matrix& param, const Matrix& grad, AdamState& s, double lr, AdamParams hp = {}) {
  if (!param.same_shape(grad)) {
    throw std::invalid_argument("adam_step: gradient " + grad.shape() + " vs parameter " + param.shape());
  }
  if (s.step == 0) {
    s.m = Matrix(param.rows(), param.cols());
    s.v = Matrix(param.rows(), param.cols());
  }
  ++s.step;
  const double c1 = 1.0 - std::pow(hp.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(hp.beta2, static_cast<double>(s.step));
  auto p = param.data();
  const auto g = grad.data();
  auto m = s.m.data();
  auto v = s.v.data();
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * g[i];
    v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * g[i] * g[i];
    const double mhat = m[i] / c1;
    const double vhat = v[i] / c2;
    p[i] -= lr * mhat / (std::sqrt(vhat) + hp.eps);
  }
}

// Training loop -------------------------------------------------------------

namespace detail {

inline Batch make_batch(const TaskSpec& task, const std::optional<AdtSpec>& adt, const RangeSet& range,
                        std::size_t n, Rng& rng) {
  return task.kind == TaskKind::Smt ? gen_smt_batch(range, n, rng) : gen_adt_batch(*adt, range, n, rng);
}

inline double safe_mse(const Matrix& pred, const Matrix& y) {
  const double v = mse(pred, y);
  return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
}

}  // namespace detail

/// Trains one model on one range pair. Deterministic given config.seed: data,
/// initialisation, noise and evaluation sets use independent streams.
inline RunRecord train_run(const ModelSpec& spec, const TaskSpec& task, const ExtrapolationPair& pair,
                           const TrainConfig& cfg) {
  cfg.validate();
  RunRecord rec;
  rec.id = run_id(spec.name, pair, cfg.seed);
  rec.model = spec;
  rec.task = task;
  rec.range = pair.name();
  rec.seed = cfg.seed;

  Rng data_rng = Rng::stream(cfg.seed, "data");
  Rng init_rng = Rng::stream(cfg.seed, "init");
  Rng noise_rng = Rng::stream(cfg.seed, "noise");
  Rng grad_rng = Rng::stream(cfg.seed, "grad-noise");
  Rng val_rng = Rng::stream(cfg.seed, "valid");
  Rng test_rng = Rng::stream(cfg.seed, "test");

  if (task.kind == TaskKind::Adt) {
    Rng subset_rng = Rng::stream(cfg.seed, "subset");
    rec.adt = gen_adt_spec(task.input_size, task.subset_ratio, task.overlap_ratio, subset_rng);
  }

  Model model(spec, task.inputs(), task.kind == TaskKind::Adt, init_rng);
  Tape& t = model.tape();
  const auto& n = model.nodes();

  const Batch val = detail::make_batch(task, rec.adt, pair.interp, cfg.val_samples, val_rng);
  const Batch test = detail::make_batch(task, rec.adt, pair.extrap, cfg.test_samples, test_rng);

  std::vector<AdamState> adam(t.parameters().size());
  Matrix lambda_m(1, 1);

  for (long it = 0;; ++it) {
    Batch b = detail::make_batch(task, rec.adt, pair.interp, cfg.batch_size, data_rng);
    t.bind(n.x, std::move(b.X));
    t.bind(n.y, std::move(b.y));
    if (n.noise) {
      // Only the batch-statistic mode looks at the values of the unit input.
      const Matrix& X = t.value(n.x);
      const Matrix z = spec.noise.mode == NoiseConfig::Mode::BatchStat ? model.unit_input(X)
                                                                      : Matrix(X.rows(), model.unit_input_size());
      t.bind(*n.noise, sample_noise(spec.noise, z, noise_rng));
    }
    if (n.gate_noise) {
      const Matrix& mu = t.value(t.parameters().back());
      t.bind(*n.gate_noise, sample_gate_noise(mu.rows(), mu.cols(), noise_rng));
    }
    const double lam = reg_lambda(it, cfg.lambda_hat, cfg.lambda_start, cfg.lambda_end);
    lambda_m(0, 0) = lam;
    t.bind(n.lambda, lambda_m);

    const double loss = t.forward(n.loss).item();
    if (!std::isfinite(loss)) {
      rec.failed = true;
      rec.failure = fmt::format("non-finite training loss at iteration {}", it);
      break;
    }

    if (it % cfg.eval_every == 0) {
      EvalPoint e;
      e.iteration = it;
      e.train_loss = loss;
      e.val_mse = detail::safe_mse(model.predict(val.X), val.y);
      e.extrap_mse = detail::safe_mse(model.predict(test.X), test.y);
      double sp = 0.0;
      for (const Matrix& w : model.nalm_weights()) sp = std::max(sp, max_abs_deviation(w));
      e.sparsity = model.nalm_weights().empty() ? std::numeric_limits<double>::quiet_NaN() : sp;
      e.lambda = lam;
      rec.evals.push_back(e);
      if (e.val_mse < rec.best.val_mse) {
        rec.best.iteration = it;
        rec.best.val_mse = e.val_mse;
        rec.best.extrap_mse = e.extrap_mse;
        rec.best.sparsity = e.sparsity;
        rec.best.weights = model.weights();
      }
    }
    if (it == cfg.iterations) break;

    Gradients grads = t.backward(n.loss);
    const auto& params = t.parameters();
    const double sigma2 = spec.grad_noise_eta ? grad_noise_sigma2(it, *spec.grad_noise_eta) : 0.0;
    for (std::size_t k = 0; k < params.size(); ++k) {
      Matrix& g = grads.at(params[k]);
      if (sigma2 > 0.0) g = apply_gradient_noise(std::move(g), sigma2, grad_rng);
      adam_step(t.parameter_value(params[k]), g, adam[k], cfg.lr);
    }
    model.clamp_parameters();
  }
  rec.final_weights = model.weights();
  if (rec.best.iteration < 0 && rec.best.weights.empty()) rec.best.weights = rec.final_weights;
  return rec;
}

// Sweeps --------------------------------------------------------------------

/// Runs fn(0..n-1) on `workers` threads. Exceptions are rethrown after all
/// workers have joined (first one wins).
inline void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

struct SweepJob {
  ModelSpec model;
  ExtrapolationPair pair;
  std::uint64_t seed;
};

inline std::vector<SweepJob> sweep_jobs(const std::vector<ModelSpec>& models,
                                        const std::vector<ExtrapolationPair>& pairs,
                                        const std::vector<std::uint64_t>& seeds) {
  std::vector<SweepJob> jobs;
  for (const auto& m : models)
    for (const auto& p : pairs)
      for (std::uint64_t s : seeds) jobs.push_back({m, p, s});
  return jobs;
}

/// Executes a single job; exceptions become failed records.
inline RunRecord run_job(const SweepJob& job, const TaskSpec& task, TrainConfig cfg) {
  cfg.seed = job.seed;
  try {
    return train_run(job.model, task, job.pair, cfg);
  } catch (const std::exception& e) {
    RunRecord rec;
    rec.id = run_id(job.model.name, job.pair, job.seed);
    rec.model = job.model;
    rec.task = task;
    rec.range = job.pair.name();
    rec.seed = job.seed;
    rec.failed = true;
    rec.failure = e.what();
    return rec;
  }
}

/// Cartesian product models x pairs x seeds, returned in that order regardless
/// of worker count. `on_done` (if set) is called from worker threads.
inline std::vector<RunRecord> run_sweep(const std::vector<ModelSpec>& models,
                                        const std::vector<ExtrapolationPair>& pairs,
                                        const std::vector<std::uint64_t>& seeds, const TaskSpec& task,
                                        const TrainConfig& cfg, std::size_t workers = 1,
                                        const std::function<void(const RunRecord&)>& on_done = {}) {
  const auto jobs = sweep_jobs(models, pairs, seeds);
  std::vector<RunRecord> out(jobs.size());
  parallel_for(jobs.size(), workers, [&](std::size_t i) {
    out[i] = run_job(jobs[i], task, cfg);
    if (on_done) on_done(out[i]);
  });
  return out;
}

}  // namespace nalm
