#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>

#include <fmt/format.h>
#include <json.hpp>

#include "nalm/metrics.hpp"
#include "nalm/trainer.hpp"

namespace nalm {

using nlohmann::json;

// Numbers -----------------------------------------------------------------------

/// JSON has no inf/nan, so non-finite values are written as strings.
inline json num_to_json(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

inline double num_from_json(const json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
  }
  throw std::runtime_error("expected a number, got " + j.dump());
}

/// 17 significant digits, which round-trips every double.
inline std::string fmt_num(double v) { return fmt::format("{:.17g}", v); }

// Files -----------------------------------------------------------------------

/// Writes via a temporary file in the same directory and renames it into
/// place, so readers never observe a partial file.
inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw std::runtime_error("cannot rename " + tmp.string() + ": " + ec.message());
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Value types -----------------------------------------------------------------

inline json to_json_value(const Matrix& m) {
  json data = json::array();
  for (double v : m.data()) data.push_back(num_to_json(v));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

inline Matrix matrix_from_json(const json& j) {
  Matrix m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
  const auto& data = j.at("data");
  if (data.size() != m.size()) throw std::runtime_error("matrix JSON: data length does not match shape");
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = num_from_json(data[i]);
  return m;
}

inline json to_json_value(const WeightMap& w) {
  json out = json::object();
  for (const auto& [k, v] : w) out[k] = to_json_value(v);
  return out;
}

inline WeightMap weights_from_json(const json& j) {
  WeightMap w;
  for (const auto& [k, v] : j.items()) w.emplace(k, matrix_from_json(v));
  return w;
}

inline json to_json_value(const ModelSpec& m) {
  json j = {{"name", m.name}, {"unit", to_string(m.unit)}};
  if (m.unit == UnitKind::Snmu) j["noise"] = m.noise.to_string();
  if (m.unit == UnitKind::Mlp) j["width"] = m.mlp_width;
  if (m.unit == UnitKind::StgNmu) j["stg_lambda"] = m.stg_lambda;
  if (m.grad_noise_eta) j["grad_noise_eta"] = *m.grad_noise_eta;
  return j;
}

inline ModelSpec model_from_json(const json& j) {
  ModelSpec m;
  m.name = j.at("name").get<std::string>();
  m.unit = parse_unit(j.at("unit").get<std::string>());
  if (j.contains("noise")) m.noise = NoiseConfig::parse(j.at("noise").get<std::string>());
  if (j.contains("width")) m.mlp_width = j.at("width").get<std::size_t>();
  if (j.contains("stg_lambda")) m.stg_lambda = j.at("stg_lambda").get<double>();
  if (j.contains("grad_noise_eta")) m.grad_noise_eta = j.at("grad_noise_eta").get<double>();
  return m;
}

inline json to_json_value(const TaskSpec& t) {
  return {{"kind", to_string(t.kind)},
          {"input_size", t.input_size},
          {"subset_ratio", t.subset_ratio},
          {"overlap_ratio", t.overlap_ratio}};
}

inline TaskSpec task_from_json(const json& j) {
  TaskSpec t;
  t.kind = parse_task(j.at("kind").get<std::string>());
  t.input_size = j.at("input_size").get<std::size_t>();
  t.subset_ratio = j.at("subset_ratio").get<double>();
  t.overlap_ratio = j.at("overlap_ratio").get<double>();
  return t;
}

inline json to_json_value(const AdtSpec& a) {
  return {{"input_size", a.input_size}, {"subset_len", a.subset_len}, {"s1", a.s1},          {"e1", a.e1},
          {"s2", a.s2},                 {"e2", a.e2},                 {"overlap_len", a.overlap_len}};
}

inline AdtSpec adt_from_json(const json& j) {
  AdtSpec a;
  a.input_size = j.at("input_size").get<std::size_t>();
  a.subset_len = j.at("subset_len").get<std::size_t>();
  a.s1 = j.at("s1").get<std::size_t>();
  a.e1 = j.at("e1").get<std::size_t>();
  a.s2 = j.at("s2").get<std::size_t>();
  a.e2 = j.at("e2").get<std::size_t>();
  a.overlap_len = j.at("overlap_len").get<std::size_t>();
  return a;
}

inline json to_json_value(const TrainConfig& c) {
  return {{"iterations", c.iterations},     {"batch_size", c.batch_size},     {"lr", c.lr},
          {"lambda_hat", c.lambda_hat},     {"lambda_start", c.lambda_start}, {"lambda_end", c.lambda_end},
          {"eval_every", c.eval_every},     {"seed", c.seed},                 {"val_samples", c.val_samples},
          {"test_samples", c.test_samples}};
}

inline json to_json_value(const RunRecord& r) {
  json evals = json::array();
  for (const auto& e : r.evals) {
    evals.push_back({e.iteration, num_to_json(e.train_loss), num_to_json(e.val_mse), num_to_json(e.extrap_mse),
                     num_to_json(e.sparsity), num_to_json(e.lambda)});
  }
  json j = {{"id", r.id},
            {"model", to_json_value(r.model)},
            {"task", to_json_value(r.task)},
            {"range", r.range},
            {"seed", r.seed},
            {"failed", r.failed},
            {"failure", r.failure},
            {"best",
             {{"iteration", r.best.iteration},
              {"val_mse", num_to_json(r.best.val_mse)},
              {"extrap_mse", num_to_json(r.best.extrap_mse)},
              {"sparsity", num_to_json(r.best.sparsity)},
              {"weights", to_json_value(r.best.weights)}}},
            {"final_weights", to_json_value(r.final_weights)},
            {"eval_columns", {"iteration", "train_loss", "val_mse", "extrap_mse", "sparsity", "lambda"}},
            {"evals", evals}};
  if (r.adt) j["adt"] = to_json_value(*r.adt);
  return j;
}

inline RunRecord run_from_json(const json& j) {
  RunRecord r;
  r.id = j.at("id").get<std::string>();
  r.model = model_from_json(j.at("model"));
  r.task = task_from_json(j.at("task"));
  r.range = j.at("range").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.failed = j.at("failed").get<bool>();
  r.failure = j.at("failure").get<std::string>();
  const auto& b = j.at("best");
  r.best.iteration = b.at("iteration").get<long>();
  r.best.val_mse = num_from_json(b.at("val_mse"));
  r.best.extrap_mse = num_from_json(b.at("extrap_mse"));
  r.best.sparsity = num_from_json(b.at("sparsity"));
  r.best.weights = weights_from_json(b.at("weights"));
  r.final_weights = weights_from_json(j.at("final_weights"));
  for (const auto& e : j.at("evals")) {
    r.evals.push_back({e.at(0).get<long>(), num_from_json(e.at(1)), num_from_json(e.at(2)), num_from_json(e.at(3)),
                       num_from_json(e.at(4)), num_from_json(e.at(5))});
  }
  if (j.contains("adt")) r.adt = adt_from_json(j.at("adt"));
  return r;
}

/// Per-eval time series with a fixed header.
inline std::string series_csv(const RunRecord& r) {
  std::string out = "iteration,train_loss,val_mse,extrap_mse,sparsity,lambda\n";
  for (const auto& e : r.evals) {
    out += fmt::format("{},{},{},{},{},{}\n", e.iteration, fmt_num(e.train_loss), fmt_num(e.val_mse),
                       fmt_num(e.extrap_mse), fmt_num(e.sparsity), fmt_num(e.lambda));
  }
  return out;
}

// Summaries -------------------------------------------------------------------

inline json interval_json(const std::optional<MeanInterval>& m) {
  if (!m) return nullptr;
  return {{"mean", num_to_json(m->mean)}, {"lo", num_to_json(m->lo)}, {"hi", num_to_json(m->hi)}};
}

inline std::optional<MeanInterval> interval_from_json(const json& j) {
  if (j.is_null()) return std::nullopt;
  return MeanInterval{num_from_json(j.at("mean")), num_from_json(j.at("lo")), num_from_json(j.at("hi"))};
}

inline json to_json_value(const SummaryRecord& s) {
  return {{"model", s.model},
          {"range", s.range},
          {"n_seeds", s.n_seeds},
          {"successes", s.successes},
          {"failed_runs", s.failed_runs},
          {"success_rate", num_to_json(s.success_rate)},
          {"success_ci", {num_to_json(s.success_ci.lo), num_to_json(s.success_ci.hi)}},
          {"convergence", interval_json(s.convergence)},
          {"best_iteration", interval_json(s.best_iteration)},
          {"sparsity", interval_json(s.sparsity)},
          {"interp_mse_mean", num_to_json(s.interp_mse_mean)},
          {"extrap_mse_mean", num_to_json(s.extrap_mse_mean)},
          {"threshold",
           {{"epsilon", s.threshold.epsilon},
            {"simulated_mse", num_to_json(s.threshold.simulated_mse)},
            {"n_sim", s.threshold.n_sim},
            {"seed", s.threshold.seed}}},
          {"seeds", s.seeds},
          {"config_hash", s.config_hash}};
}

inline SummaryRecord summary_from_json(const json& j) {
  SummaryRecord s;
  s.model = j.at("model").get<std::string>();
  s.range = j.at("range").get<std::string>();
  s.n_seeds = j.at("n_seeds").get<std::size_t>();
  s.successes = j.at("successes").get<std::size_t>();
  s.failed_runs = j.at("failed_runs").get<std::size_t>();
  s.success_rate = num_from_json(j.at("success_rate"));
  s.success_ci = {num_from_json(j.at("success_ci").at(0)), num_from_json(j.at("success_ci").at(1))};
  s.convergence = interval_from_json(j.at("convergence"));
  s.best_iteration = interval_from_json(j.at("best_iteration"));
  s.sparsity = interval_from_json(j.at("sparsity"));
  s.interp_mse_mean = num_from_json(j.at("interp_mse_mean"));
  s.extrap_mse_mean = num_from_json(j.at("extrap_mse_mean"));
  const auto& th = j.at("threshold");
  s.threshold = {th.at("epsilon").get<double>(), num_from_json(th.at("simulated_mse")),
                 th.at("n_sim").get<std::size_t>(), th.at("seed").get<std::uint64_t>()};
  s.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  s.config_hash = j.at("config_hash").get<std::string>();
  return s;
}

inline const char* kSummaryCsvHeader =
    "model,range,n_seeds,successes,failed_runs,success_rate,success_lo,success_hi,convergence_mean,convergence_lo,"
    "convergence_hi,best_iteration_mean,best_iteration_lo,best_iteration_hi,sparsity_mean,sparsity_lo,sparsity_hi,"
    "interp_mse_mean,extrap_mse_mean,threshold,threshold_epsilon,threshold_n_sim,threshold_seed,seeds,config_hash\n";

inline std::string summary_csv_row(const SummaryRecord& s) {
  auto iv = [](const std::optional<MeanInterval>& m) {
    return m ? fmt::format("{},{},{}", fmt_num(m->mean), fmt_num(m->lo), fmt_num(m->hi)) : std::string(",,");
  };
  std::string seeds;
  for (std::size_t i = 0; i < s.seeds.size(); ++i) seeds += (i ? " " : "") + std::to_string(s.seeds[i]);
  return fmt::format("{},\"{}\",{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},\"{}\",{}\n", s.model, s.range, s.n_seeds,
                     s.successes, s.failed_runs, fmt_num(s.success_rate), fmt_num(s.success_ci.lo),
                     fmt_num(s.success_ci.hi), iv(s.convergence), iv(s.best_iteration), iv(s.sparsity),
                     fmt_num(s.interp_mse_mean), fmt_num(s.extrap_mse_mean), fmt_num(s.threshold.simulated_mse),
                     fmt_num(s.threshold.epsilon), s.threshold.n_sim, s.threshold.seed, seeds, s.config_hash);
}

}  // namespace nalm
