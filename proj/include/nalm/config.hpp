#pragma once

#include <cctype>
#include <charconv>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "nalm/io.hpp"
#include "nalm/model.hpp"
#include "nalm/tasks.hpp"
#include "nalm/trainer.hpp"

namespace nalm {

/// Raised for any malformed or inconsistent experiment configuration.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Preset { Paper, Desk };

inline std::string to_string(Preset p) { return p == Preset::Paper ? "paper" : "desk"; }
inline Preset parse_preset(const std::string& s) {
  if (s == "paper") return Preset::Paper;
  if (s == "desk") return Preset::Desk;
  throw ConfigError("unknown preset '" + s + "' (expected paper or desk)");
}

/// Training hyperparameters for a task at a preset scale. The single module
/// task is cheap enough that both presets use the full budget.
inline TrainConfig preset_train(TaskKind task, Preset preset) {
  if (task == TaskKind::Smt) return TrainConfig::smt();
  return preset == Preset::Paper ? TrainConfig::adt_paper() : TrainConfig::adt_desk();
}

/// [train] keys that override the preset.
struct TrainOverrides {
  std::optional<long> iterations, lambda_start, lambda_end, eval_every;
  std::optional<std::size_t> batch_size, val_samples, test_samples;
  std::optional<double> lr, lambda_hat;

  TrainConfig apply(TrainConfig c) const {
    if (iterations) c.iterations = *iterations;
    if (lambda_start) c.lambda_start = *lambda_start;
    if (lambda_end) c.lambda_end = *lambda_end;
    if (eval_every) c.eval_every = *eval_every;
    if (batch_size) c.batch_size = *batch_size;
    if (val_samples) c.val_samples = *val_samples;
    if (test_samples) c.test_samples = *test_samples;
    if (lr) c.lr = *lr;
    if (lambda_hat) c.lambda_hat = *lambda_hat;
    return c;
  }

  friend bool operator==(const TrainOverrides&, const TrainOverrides&) = default;
};

struct NamedRange {
  std::string name;
  RangeSet interp, extrap;
  friend bool operator==(const NamedRange&, const NamedRange&) = default;
};

/// An experiment: task, models, ranges, seeds and training overrides.
///
/// Text format (one `key = value` per line, `#` starts a comment):
///
///   [experiment]
///   name = smt-nmu            string
///   task = smt                smt | adt
///   preset = desk             paper | desk
///   seeds = 10                count (seeds 0..N-1) or a list [3, 5, 8]
///   ranges = all              all | whitespace-separated range names
///   input_size = 100          integer (adt)
///   subset_ratio = 0.25       float (adt)
///   overlap_ratio = 0.5       float (adt)
///   output_dir = results/x    path (optional)
///
///   [train]                   integer/float overrides of the preset
///   iterations lambda_start lambda_end eval_every batch_size
///   val_samples test_samples lr lambda_hat
///
///   [model NAME]              one section per model, in order
///   unit = nmu | snmu | stgnmu | mlp
///   noise = uniform 1 5 | batch | none     (snmu)
///   width = 100                            (mlp)
///   stg_lambda = 0.01                      (stgnmu)
///   grad_noise_eta = 0.3                   (optional, any unit)
///
///   [range NAME]              custom range pair usable in `ranges`
///   interp = [1,2)
///   extrap = [2,6) u [-6,-2)
struct ExperimentConfig {
  std::string name = "experiment";
  TaskSpec task;
  Preset preset = Preset::Desk;
  std::optional<std::size_t> seed_count = 1;
  std::vector<std::uint64_t> seed_list;  // used when seed_count is empty
  std::vector<std::string> ranges = {"all"};
  std::vector<NamedRange> custom_ranges;
  std::vector<ModelSpec> models;
  TrainOverrides train;
  std::string output_dir;

  std::vector<std::uint64_t> seeds() const {
    if (!seed_count) return seed_list;
    std::vector<std::uint64_t> out(*seed_count);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = i;
    return out;
  }

  TrainConfig train_config() const { return train.apply(preset_train(task.kind, preset)); }

  std::vector<ExtrapolationPair> resolve_ranges() const {
    std::vector<ExtrapolationPair> out;
    for (const auto& name : ranges) {
      if (name == "all") {
        for (auto& p : builtin_ranges()) out.push_back(p);
        continue;
      }
      bool found = false;
      for (const auto& c : custom_ranges) {
        if (c.name == name) {
          out.emplace_back(c.interp, c.extrap);
          found = true;
          break;
        }
      }
      if (found) continue;
      try {
        out.push_back(find_builtin_range(name));
      } catch (const std::exception&) {
        throw ConfigError("unknown range '" + name + "'");
      }
    }
    return out;
  }

  /// Throws ConfigError unless every reference resolves and the resolved
  /// training configuration is valid.
  void validate() const {
    if (name.empty()) throw ConfigError("experiment name must not be empty");
    if (models.empty()) throw ConfigError("no [model ...] sections");
    std::set<std::string> model_names;
    for (const auto& m : models) {
      if (!model_names.insert(m.name).second) throw ConfigError("duplicate model '" + m.name + "'");
      if (m.name.find_first_of(" /\\") != std::string::npos) throw ConfigError("model name '" + m.name + "' has / or spaces");
      if (m.unit == UnitKind::Mlp && m.mlp_width == 0) throw ConfigError("model '" + m.name + "': width must be positive");
      if (m.grad_noise_eta && *m.grad_noise_eta < 0.0) throw ConfigError("model '" + m.name + "': negative grad_noise_eta");
      if (m.unit == UnitKind::Mlp && task.kind == TaskKind::Adt)
        throw ConfigError("model '" + m.name + "': the mlp baseline is only defined for the smt task");
    }
    if (seeds().empty()) throw ConfigError("no seeds");
    const auto pairs = resolve_ranges();
    if (pairs.empty()) throw ConfigError("no ranges");
    std::set<std::string> keys;
    for (const auto& p : pairs)
      if (!keys.insert(p.key()).second) throw ConfigError("two ranges share the interpolation range " + p.name());
    if (task.kind == TaskKind::Adt) {
      try {
        Rng probe(0);
        (void)gen_adt_spec(task.input_size, task.subset_ratio, task.overlap_ratio, probe);
      } catch (const std::exception& e) {
        throw ConfigError(e.what());
      }
    }
    try {
      train_config().validate();
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
  }

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

inline std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

template <class T>
T parse_number(const std::string& key, const std::string& v, int line) {
  T out{};
  const char* first = v.data();
  const char* last = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last) {
    throw ConfigError(fmt::format("line {}: '{}' expects a {} but got '{}'", line, key,
                                  std::is_floating_point_v<T> ? "number" : "non-negative integer", v));
  }
  return out;
}

}  // namespace detail

inline ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  cfg.models.clear();
  std::string section;
  std::string section_arg;
  ModelSpec* model = nullptr;
  NamedRange* range = nullptr;
  std::set<std::string> seen;  // "section|key" for duplicate detection

  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string s = detail::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw ConfigError(fmt::format("line {}: unterminated section header", line));
      const auto words = detail::split_ws(s.substr(1, s.size() - 2));
      if (words.empty()) throw ConfigError(fmt::format("line {}: empty section header", line));
      section = words[0];
      section_arg = words.size() > 1 ? words[1] : "";
      model = nullptr;
      range = nullptr;
      if (section == "model" || section == "range") {
        if (words.size() != 2) throw ConfigError(fmt::format("line {}: [{} NAME] needs exactly one name", line, section));
        if (section == "model") {
          cfg.models.push_back(ModelSpec{section_arg});
          model = &cfg.models.back();
        } else {
          cfg.custom_ranges.push_back(NamedRange{section_arg});
          range = &cfg.custom_ranges.back();
        }
      } else if ((section != "experiment" && section != "train") || words.size() != 1) {
        throw ConfigError(fmt::format("line {}: unknown section [{}]", line, s.substr(1, s.size() - 2)));
      }
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError(fmt::format("line {}: expected key = value", line));
    const std::string key = detail::trim(s.substr(0, eq));
    const std::string value = detail::trim(s.substr(eq + 1));
    if (section.empty()) throw ConfigError(fmt::format("line {}: '{}' outside of a section", line, key));
    if (!seen.insert(section + " " + section_arg + "|" + key).second)
      throw ConfigError(fmt::format("line {}: duplicate key '{}'", line, key));
    auto unknown = [&] { return ConfigError(fmt::format("line {}: unknown key '{}' in [{}]", line, key, section)); };
    try {
      if (section == "experiment") {
        if (key == "name") cfg.name = value;
        else if (key == "task") cfg.task.kind = parse_task(value);
        else if (key == "preset") cfg.preset = parse_preset(value);
        else if (key == "seeds") {
          if (!value.empty() && value.front() == '[') {
            if (value.back() != ']') throw ConfigError(fmt::format("line {}: unterminated seed list", line));
            std::string inner = value.substr(1, value.size() - 2);
            for (char& c : inner)
              if (c == ',') c = ' ';
            cfg.seed_count.reset();
            cfg.seed_list.clear();
            for (const auto& w : detail::split_ws(inner)) cfg.seed_list.push_back(detail::parse_number<std::uint64_t>(key, w, line));
          } else {
            cfg.seed_count = detail::parse_number<std::size_t>(key, value, line);
            cfg.seed_list.clear();
          }
        } else if (key == "ranges") cfg.ranges = detail::split_ws(value);
        else if (key == "input_size") cfg.task.input_size = detail::parse_number<std::size_t>(key, value, line);
        else if (key == "subset_ratio") cfg.task.subset_ratio = detail::parse_number<double>(key, value, line);
        else if (key == "overlap_ratio") cfg.task.overlap_ratio = detail::parse_number<double>(key, value, line);
        else if (key == "output_dir") cfg.output_dir = value;
        else throw unknown();
      } else if (section == "train") {
        auto& t = cfg.train;
        if (key == "iterations") t.iterations = detail::parse_number<long>(key, value, line);
        else if (key == "lambda_start") t.lambda_start = detail::parse_number<long>(key, value, line);
        else if (key == "lambda_end") t.lambda_end = detail::parse_number<long>(key, value, line);
        else if (key == "eval_every") t.eval_every = detail::parse_number<long>(key, value, line);
        else if (key == "batch_size") t.batch_size = detail::parse_number<std::size_t>(key, value, line);
        else if (key == "val_samples") t.val_samples = detail::parse_number<std::size_t>(key, value, line);
        else if (key == "test_samples") t.test_samples = detail::parse_number<std::size_t>(key, value, line);
        else if (key == "lr") t.lr = detail::parse_number<double>(key, value, line);
        else if (key == "lambda_hat") t.lambda_hat = detail::parse_number<double>(key, value, line);
        else throw unknown();
      } else if (model) {
        if (key == "unit") model->unit = parse_unit(value);
        else if (key == "noise") model->noise = NoiseConfig::parse(value);
        else if (key == "width") model->mlp_width = detail::parse_number<std::size_t>(key, value, line);
        else if (key == "stg_lambda") model->stg_lambda = detail::parse_number<double>(key, value, line);
        else if (key == "grad_noise_eta") model->grad_noise_eta = detail::parse_number<double>(key, value, line);
        else throw unknown();
      } else if (range) {
        if (key == "interp") range->interp = RangeSet::parse(value);
        else if (key == "extrap") range->extrap = RangeSet::parse(value);
        else throw unknown();
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(fmt::format("line {}: {}", line, e.what()));
    }
  }
  for (const auto& r : cfg.custom_ranges) {
    if (r.interp.parts.empty() || r.extrap.parts.empty())
      throw ConfigError("range '" + r.name + "' needs both interp and extrap");
    if (overlaps(r.interp, r.extrap)) throw ConfigError("range '" + r.name + "': interp and extrap overlap");
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return parse_config(text);
}

/// Canonical text form; parse_config(serialize_config(c)) == c.
inline std::string serialize_config(const ExperimentConfig& c) {
  std::string out = "[experiment]\n";
  out += fmt::format("name = {}\n", c.name);
  out += fmt::format("task = {}\n", to_string(c.task.kind));
  out += fmt::format("preset = {}\n", to_string(c.preset));
  if (c.seed_count) {
    out += fmt::format("seeds = {}\n", *c.seed_count);
  } else {
    out += "seeds = [";
    for (std::size_t i = 0; i < c.seed_list.size(); ++i) out += (i ? ", " : "") + std::to_string(c.seed_list[i]);
    out += "]\n";
  }
  std::string ranges;
  for (std::size_t i = 0; i < c.ranges.size(); ++i) ranges += (i ? " " : "") + c.ranges[i];
  out += fmt::format("ranges = {}\n", ranges);
  out += fmt::format("input_size = {}\n", c.task.input_size);
  out += fmt::format("subset_ratio = {}\n", fmt_num(c.task.subset_ratio));
  out += fmt::format("overlap_ratio = {}\n", fmt_num(c.task.overlap_ratio));
  if (!c.output_dir.empty()) out += fmt::format("output_dir = {}\n", c.output_dir);

  out += "\n[train]\n";
  const auto& t = c.train;
  if (t.iterations) out += fmt::format("iterations = {}\n", *t.iterations);
  if (t.lambda_start) out += fmt::format("lambda_start = {}\n", *t.lambda_start);
  if (t.lambda_end) out += fmt::format("lambda_end = {}\n", *t.lambda_end);
  if (t.eval_every) out += fmt::format("eval_every = {}\n", *t.eval_every);
  if (t.batch_size) out += fmt::format("batch_size = {}\n", *t.batch_size);
  if (t.val_samples) out += fmt::format("val_samples = {}\n", *t.val_samples);
  if (t.test_samples) out += fmt::format("test_samples = {}\n", *t.test_samples);
  if (t.lr) out += fmt::format("lr = {}\n", fmt_num(*t.lr));
  if (t.lambda_hat) out += fmt::format("lambda_hat = {}\n", fmt_num(*t.lambda_hat));

  for (const auto& m : c.models) {
    out += fmt::format("\n[model {}]\nunit = {}\n", m.name, to_string(m.unit));
    // Unit-specific fields are written even when unused so the round trip is exact.
    out += fmt::format("noise = {}\n", m.noise.to_string());
    out += fmt::format("width = {}\n", m.mlp_width);
    out += fmt::format("stg_lambda = {}\n", fmt_num(m.stg_lambda));
    if (m.grad_noise_eta) out += fmt::format("grad_noise_eta = {}\n", fmt_num(*m.grad_noise_eta));
  }
  for (const auto& r : c.custom_ranges) {
    out += fmt::format("\n[range {}]\ninterp = {}\nextrap = {}\n", r.name, r.interp.to_string(), r.extrap.to_string());
  }
  return out;
}

/// Hex FNV-1a of the canonical text (excluding output_dir, which does not
/// affect results).
inline std::string config_hash(ExperimentConfig c) {
  c.output_dir.clear();
  return fmt::format("{:016x}", fnv1a64(serialize_config(c)));
}

}  // namespace nalm
