#pragma once

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "nalm/matrix.hpp"
#include "nalm/random.hpp"

namespace nalm {

/// Half-open sampling interval [lo, hi).
struct RangeSpec {
  double lo = 0.0;
  double hi = 1.0;

  RangeSpec() = default;
  RangeSpec(double lo_, double hi_) : lo(lo_), hi(hi_) {
    if (!(lo < hi)) throw std::invalid_argument(fmt::format("RangeSpec: need lo < hi, got [{}, {})", lo, hi));
  }

  double width() const { return hi - lo; }
  bool contains(double v) const { return lo <= v && v < hi; }
  double sample(Rng& rng) const { return rng.uniform(lo, hi); }

  std::string to_string() const { return fmt::format("[{},{})", lo, hi); }

  friend bool operator==(const RangeSpec&, const RangeSpec&) = default;
};

/// Union of disjoint half-open intervals, sampled uniformly over the union.
struct RangeSet {
  std::vector<RangeSpec> parts;

  RangeSet() = default;
  RangeSet(RangeSpec r) : parts{r} {}  // NOLINT(google-explicit-constructor)
  RangeSet(std::initializer_list<RangeSpec> rs) : parts(rs) {}

  double width() const {
    double w = 0.0;
    for (const auto& p : parts) w += p.width();
    return w;
  }
  double lo() const {
    double v = INFINITY;
    for (const auto& p : parts) v = std::min(v, p.lo);
    return v;
  }
  double hi() const {
    double v = -INFINITY;
    for (const auto& p : parts) v = std::max(v, p.hi);
    return v;
  }
  bool contains(double v) const {
    for (const auto& p : parts)
      if (p.contains(v)) return true;
    return false;
  }

  /// Uniform over the union: one draw on [0, total width) is mapped through
  /// the parts in order, so each part is hit in proportion to its width.
  double sample(Rng& rng) const {
    if (parts.size() == 1) return parts.front().sample(rng);
    double u = rng.uniform01() * width();
    for (const auto& p : parts) {
      if (u < p.width()) {
        const double v = p.lo + u;
        return v < p.hi ? v : std::nextafter(p.hi, p.lo);
      }
      u -= p.width();
    }
    const RangeSpec& last = parts.back();
    return std::nextafter(last.hi, last.lo);
  }

  std::string to_string() const {
    std::string s;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      if (i) s += " u ";
      s += parts[i].to_string();
    }
    return s;
  }

  /// Parses "[lo,hi)" or a union "[a,b) u [c,d)".
  static RangeSet parse(const std::string& text) {
    RangeSet out;
    std::size_t pos = 0;
    while (true) {
      pos = text.find('[', pos);
      if (pos == std::string::npos) break;
      const std::size_t close = text.find(')', pos);
      if (close == std::string::npos) throw std::invalid_argument("range: missing ')' in '" + text + "'");
      const std::string body = text.substr(pos + 1, close - pos - 1);
      const std::size_t comma = body.find(',');
      if (comma == std::string::npos) throw std::invalid_argument("range: missing ',' in '" + text + "'");
      try {
        std::size_t used = 0;
        const std::string a = body.substr(0, comma), b = body.substr(comma + 1);
        const double lo = std::stod(a, &used);
        if (a.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument("junk");
        const double hi = std::stod(b, &used);
        if (b.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument("junk");
        out.parts.emplace_back(lo, hi);
      } catch (const std::logic_error&) {
        throw std::invalid_argument("range: bad interval '[" + body + ")'");
      }
      pos = close + 1;
    }
    if (out.parts.empty()) throw std::invalid_argument("range: no interval in '" + text + "'");
    return out;
  }

  friend bool operator==(const RangeSet&, const RangeSet&) = default;
};

inline bool overlaps(const RangeSet& a, const RangeSet& b) {
  for (const auto& p : a.parts)
    for (const auto& q : b.parts)
      if (p.lo < q.hi && q.lo < p.hi) return true;
  return false;
}

/// Training/validation range and the disjoint extrapolation (test) range.
struct ExtrapolationPair {
  RangeSet interp;
  RangeSet extrap;

  ExtrapolationPair() = default;
  ExtrapolationPair(RangeSet i, RangeSet e) : interp(std::move(i)), extrap(std::move(e)) {
    if (overlaps(interp, extrap)) {
      throw std::invalid_argument("ExtrapolationPair: " + interp.to_string() + " overlaps " + extrap.to_string());
    }
  }

  /// Display name, e.g. "U[1,2)".
  std::string name() const { return "U" + interp.to_string(); }

  /// Filesystem-safe key, e.g. "1_2" or "m1.2_m1.1".
  std::string key() const {
    std::string s;
    for (std::size_t i = 0; i < interp.parts.size(); ++i) {
      if (i) s += "__";
      s += fmt::format("{}_{}", interp.parts[i].lo, interp.parts[i].hi);
    }
    for (char& c : s)
      if (c == '-') c = 'm';
    return s;
  }

  friend bool operator==(const ExtrapolationPair&, const ExtrapolationPair&) = default;
};

/// The nine interpolation/extrapolation pairs used by both synthetic tasks.
inline std::vector<ExtrapolationPair> builtin_ranges() {
  return {
      {RangeSpec(-20, -10), RangeSpec(-40, -20)},
      {RangeSpec(-2, -1), RangeSpec(-6, -2)},
      {RangeSpec(-1.2, -1.1), RangeSpec(-6.1, -1.2)},
      {RangeSpec(-0.2, -0.1), RangeSpec(-2, -0.2)},
      {RangeSpec(-2, 2), RangeSet{RangeSpec(-6, -2), RangeSpec(2, 6)}},
      {RangeSpec(0.1, 0.2), RangeSpec(0.2, 2)},
      {RangeSpec(1, 2), RangeSpec(2, 6)},
      {RangeSpec(1.1, 1.2), RangeSpec(1.2, 6)},
      {RangeSpec(10, 20), RangeSpec(20, 40)},
  };
}

/// Looks a builtin pair up by interpolation range ("[1,2)", "U[1,2)" or key "1_2").
inline ExtrapolationPair find_builtin_range(const std::string& name) {
  for (const auto& p : builtin_ranges()) {
    if (name == p.name() || name == p.interp.to_string() || name == p.key()) return p;
  }
  throw std::invalid_argument("unknown range '" + name + "'");
}

// ---------------------------------------------------------------------------
// Single Module Task

struct Batch {
  Matrix X;
  Matrix y;
};

/// x1, x2 iid from the range; y = x1 * x2.
inline Batch gen_smt_batch(const RangeSet& range, std::size_t batch, Rng& rng) {
  if (batch == 0) throw std::invalid_argument("gen_smt_batch: empty batch");
  Batch b{Matrix(batch, 2), Matrix(batch, 1)};
  for (std::size_t r = 0; r < batch; ++r) {
    b.X(r, 0) = range.sample(rng);
    b.X(r, 1) = range.sample(rng);
    b.y(r, 0) = b.X(r, 0) * b.X(r, 1);
  }
  return b;
}

// ---------------------------------------------------------------------------
// Arithmetic Dataset Task

/// Two contiguous, overlapping input slices [s1,e1) and [s2,e2).
struct AdtSpec {
  std::size_t input_size = 100;
  std::size_t subset_len = 25;
  std::size_t s1 = 0, e1 = 25;
  std::size_t s2 = 13, e2 = 38;
  std::size_t overlap_len = 12;

  std::size_t intersection() const {
    const std::size_t lo = std::max(s1, s2), hi = std::min(e1, e2);
    return hi > lo ? hi - lo : 0;
  }

  bool valid() const {
    return s1 < e1 && e1 <= input_size && s2 < e2 && e2 <= input_size && e1 - s1 == subset_len &&
           e2 - s2 == subset_len && intersection() == overlap_len;
  }

  friend bool operator==(const AdtSpec&, const AdtSpec&) = default;
};

/// subset_len = round(subset_ratio * input_size), overlap_len =
/// floor(overlap_ratio * subset_len). s1 is uniform over the positions where
/// the second slice fits on at least one side; the second slice is then placed
/// overlapping the first by exactly overlap_len, on a side chosen uniformly
/// among those that fit.
inline AdtSpec gen_adt_spec(std::size_t input_size, double subset_ratio, double overlap_ratio, Rng& rng) {
  if (!(subset_ratio > 0.0 && subset_ratio <= 1.0) || !(overlap_ratio >= 0.0 && overlap_ratio <= 1.0)) {
    throw std::invalid_argument(fmt::format("gen_adt_spec: ratios out of range ({}, {})", subset_ratio, overlap_ratio));
  }
  const auto len = static_cast<std::size_t>(std::llround(subset_ratio * static_cast<double>(input_size)));
  const auto overlap = static_cast<std::size_t>(std::floor(overlap_ratio * static_cast<double>(len)));
  if (len == 0 || 2 * len - overlap > input_size) {
    throw std::invalid_argument(fmt::format("gen_adt_spec: infeasible subset {} / overlap {} for input size {}", len,
                                            overlap, input_size));
  }
  const std::size_t shift = len - overlap;  // offset between the two slices
  auto fits_right = [&](std::size_t s) { return s + shift + len <= input_size; };
  auto fits_left = [&](std::size_t s) { return s >= shift; };

  std::vector<std::size_t> starts;
  for (std::size_t s = 0; s + len <= input_size; ++s)
    if (fits_right(s) || fits_left(s)) starts.push_back(s);

  AdtSpec spec;
  spec.input_size = input_size;
  spec.subset_len = len;
  spec.overlap_len = overlap;
  spec.s1 = starts[rng.uniform_index(starts.size())];
  spec.e1 = spec.s1 + len;
  bool right = fits_right(spec.s1);
  if (right && fits_left(spec.s1)) right = rng.uniform01() < 0.5;
  spec.s2 = right ? spec.s1 + shift : spec.s1 - shift;
  spec.e2 = spec.s2 + len;
  return spec;
}

/// Inputs iid from the range; y = (sum X[s1:e1]) * (sum X[s2:e2]).
inline Batch gen_adt_batch(const AdtSpec& spec, const RangeSet& range, std::size_t batch, Rng& rng) {
  if (!spec.valid()) throw std::invalid_argument("gen_adt_batch: invalid subset specification");
  Batch b{Matrix(batch, spec.input_size), Matrix(batch, 1)};
  for (std::size_t r = 0; r < batch; ++r) {
    for (std::size_t i = 0; i < spec.input_size; ++i) b.X(r, i) = range.sample(rng);
    double a = 0.0, c = 0.0;
    for (std::size_t i = spec.s1; i < spec.e1; ++i) a += b.X(r, i);
    for (std::size_t i = spec.s2; i < spec.e2; ++i) c += b.X(r, i);
    b.y(r, 0) = a * c;
  }
  return b;
}

// ---------------------------------------------------------------------------

enum class TaskKind { Smt, Adt };

inline std::string to_string(TaskKind t) { return t == TaskKind::Smt ? "smt" : "adt"; }
inline TaskKind parse_task(const std::string& s) {
  if (s == "smt") return TaskKind::Smt;
  if (s == "adt") return TaskKind::Adt;
  throw std::invalid_argument("unknown task '" + s + "' (expected smt or adt)");
}

struct TaskSpec {
  TaskKind kind = TaskKind::Smt;
  std::size_t input_size = 100;  // ADT only
  double subset_ratio = 0.25;    // ADT only
  double overlap_ratio = 0.5;    // ADT only

  std::size_t inputs() const { return kind == TaskKind::Smt ? 2 : input_size; }

  friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

/// Writes a dataset as CSV with header x_0..x_{I-1},y.
inline void write_dataset_csv(const std::string& path, const Batch& data) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (std::size_t i = 0; i < data.X.cols(); ++i) out << "x_" << i << ',';
  out << "y\n";
  for (std::size_t r = 0; r < data.X.rows(); ++r) {
    for (std::size_t i = 0; i < data.X.cols(); ++i) out << fmt::format("{:.17g},", data.X(r, i));
    out << fmt::format("{:.17g}\n", data.y(r, 0));
  }
}

}  // namespace nalm
