#pragma once

#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "nalm/layers.hpp"
#include "nalm/stochastic.hpp"
#include "nalm/tape.hpp"

namespace nalm {

enum class UnitKind { Nmu, Snmu, StgNmu, Mlp };

inline std::string to_string(UnitKind u) {
  switch (u) {
    case UnitKind::Nmu: return "nmu";
    case UnitKind::Snmu: return "snmu";
    case UnitKind::StgNmu: return "stgnmu";
    case UnitKind::Mlp: return "mlp";
  }
  return "nmu";
}

inline UnitKind parse_unit(const std::string& s) {
  if (s == "nmu") return UnitKind::Nmu;
  if (s == "snmu") return UnitKind::Snmu;
  if (s == "stgnmu") return UnitKind::StgNmu;
  if (s == "mlp") return UnitKind::Mlp;
  throw std::invalid_argument("unknown unit '" + s + "' (expected nmu, snmu, stgnmu or mlp)");
}

/// Declarative description of the multiplication model under test. On the
/// arithmetic dataset task the unit is stacked behind a 2-output NAU (except
/// for the MLP baseline, which consumes the raw input).
struct ModelSpec {
  std::string name = "nmu";
  UnitKind unit = UnitKind::Nmu;
  NoiseConfig noise;                     // snmu
  std::size_t mlp_width = 100;           // mlp
  double stg_lambda = 0.1;               // stgnmu
  std::optional<double> grad_noise_eta;  // any unit

  static ModelSpec nmu(std::string name = "nmu") { return {std::move(name), UnitKind::Nmu}; }
  static ModelSpec snmu(NoiseConfig noise, std::string name = "snmu") {
    ModelSpec s{std::move(name), UnitKind::Snmu};
    s.noise = noise;
    return s;
  }
  static ModelSpec stg(double lambda, std::string name = "stgnmu") {
    ModelSpec s{std::move(name), UnitKind::StgNmu};
    s.stg_lambda = lambda;
    return s;
  }
  static ModelSpec mlp(std::size_t width, std::string name = "mlp") {
    ModelSpec s{std::move(name), UnitKind::Mlp};
    s.mlp_width = width;
    return s;
  }

  /// Canonical one-line description, stable across runs.
  std::string describe() const {
    std::ostringstream os;
    os.precision(17);
    os << "unit=" << to_string(unit);
    if (unit == UnitKind::Snmu) os << ";noise=" << noise.to_string();
    if (unit == UnitKind::Mlp) os << ";width=" << mlp_width;
    if (unit == UnitKind::StgNmu) os << ";stg_lambda=" << stg_lambda;
    if (grad_noise_eta) os << ";grad_noise_eta=" << *grad_noise_eta;
    return os.str();
  }

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

using WeightMap = std::map<std::string, Matrix>;

/// MSE + lambda * sum of discretisation penalties (+ stg_lambda * sum Phi(mu/sigma)).
/// `lambda` is a 1x1 node so the schedule can change per step without
/// rebuilding the graph.
inline NodeId total_loss(Tape& t, NodeId pred, NodeId target, const std::vector<NodeId>& nalm_weights, NodeId lambda,
                         std::optional<std::pair<NodeId, double>> stg_term = std::nullopt) {
  const NodeId diff = t.sub(pred, target);
  NodeId loss = t.mean(t.mul(diff, diff));
  if (!nalm_weights.empty()) {
    NodeId reg = reg_penalty_node(t, nalm_weights.front());
    for (std::size_t k = 1; k < nalm_weights.size(); ++k) reg = t.add(reg, reg_penalty_node(t, nalm_weights[k]));
    loss = t.add(loss, t.mul(lambda, reg));
  }
  if (stg_term) {
    loss = t.add(loss, t.mul_scalar(stg_l0_node(t, stg_term->first, kStgSigma), stg_term->second));
  }
  return loss;
}

/// A model instance: parameters live on the training tape; inference uses the
/// plain forwards on the same values.
class Model {
 public:
  struct Nodes {
    NodeId x = 0, y = 0, lambda = 0;
    std::optional<NodeId> noise;       // snmu input noise
    std::optional<NodeId> gate_noise;  // stgnmu gate noise
    NodeId pred = 0, loss = 0;
  };

  Model(ModelSpec spec, std::size_t input_size, bool stacked, Rng& init_rng)
      : spec_(std::move(spec)), input_size_(input_size), stacked_(stacked && spec_.unit != UnitKind::Mlp) {
    Tape& t = tape_;
    nodes_.x = t.input("x");
    nodes_.y = t.input("y");
    nodes_.lambda = t.input("lambda");

    std::vector<NodeId> nalm;
    NodeId unit_in = nodes_.x;
    std::size_t unit_in_size = input_size;
    if (stacked_) {
      nau_ = t.parameter("nau.W", init_fan_uniform(input_size, 2, init_rng));
      unit_in = nau_node(t, nodes_.x, *nau_);
      unit_in_size = 2;
      nalm.push_back(*nau_);
    }

    std::optional<std::pair<NodeId, double>> stg_term;
    switch (spec_.unit) {
      case UnitKind::Nmu:
        unit_ = t.parameter("nmu.W", init_nmu_weights(unit_in_size, 1, init_rng));
        nodes_.pred = nmu_node(t, unit_in, *unit_, 1);
        nalm.push_back(*unit_);
        break;
      case UnitKind::Snmu:
        unit_ = t.parameter("snmu.W", init_nmu_weights(unit_in_size, 1, init_rng));
        nodes_.noise = t.input("noise");
        nodes_.pred = snmu_node(t, unit_in, *unit_, *nodes_.noise, 1);
        nalm.push_back(*unit_);
        break;
      case UnitKind::StgNmu: {
        unit_ = t.parameter("stg.mu", Matrix(unit_in_size, 1, kStgInitMean));
        nodes_.gate_noise = t.input("gate_noise");
        const NodeId w = stg_weight_node(t, *unit_, *nodes_.gate_noise);
        nodes_.pred = nmu_node(t, unit_in, w, 1);
        nalm.push_back(t.clamp(*unit_, 0.0, 1.0));
        stg_term = std::make_pair(*unit_, spec_.stg_lambda);
        break;
      }
      case UnitKind::Mlp: {
        MlpParams p = init_mlp(input_size, spec_.mlp_width, init_rng);
        mlp_ = MlpNodes{t.parameter("mlp.W1", std::move(p.w1)), t.parameter("mlp.b1", std::move(p.b1)),
                        t.parameter("mlp.W2", std::move(p.w2)), t.parameter("mlp.b2", std::move(p.b2))};
        nodes_.pred = mlp_node(t, nodes_.x, *mlp_);
        break;
      }
    }
    nodes_.loss = total_loss(t, nodes_.pred, nodes_.y, nalm, nodes_.lambda, stg_term);
  }

  const ModelSpec& spec() const { return spec_; }
  bool stacked() const { return stacked_; }
  std::size_t input_size() const { return input_size_; }
  std::size_t unit_input_size() const { return stacked_ ? 2 : input_size_; }
  Tape& tape() { return tape_; }
  const Tape& tape() const { return tape_; }
  const Nodes& nodes() const { return nodes_; }

  /// Weight matrix of the multiplication unit as used at inference time.
  Matrix unit_weights() const {
    if (!unit_) throw std::logic_error("model has no multiplication unit");
    Matrix W = tape_.value(*unit_);
    if (spec_.unit == UnitKind::StgNmu)
      for (double& w : W.data()) w = clamp01(w);
    return W;
  }

  /// Input seen by the multiplication unit (the NAU output when stacked).
  Matrix unit_input(const Matrix& X) const { return stacked_ ? nau_forward(X, tape_.value(*nau_)) : X; }

  /// Inference: sNMU acts as an NMU and gates use no noise.
  Matrix predict(const Matrix& X) const {
    if (spec_.unit == UnitKind::Mlp) {
      MlpParams p{tape_.value(mlp_->w1), tape_.value(mlp_->b1), tape_.value(mlp_->w2), tape_.value(mlp_->b2)};
      return mlp_forward(X, p);
    }
    return nmu_forward(unit_input(X), unit_weights());
  }

  /// Inference weights of every arithmetic module (empty for the MLP).
  std::vector<Matrix> nalm_weights() const {
    std::vector<Matrix> out;
    if (nau_) out.push_back(tape_.value(*nau_));
    if (unit_) out.push_back(unit_weights());
    return out;
  }

  WeightMap weights() const {
    WeightMap out;
    for (NodeId p : tape_.parameters()) out.emplace(tape_.name(p), tape_.value(p));
    return out;
  }

  void set_weights(const WeightMap& w) {
    for (NodeId p : tape_.parameters()) {
      const auto it = w.find(tape_.name(p));
      if (it == w.end()) throw std::invalid_argument("set_weights: missing '" + tape_.name(p) + "'");
      if (!it->second.same_shape(tape_.value(p))) {
        throw std::invalid_argument("set_weights: '" + tape_.name(p) + "' has shape " + it->second.shape() +
                                    ", expected " + tape_.value(p).shape());
      }
      tape_.parameter_value(p) = it->second;
    }
  }

  /// Post-step clamping: NAU to [-1, 1], NMU/sNMU to [0, 1].
  void clamp_parameters() {
    if (nau_) tape_.parameter_value(*nau_) = clamp_weights(std::move(tape_.parameter_value(*nau_)), -1.0, 1.0);
    if (unit_ && (spec_.unit == UnitKind::Nmu || spec_.unit == UnitKind::Snmu)) {
      tape_.parameter_value(*unit_) = clamp_weights(std::move(tape_.parameter_value(*unit_)), 0.0, 1.0);
    }
  }

 private:
  ModelSpec spec_;
  std::size_t input_size_;
  bool stacked_;
  Tape tape_;
  Nodes nodes_;
  std::optional<NodeId> nau_;
  std::optional<NodeId> unit_;
  std::optional<MlpNodes> mlp_;
};

}  // namespace nalm
