#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "nalm/matrix.hpp"

namespace nalm {

using NodeId = std::size_t;

enum class Op : std::uint8_t {
  Input,
  Parameter,
  Constant,
  MatMul,
  Add,
  Sub,
  Mul,
  Div,
  AddScalar,
  MulScalar,
  ScalarSub,  // c - x
  Clamp,
  Relu,
  Abs,
  MinConst,
  MaxConst,
  SumAll,
  Mean,
  SumRows,   // R x C -> 1 x C
  SumCols,   // R x C -> R x 1
  ProdCols,  // R x C -> R x 1
  Transpose,
  Column,
  ConcatCols,
  NormalCdf,
};

inline std::string_view op_name(Op op) {
  switch (op) {
    case Op::Input: return "input";
    case Op::Parameter: return "parameter";
    case Op::Constant: return "constant";
    case Op::MatMul: return "matmul";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Div: return "div";
    case Op::AddScalar: return "add_scalar";
    case Op::MulScalar: return "mul_scalar";
    case Op::ScalarSub: return "scalar_sub";
    case Op::Clamp: return "clamp";
    case Op::Relu: return "relu";
    case Op::Abs: return "abs";
    case Op::MinConst: return "min_const";
    case Op::MaxConst: return "max_const";
    case Op::SumAll: return "sum";
    case Op::Mean: return "mean";
    case Op::SumRows: return "sum_rows";
    case Op::SumCols: return "sum_cols";
    case Op::ProdCols: return "prod_cols";
    case Op::Transpose: return "transpose";
    case Op::Column: return "column";
    case Op::ConcatCols: return "concat_cols";
    case Op::NormalCdf: return "normal_cdf";
  }
  return "?";
}

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct UnboundInputError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

using Bindings = std::map<std::string, Matrix, std::less<>>;
using Gradients = std::map<NodeId, Matrix>;

/// Standard normal CDF and density.
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
inline double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

/// Reverse-mode differentiation tape over a static graph.
///
/// The graph is recorded once with the builder methods; every node's
/// arguments precede it, so node ids are already a topological order.
/// `forward` evaluates the graph for the current input bindings and caches
/// every intermediate value; `backward` then returns d(loss)/d(parameter)
/// for every parameter node. Parameter values are owned by the tape and can
/// be updated in place between steps.
///
/// Elementwise binary ops broadcast along any dimension of size 1, so a
/// 1xC row or an Rx1 column or a 1x1 scalar combines with an RxC operand.
///
/// Not thread-safe; use one tape per thread.
class Tape {
 public:
  // -- leaves ---------------------------------------------------------------

  NodeId input(std::string name) { return push(Op::Input, {}, std::move(name)); }

  NodeId parameter(std::string name, Matrix init) {
    const NodeId id = push(Op::Parameter, {}, std::move(name));
    nodes_[id].value = std::move(init);
    parameters_.push_back(id);
    return id;
  }

  NodeId constant(Matrix value, std::string name = {}) {
    const NodeId id = push(Op::Constant, {}, std::move(name));
    nodes_[id].value = std::move(value);
    return id;
  }

  // -- ops ------------------------------------------------------------------

  NodeId matmul(NodeId a, NodeId b, std::string name = {}) { return push(Op::MatMul, {a, b}, std::move(name)); }
  NodeId add(NodeId a, NodeId b, std::string name = {}) { return push(Op::Add, {a, b}, std::move(name)); }
  NodeId sub(NodeId a, NodeId b, std::string name = {}) { return push(Op::Sub, {a, b}, std::move(name)); }
  NodeId mul(NodeId a, NodeId b, std::string name = {}) { return push(Op::Mul, {a, b}, std::move(name)); }
  NodeId div(NodeId a, NodeId b, std::string name = {}) { return push(Op::Div, {a, b}, std::move(name)); }

  NodeId add_scalar(NodeId a, double c) { return push(Op::AddScalar, {a}, {}, c); }
  NodeId mul_scalar(NodeId a, double c) { return push(Op::MulScalar, {a}, {}, c); }
  /// c - a
  NodeId scalar_sub(double c, NodeId a) { return push(Op::ScalarSub, {a}, {}, c); }

  /// Gradient passes where lo <= x <= hi, zero outside.
  NodeId clamp(NodeId a, double lo, double hi) { return push(Op::Clamp, {a}, {}, lo, hi); }
  NodeId relu(NodeId a) { return push(Op::Relu, {a}); }
  NodeId abs(NodeId a) { return push(Op::Abs, {a}); }
  NodeId min_const(NodeId a, double c) { return push(Op::MinConst, {a}, {}, c); }
  NodeId max_const(NodeId a, double c) { return push(Op::MaxConst, {a}, {}, c); }
  NodeId normal_cdf(NodeId a) { return push(Op::NormalCdf, {a}); }

  NodeId sum(NodeId a) { return push(Op::SumAll, {a}); }
  NodeId mean(NodeId a) { return push(Op::Mean, {a}); }
  NodeId sum_rows(NodeId a) { return push(Op::SumRows, {a}); }
  NodeId sum_cols(NodeId a) { return push(Op::SumCols, {a}); }
  NodeId prod_cols(NodeId a, std::string name = {}) { return push(Op::ProdCols, {a}, std::move(name)); }

  NodeId transpose(NodeId a) { return push(Op::Transpose, {a}); }
  NodeId column(NodeId a, std::size_t index) {
    const NodeId id = push(Op::Column, {a});
    nodes_[id].index = index;
    return id;
  }
  NodeId concat_cols(std::vector<NodeId> parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
    return push(Op::ConcatCols, std::move(parts));
  }

  // -- evaluation -----------------------------------------------------------

  void bind(NodeId id, Matrix value) {
    Node& n = node(id);
    if (n.op != Op::Input) throw std::invalid_argument("bind: node " + describe(id) + " is not an input");
    n.value = std::move(value);
    n.bound = true;
  }

  void bind(std::string_view name, Matrix value) { bind(find(name), std::move(value)); }

  /// Evaluates every node up to and including `output`.
  const Matrix& forward(NodeId output) {
    check_id(output);
    for (NodeId id = 0; id <= output; ++id) evaluate(id);
    evaluated_upto_ = output + 1;
    return nodes_[output].value;
  }

  const Matrix& forward(const Bindings& bindings, NodeId output) {
    for (const auto& [name, value] : bindings) bind(name, value);
    return forward(output);
  }

  /// d(loss)/d(p) for every parameter p. Parameters that do not reach the
  /// loss get an all-zero matrix.
  Gradients backward(NodeId loss) {
    check_id(loss);
    if (loss >= evaluated_upto_) {
      throw std::logic_error("backward: forward has not been run up to node " + describe(loss));
    }
    const Matrix& lv = nodes_[loss].value;
    if (lv.rows() != 1 || lv.cols() != 1) {
      throw ShapeError("backward: loss node " + describe(loss) + " is " + lv.shape() + ", expected 1x1");
    }
    grads_.resize(nodes_.size());
    has_grad_.assign(nodes_.size(), 0);
    grads_[loss].resize(1, 1, 1.0);
    has_grad_[loss] = 1;

    for (NodeId id = loss + 1; id-- > 0;) {
      if (!has_grad_[id]) continue;
      propagate(id);
    }

    Gradients out;
    for (NodeId p : parameters_) {
      if (p <= loss && has_grad_[p]) {
        out.emplace(p, grads_[p]);
      } else {
        const Matrix& v = nodes_[p].value;
        out.emplace(p, Matrix(v.rows(), v.cols(), 0.0));
      }
    }
    return out;
  }

  // -- access ---------------------------------------------------------------

  const Matrix& value(NodeId id) const { return nodes_.at(id).value; }

  Matrix& parameter_value(NodeId id) {
    Node& n = node(id);
    if (n.op != Op::Parameter) throw std::invalid_argument("node " + describe(id) + " is not a parameter");
    return n.value;
  }

  std::span<const NodeId> parameters() const { return parameters_; }

  NodeId find(std::string_view name) const {
    for (NodeId id = 0; id < nodes_.size(); ++id) {
      if (nodes_[id].name == name) return id;
    }
    throw std::invalid_argument("no node named '" + std::string(name) + "'");
  }

  const std::string& name(NodeId id) const { return nodes_.at(id).name; }
  Op op(NodeId id) const { return nodes_.at(id).op; }
  std::size_t size() const { return nodes_.size(); }

  std::string describe(NodeId id) const {
    if (id >= nodes_.size()) return std::to_string(id) + " (invalid)";
    const Node& n = nodes_[id];
    std::string s = std::to_string(id) + " (" + std::string(op_name(n.op));
    if (!n.name.empty()) s += " '" + n.name + "'";
    return s + ")";
  }

 private:
  struct Node {
    Op op = Op::Constant;
    std::vector<NodeId> args;
    double c0 = 0.0;
    double c1 = 0.0;
    std::size_t index = 0;
    std::string name;
    Matrix value;
    bool bound = false;
  };

  NodeId push(Op op, std::vector<NodeId> args, std::string name = {}, double c0 = 0.0, double c1 = 0.0) {
    const NodeId id = nodes_.size();
    for (NodeId a : args) {
      if (a >= id) throw std::invalid_argument("node argument " + std::to_string(a) + " does not exist yet");
    }
    Node n;
    n.op = op;
    n.args = std::move(args);
    n.c0 = c0;
    n.c1 = c1;
    n.name = std::move(name);
    nodes_.push_back(std::move(n));
    evaluated_upto_ = 0;
    return id;
  }

  Node& node(NodeId id) {
    check_id(id);
    return nodes_[id];
  }

  void check_id(NodeId id) const {
    if (id >= nodes_.size()) throw std::out_of_range("tape has no node " + std::to_string(id));
  }

  [[noreturn]] void shape_error(NodeId id, const std::string& detail) const {
    throw ShapeError("node " + describe(id) + ": " + detail);
  }

  // Broadcast shape of two operands, or a shape error naming `id`.
  std::pair<std::size_t, std::size_t> broadcast_shape(NodeId id, const Matrix& a, const Matrix& b) const {
    auto dim = [&](std::size_t x, std::size_t y) {
      if (x == y || y == 1) return x;
      if (x == 1) return y;
      shape_error(id, "incompatible shapes " + a.shape() + " and " + b.shape());
    };
    return {dim(a.rows(), b.rows()), dim(a.cols(), b.cols())};
  }

  template <class F>
  void binary(NodeId id, F f) {
    Node& n = nodes_[id];
    const Matrix& a = nodes_[n.args[0]].value;
    const Matrix& b = nodes_[n.args[1]].value;
    const auto [R, C] = broadcast_shape(id, a, b);
    n.value.resize(R, C);
    if (a.same_shape(b)) {
      for (std::size_t i = 0; i < a.size(); ++i) n.value[i] = f(a[i], b[i]);
      return;
    }
    const bool ar = a.rows() == 1, ac = a.cols() == 1, br = b.rows() == 1, bc = b.cols() == 1;
    for (std::size_t r = 0; r < R; ++r) {
      for (std::size_t c = 0; c < C; ++c) {
        n.value(r, c) = f(a(ar ? 0 : r, ac ? 0 : c), b(br ? 0 : r, bc ? 0 : c));
      }
    }
  }

  template <class F>
  void unary(NodeId id, F f) {
    Node& n = nodes_[id];
    const Matrix& a = nodes_[n.args[0]].value;
    n.value.resize(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) n.value[i] = f(a[i]);
  }

  void evaluate(NodeId id) {
    Node& n = nodes_[id];
    switch (n.op) {
      case Op::Input:
        if (!n.bound) throw UnboundInputError("unbound input '" + n.name + "' (node " + std::to_string(id) + ")");
        return;
      case Op::Parameter:
      case Op::Constant:
        return;
      case Op::MatMul: {
        const Matrix& a = nodes_[n.args[0]].value;
        const Matrix& b = nodes_[n.args[1]].value;
        if (a.cols() != b.rows()) shape_error(id, "cannot multiply " + a.shape() + " by " + b.shape());
        detail::gemm_into(a, b, n.value);
        return;
      }
      case Op::Add: binary(id, [](double x, double y) { return x + y; }); return;
      case Op::Sub: binary(id, [](double x, double y) { return x - y; }); return;
      case Op::Mul: binary(id, [](double x, double y) { return x * y; }); return;
      case Op::Div: binary(id, [](double x, double y) { return x / y; }); return;
      case Op::AddScalar: { const double c = n.c0; unary(id, [c](double x) { return x + c; }); return; }
      case Op::MulScalar: { const double c = n.c0; unary(id, [c](double x) { return x * c; }); return; }
      case Op::ScalarSub: { const double c = n.c0; unary(id, [c](double x) { return c - x; }); return; }
      case Op::Clamp: {
        const double lo = n.c0, hi = n.c1;
        unary(id, [lo, hi](double x) { return std::min(hi, std::max(lo, x)); });
        return;
      }
      case Op::Relu: unary(id, [](double x) { return x > 0.0 ? x : 0.0; }); return;
      case Op::Abs: unary(id, [](double x) { return std::fabs(x); }); return;
      case Op::MinConst: { const double c = n.c0; unary(id, [c](double x) { return std::min(x, c); }); return; }
      case Op::MaxConst: { const double c = n.c0; unary(id, [c](double x) { return std::max(x, c); }); return; }
      case Op::NormalCdf: unary(id, [](double x) { return nalm::normal_cdf(x); }); return;
      case Op::SumAll:
      case Op::Mean: {
        const Matrix& a = nodes_[n.args[0]].value;
        double acc = 0.0;
        for (double v : a.data()) acc += v;
        if (n.op == Op::Mean) acc /= static_cast<double>(a.size());
        n.value.resize(1, 1, acc);
        return;
      }
      case Op::SumRows: {
        const Matrix& a = nodes_[n.args[0]].value;
        n.value.resize(1, a.cols(), 0.0);
        for (std::size_t r = 0; r < a.rows(); ++r)
          for (std::size_t c = 0; c < a.cols(); ++c) n.value(0, c) += a(r, c);
        return;
      }
      case Op::SumCols: {
        const Matrix& a = nodes_[n.args[0]].value;
        n.value.resize(a.rows(), 1, 0.0);
        for (std::size_t r = 0; r < a.rows(); ++r)
          for (std::size_t c = 0; c < a.cols(); ++c) n.value(r, 0) += a(r, c);
        return;
      }
      case Op::ProdCols: {
        const Matrix& a = nodes_[n.args[0]].value;
        n.value.resize(a.rows(), 1);
        for (std::size_t r = 0; r < a.rows(); ++r) {
          double p = 1.0;
          for (std::size_t c = 0; c < a.cols(); ++c) p *= a(r, c);
          n.value(r, 0) = p;
        }
        return;
      }
      case Op::Transpose: {
        const Matrix& a = nodes_[n.args[0]].value;
        n.value.resize(a.cols(), a.rows());
        for (std::size_t r = 0; r < a.rows(); ++r)
          for (std::size_t c = 0; c < a.cols(); ++c) n.value(c, r) = a(r, c);
        return;
      }
      case Op::Column: {
        const Matrix& a = nodes_[n.args[0]].value;
        if (n.index >= a.cols()) {
          shape_error(id, "column " + std::to_string(n.index) + " out of range for " + a.shape());
        }
        n.value.resize(a.rows(), 1);
        for (std::size_t r = 0; r < a.rows(); ++r) n.value(r, 0) = a(r, n.index);
        return;
      }
      case Op::ConcatCols: {
        const std::size_t R = nodes_[n.args[0]].value.rows();
        std::size_t C = 0;
        for (NodeId a : n.args) {
          const Matrix& m = nodes_[a].value;
          if (m.rows() != R) shape_error(id, "row count mismatch " + std::to_string(R) + " vs " + m.shape());
          C += m.cols();
        }
        n.value.resize(R, C);
        std::size_t offset = 0;
        for (NodeId a : n.args) {
          const Matrix& m = nodes_[a].value;
          for (std::size_t r = 0; r < R; ++r)
            for (std::size_t c = 0; c < m.cols(); ++c) n.value(r, offset + c) = m(r, c);
          offset += m.cols();
        }
        return;
      }
    }
  }

  Matrix& grad_slot(NodeId target) {
    if (!has_grad_[target]) {
      const Matrix& v = nodes_[target].value;
      grads_[target].resize(v.rows(), v.cols(), 0.0);
      has_grad_[target] = 1;
    }
    return grads_[target];
  }

  // Adds f(r, c) for every cell of an R x C upstream shape into the target's
  // gradient, summing over dimensions the target was broadcast along.
  template <class F>
  void accumulate(NodeId target, std::size_t R, std::size_t C, F f) {
    if (nodes_[target].op == Op::Constant || nodes_[target].op == Op::Input) return;
    Matrix& g = grad_slot(target);
    if (g.rows() == R && g.cols() == C) {
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) g(r, c) += f(r, c);
      return;
    }
    const bool tr = g.rows() == 1, tc = g.cols() == 1;
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t c = 0; c < C; ++c) g(tr ? 0 : r, tc ? 0 : c) += f(r, c);
  }

  void propagate(NodeId id) {
    const Node& n = nodes_[id];
    const Matrix& g = grads_[id];
    const std::size_t R = g.rows(), C = g.cols();
    switch (n.op) {
      case Op::Input:
      case Op::Parameter:
      case Op::Constant:
        return;
      case Op::MatMul: {
        const NodeId ia = n.args[0], ib = n.args[1];
        const Matrix& a = nodes_[ia].value;
        const Matrix& b = nodes_[ib].value;
        const std::size_t K = a.cols();
        // Both products run with a contiguous inner loop over K.
        if (nodes_[ia].op != Op::Constant && nodes_[ia].op != Op::Input) {
          Matrix& ga = grad_slot(ia);
          scratch_.resize(K * C);
          for (std::size_t k = 0; k < K; ++k)
            for (std::size_t j = 0; j < C; ++j) scratch_[j * K + k] = b(k, j);
          for (std::size_t i = 0; i < R; ++i) {
            double* gar = ga.data().data() + i * K;
            for (std::size_t j = 0; j < C; ++j) {
              const double gij = g(i, j);
              const double* bj = scratch_.data() + j * K;
              for (std::size_t k = 0; k < K; ++k) gar[k] += gij * bj[k];
            }
          }
        }
        if (nodes_[ib].op != Op::Constant && nodes_[ib].op != Op::Input) {
          Matrix& gb = grad_slot(ib);
          scratch_.assign(K * C, 0.0);
          for (std::size_t i = 0; i < R; ++i) {
            const double* ar = a.data().data() + i * K;
            for (std::size_t j = 0; j < C; ++j) {
              const double gij = g(i, j);
              double* acc = scratch_.data() + j * K;
              for (std::size_t k = 0; k < K; ++k) acc[k] += ar[k] * gij;
            }
          }
          for (std::size_t k = 0; k < K; ++k)
            for (std::size_t j = 0; j < C; ++j) gb(k, j) += scratch_[j * K + k];
        }
        return;
      }
      case Op::Add:
      case Op::Sub:
      case Op::Mul:
      case Op::Div: {
        const NodeId ia = n.args[0], ib = n.args[1];
        const Matrix& a = nodes_[ia].value;
        const Matrix& b = nodes_[ib].value;
        const bool ar = a.rows() == 1, ac = a.cols() == 1, br = b.rows() == 1, bc = b.cols() == 1;
        auto A = [&](std::size_t r, std::size_t c) { return a(ar ? 0 : r, ac ? 0 : c); };
        auto B = [&](std::size_t r, std::size_t c) { return b(br ? 0 : r, bc ? 0 : c); };
        switch (n.op) {
          case Op::Add:
            accumulate(ia, R, C, [&](std::size_t r, std::size_t c) { return g(r, c); });
            accumulate(ib, R, C, [&](std::size_t r, std::size_t c) { return g(r, c); });
            break;
          case Op::Sub:
            accumulate(ia, R, C, [&](std::size_t r, std::size_t c) { return g(r, c); });
            accumulate(ib, R, C, [&](std::size_t r, std::size_t c) { return -g(r, c); });
            break;
          case Op::Mul:
            accumulate(ia, R, C, [&](std::size_t r, std::size_t c) { return g(r, c) * B(r, c); });
            accumulate(ib, R, C, [&](std::size_t r, std::size_t c) { return g(r, c) * A(r, c); });
            break;
          default: {
            accumulate(ia, R, C, [&](std::size_t r, std::size_t c) { return g(r, c) / B(r, c); });
            accumulate(ib, R, C, [&](std::size_t r, std::size_t c) {
              const double bv = B(r, c);
              return -g(r, c) * A(r, c) / (bv * bv);
            });
            break;
          }
        }
        return;
      }
      case Op::AddScalar:
        accumulate(n.args[0], R, C, [&](std::size_t r, std::size_t c) { return g(r, c); });
        return;
      case Op::MulScalar:
        accumulate(n.args[0], R, C, [&](std::size_t r, std::size_t c) { return g(r, c) * n.c0; });
        return;
      case Op::ScalarSub:
        accumulate(n.args[0], R, C, [&](std::size_t r, std::size_t c) { return -g(r, c); });
        return;
      case Op::Clamp: {
        const Matrix& a = nodes_[n.args[0]].value;
        accumulate(n.args[0], R, C, [&](std::size_t r, std::size_t c) {
          const double x = a(r, c);
          return (x >= n.c0 && x <= n.c1) ? g(r, c) : 0.0;
        });
        return;
      }
      case Op::Relu: {
        const Matrix& a = nodes_[n.args[0]].value;
        accumulate(n.args[0], R, C, [&](std::size_t r, std::size_t c) { return a(r, c) > 0.0 ? g(r, c) : 0.0; });
        return;
      }
      case Op::Abs: {
        const Matrix& a = nodes_[n.args[0]].value;
        accumulate(n.args[0], R, C, [&](std::size_t r, std::size_t c) {
          const double x = a(r, c);
          return x > 0.0 ? g(r, c) : (x < 0.0 ? -g(r, c) : 0.0);
        });
        return;
      }
      case Op::MinConst: {
        const Matrix& a = nodes_[n.args[0]].value;
        accumulate(n.args[0], R, C, [&](std::size_t r, std::size_t c) { return a(r, c) <= n.c0 ? g(r, c) : 0.0; });
        return;
      }
      case Op::MaxConst: {
        const Matrix& a = nodes_[n.args[0]].value;
        accumulate(n.args[0], R, C, [&](std::size_t r, std::size_t c) { return a(r, c) >= n.c0 ? g(r, c) : 0.0; });
        return;
      }
      case Op::NormalCdf: {
        const Matrix& a = nodes_[n.args[0]].value;
        accumulate(n.args[0], R, C, [&](std::size_t r, std::size_t c) { return g(r, c) * normal_pdf(a(r, c)); });
        return;
      }
      case Op::SumAll:
      case Op::Mean: {
        const Matrix& a = nodes_[n.args[0]].value;
        const double scale = n.op == Op::Mean ? g(0, 0) / static_cast<double>(a.size()) : g(0, 0);
        accumulate(n.args[0], a.rows(), a.cols(), [&](std::size_t, std::size_t) { return scale; });
        return;
      }
      case Op::SumRows: {
        const Matrix& a = nodes_[n.args[0]].value;
        accumulate(n.args[0], a.rows(), a.cols(), [&](std::size_t, std::size_t c) { return g(0, c); });
        return;
      }
      case Op::SumCols: {
        const Matrix& a = nodes_[n.args[0]].value;
        accumulate(n.args[0], a.rows(), a.cols(), [&](std::size_t r, std::size_t) { return g(r, 0); });
        return;
      }
      case Op::ProdCols: {
        const NodeId ia = n.args[0];
        if (nodes_[ia].op == Op::Constant || nodes_[ia].op == Op::Input) return;
        const Matrix& a = nodes_[ia].value;
        Matrix& ga = grad_slot(ia);
        const std::size_t K = a.cols();
        suffix_.resize(K + 1);
        for (std::size_t r = 0; r < a.rows(); ++r) {
          suffix_[K] = 1.0;
          for (std::size_t c = K; c-- > 0;) suffix_[c] = suffix_[c + 1] * a(r, c);
          double prefix = 1.0;
          for (std::size_t c = 0; c < K; ++c) {
            ga(r, c) += g(r, 0) * (prefix * suffix_[c + 1]);
            prefix *= a(r, c);
          }
        }
        return;
      }
      case Op::Transpose:
        accumulate(n.args[0], C, R, [&](std::size_t r, std::size_t c) { return g(c, r); });
        return;
      case Op::Column: {
        const NodeId ia = n.args[0];
        if (nodes_[ia].op == Op::Constant || nodes_[ia].op == Op::Input) return;
        Matrix& ga = grad_slot(ia);
        for (std::size_t r = 0; r < R; ++r) ga(r, n.index) += g(r, 0);
        return;
      }
      case Op::ConcatCols: {
        std::size_t offset = 0;
        for (NodeId a : n.args) {
          const std::size_t w = nodes_[a].value.cols();
          accumulate(a, R, w, [&](std::size_t r, std::size_t c) { return g(r, offset + c); });
          offset += w;
        }
        return;
      }
    }
  }

  std::vector<Node> nodes_;
  std::vector<NodeId> parameters_;
  std::vector<Matrix> grads_;
  std::vector<char> has_grad_;
  std::vector<double> suffix_;
  std::vector<double> scratch_;
  NodeId evaluated_upto_ = 0;
};

}  // namespace nalm
