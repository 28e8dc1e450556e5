#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pinnlab/errors.hpp"
#include "pinnlab/param.hpp"

namespace pinnlab {

using NodeId = int32_t;
inline constexpr NodeId kNoNode = -1;

enum class OpKind : uint8_t {
  Const,   // leaf, values live in the arena
  Param,   // read a slice of theta
  MatVec,  // y = W x, W a row-major (rows x cols) param slice
  Add, Sub, Mul, Div,  // elementwise, equal lengths
  Scale,   // y = imm * a
  AddImm,  // y = a + imm
  BMul,    // y = a * s, s a scalar node broadcast over a
  BAdd,    // y = a + s
  Unary,   // y = fn(a) elementwise
  Dot,     // scalar = a . b
  Sum,     // scalar = sum(a)
  Index,   // scalar = a[aux]
};

enum class UnaryFn : uint8_t { Tanh, Sin, Cos, Exp, Neg, Square, Sqrt, Recip };

/// Append-only record of primitive vector operations. Recording computes
/// values eagerly; replay() recomputes every node from the currently bound
/// parameter vector, so a fixed graph can be re-evaluated cheaply inside an
/// optimizer loop. gradient() runs one reverse sweep and accumulates into a
/// flat dL/dtheta array. Single-writer; no global state.
class Tape {
 public:
  explicit Tape(const ParamVector& theta)
      : params_(theta.data.data()), n_params_(theta.size()) {}
  Tape(const double* params, int64_t n) : params_(params), n_params_(n) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  int64_t num_params() const { return n_params_; }
  size_t size() const { return nodes_.size(); }

  /// Rebind the parameter vector (layout must be unchanged).
  void set_params(const double* params, int64_t n) {
    if (n != n_params_) throw UsageError("tape rebind with mismatched parameter count");
    params_ = params;
  }

  // ---- scopes (for diagnostics: which layer produced a non-finite) ----
  uint16_t scope(const std::string& name) {
    for (size_t i = 0; i < scopes_.size(); ++i)
      if (scopes_[i] == name) return static_cast<uint16_t>(i);
    scopes_.push_back(name);
    return static_cast<uint16_t>(scopes_.size() - 1);
  }
  void set_scope(uint16_t s) { current_scope_ = s; }
  void enter_scope(const std::string& name) { current_scope_ = scope(name); }
  void exit_scope() { current_scope_ = 0; }

  // ---- recording ----
  NodeId constant(std::span<const double> v) {
    Node n = make(OpKind::Const, static_cast<int>(v.size()));
    double* dst = &values_[n.val_off];
    for (size_t i = 0; i < v.size(); ++i) dst[i] = v[i];
    return push(n);
  }
  NodeId constant(double v) { return constant(std::span<const double>(&v, 1)); }
  NodeId zeros(int len) {
    Node n = make(OpKind::Const, len);
    for (int i = 0; i < len; ++i) values_[n.val_off + i] = 0.0;
    return push(n);
  }

  NodeId param(int64_t offset, int len) {
    check_param_range(offset, len);
    Node n = make(OpKind::Param, len);
    n.param_off = offset;
    return exec_push(n);
  }

  NodeId matvec(int64_t w_offset, int rows, int cols, NodeId x) {
    check_param_range(w_offset, int64_t(rows) * cols);
    if (node(x).len != cols) throw UsageError("matvec: x length != cols");
    Node n = make(OpKind::MatVec, rows);
    n.a = x;
    n.aux = cols;
    n.param_off = w_offset;
    return exec_push(n);
  }

  NodeId add(NodeId a, NodeId b) { return binary(OpKind::Add, a, b); }
  NodeId sub(NodeId a, NodeId b) { return binary(OpKind::Sub, a, b); }
  NodeId mul(NodeId a, NodeId b) { return binary(OpKind::Mul, a, b); }
  NodeId div (NodeId a, NodeId b) { return binary(OpKind::Div, a, b); }

  NodeId scale(NodeId a, double c) {
    Node n = make(OpKind::Scale, node(a).len);
    n.a = a;
    n.imm = c;
    return exec_push(n);
  }
  NodeId add_imm(NodeId a, double c) {
    Node n = make(OpKind::AddImm, node(a).len);
    n.a = a;
    n.imm = c;
    return exec_push(n);
  }

  NodeId bmul(NodeId a, NodeId s) { return broadcast(OpKind::BMul, a, s); }
  NodeId badd(NodeId a, NodeId s) { return broadcast(OpKind::BAdd, a, s); }

  NodeId unary(UnaryFn fn, NodeId a) {
    Node n = make(OpKind::Unary, node(a).len);
    n.a = a;
    n.fn = fn;
    return exec_push(n);
  }
  NodeId tanh(NodeId a) { return unary(UnaryFn::Tanh, a); }
  NodeId sin(NodeId a) { return unary(UnaryFn::Sin, a); }
  NodeId cos(NodeId a) { return unary(UnaryFn::Cos, a); }
  NodeId exp(NodeId a) { return unary(UnaryFn::Exp, a); }
  NodeId neg(NodeId a) { return unary(UnaryFn::Neg, a); }
  NodeId square(NodeId a) { return unary(UnaryFn::Square, a); }
  NodeId sqrt(NodeId a) { return unary(UnaryFn::Sqrt, a); }
  NodeId recip(NodeId a) { return unary(UnaryFn::Recip, a); }

  NodeId dot(NodeId a, NodeId b) {
    if (node(a).len != node(b).len) throw UsageError("dot: length mismatch");
    Node n = make(OpKind::Dot, 1);
    n.a = a;
    n.b = b;
    return exec_push(n);
  }
  NodeId sum(NodeId a) {
    Node n = make(OpKind::Sum, 1);
    n.a = a;
    return exec_push(n);
  }
  NodeId index(NodeId a, int i) {
    if (i < 0 || i >= node(a).len) throw UsageError("index out of range");
    Node n = make(OpKind::Index, 1);
    n.a = a;
    n.aux = i;
    return exec_push(n);
  }

  // ---- reading ----
  double value(NodeId id) const {
    const Node& n = node(id);
    if (n.len != 1) throw UsageError("value(): node is not scalar");
    return values_[n.val_off];
  }
  std::span<const double> values(NodeId id) const {
    const Node& n = node(id);
    return {&values_[n.val_off], static_cast<size_t>(n.len)};
  }

  /// Recompute every node from the bound parameters, in recording order.
  void replay() {
    for (size_t i = 0; i < nodes_.size(); ++i) exec(nodes_[i]);
  }

  /// Reverse sweep: d(out)/d(theta) accumulated into grad (which is zeroed
  /// first). out must be a scalar node recorded on this tape.
  void gradient(NodeId out, std::span<double> grad) {
    if (out < 0 || static_cast<size_t>(out) >= nodes_.size())
      throw UsageError("gradient(): scalar is not on this tape");
    if (node(out).len != 1) throw UsageError("gradient(): output is not scalar");
    if (grad.size() != static_cast<size_t>(n_params_))
      throw UsageError("gradient(): grad buffer size mismatch");
    adjoint_.assign(values_.size(), 0.0);
    for (auto& g : grad) g = 0.0;
    adjoint_[node(out).val_off] = 1.0;
    for (int32_t i = out; i >= 0; --i) backward(nodes_[i], grad);
  }
  std::vector<double> gradient(NodeId out) {
    std::vector<double> g(static_cast<size_t>(n_params_), 0.0);
    gradient(out, g);
    return g;
  }

  /// Scan recorded values for non-finites; throws NumericalError naming the
  /// scope (layer) of the first offending node. Called at operation
  /// boundaries in release builds; debug builds also check per primitive.
  void ensure_finite(const char* context) const {
    for (const Node& n : nodes_) {
      const double* v = &values_[n.val_off];
      for (int i = 0; i < n.len; ++i) {
        if (!std::isfinite(v[i])) {
          throw NumericalError(std::string("non-finite value in ") + context +
                               " at scope '" + scope_name(n.scope) + "'");
        }
      }
    }
  }

  const std::string& scope_name(uint16_t s) const {
    static const std::string unnamed = "(unscoped)";
    return s < scopes_.size() ? scopes_[s] : unnamed;
  }

 private:
  struct Node {
    OpKind op;
    UnaryFn fn = UnaryFn::Tanh;
    uint16_t scope = 0;
    NodeId a = kNoNode, b = kNoNode;
    int32_t len = 0;
    int32_t aux = 0;
    int64_t param_off = 0;
    double imm = 0.0;
    size_t val_off = 0;
  };

  const Node& node(NodeId id) const { return nodes_[static_cast<size_t>(id)]; }

  Node make(OpKind op, int len) {
    Node n;
    n.op = op;
    n.len = len;
    n.scope = current_scope_;
    n.val_off = values_.size();
    values_.resize(values_.size() + static_cast<size_t>(len));
    return n;
  }

  NodeId push(Node n) {
    nodes_.push_back(n);
    return static_cast<NodeId>(nodes_.size() - 1);
  }

  NodeId exec_push(Node n) {
    exec(n);
    nodes_.push_back(n);
#ifndef NDEBUG
    const double* v = &values_[n.val_off];
    for (int i = 0; i < n.len; ++i) {
      if (!std::isfinite(v[i]))
        throw NumericalError("non-finite value produced at scope '" +
                             scope_name(n.scope) + "'");
    }
#endif
    return static_cast<NodeId>(nodes_.size() - 1);
  }

  NodeId binary(OpKind op, NodeId a, NodeId b) {
    if (node(a).len != node(b).len) throw UsageError("elementwise op: length mismatch");
    Node n = make(op, node(a).len);
    n.a = a;
    n.b = b;
    return exec_push(n);
  }

  NodeId broadcast(OpKind op, NodeId a, NodeId s) {
    if (node(s).len != 1) throw UsageError("broadcast op: s is not scalar");
    Node n = make(op, node(a).len);
    n.a = a;
    n.b = s;
    return exec_push(n);
  }

  void check_param_range(int64_t off, int64_t len) const {
    if (off < 0 || off + len > n_params_)
      throw UsageError("parameter slice out of range");
  }

  void exec(const Node& n) {
    double* y = &values_[n.val_off];
    const double* a = n.a >= 0 ? &values_[node(n.a).val_off] : nullptr;
    const double* b = n.b >= 0 ? &values_[node(n.b).val_off] : nullptr;
    switch (n.op) {
      case OpKind::Const:
        break;
      case OpKind::Param: {
        const double* p = params_ + n.param_off;
        for (int i = 0; i < n.len; ++i) y[i] = p[i];
        break;
      }
      case OpKind::MatVec: {
        const double* __restrict w = params_ + n.param_off;
        const double* __restrict xv = a;
        const int cols = n.aux;
        for (int r = 0; r < n.len; ++r) {
          const double* __restrict wr = w + int64_t(r) * cols;
          double acc = 0.0;
          for (int c = 0; c < cols; ++c) acc += wr[c] * xv[c];
          y[r] = acc;
        }
        break;
      }
      case OpKind::Add: for (int i = 0; i < n.len; ++i) y[i] = a[i] + b[i]; break;
      case OpKind::Sub: for (int i = 0; i < n.len; ++i) y[i] = a[i] - b[i]; break;
      case OpKind::Mul: for (int i = 0; i < n.len; ++i) y[i] = a[i] * b[i]; break;
      case OpKind::Div: for (int i = 0; i < n.len; ++i) y[i] = a[i] / b[i]; break;
      case OpKind::Scale: for (int i = 0; i < n.len; ++i) y[i] = n.imm * a[i]; break;
      case OpKind::AddImm: for (int i = 0; i < n.len; ++i) y[i] = a[i] + n.imm; break;
      case OpKind::BMul: for (int i = 0; i < n.len; ++i) y[i] = a[i] * b[0]; break;
      case OpKind::BAdd: for (int i = 0; i < n.len; ++i) y[i] = a[i] + b[0]; break;
      case OpKind::Unary:
        switch (n.fn) {
          case UnaryFn::Tanh:   for (int i = 0; i < n.len; ++i) y[i] = std::tanh(a[i]); break;
          case UnaryFn::Sin:    for (int i = 0; i < n.len; ++i) y[i] = std::sin(a[i]); break;
          case UnaryFn::Cos:    for (int i = 0; i < n.len; ++i) y[i] = std::cos(a[i]); break;
          case UnaryFn::Exp:    for (int i = 0; i < n.len; ++i) y[i] = std::exp(a[i]); break;
          case UnaryFn::Neg:    for (int i = 0; i < n.len; ++i) y[i] = -a[i]; break;
          case UnaryFn::Square: for (int i = 0; i < n.len; ++i) y[i] = a[i] * a[i]; break;
          case UnaryFn::Sqrt:   for (int i = 0; i < n.len; ++i) y[i] = std::sqrt(a[i]); break;
          case UnaryFn::Recip:  for (int i = 0; i < n.len; ++i) y[i] = 1.0 / a[i]; break;
        }
        break;
      case OpKind::Dot: {
        double acc = 0.0;
        for (int i = 0; i < node(n.a).len; ++i) acc += a[i] * b[i];
        y[0] = acc;
        break;
      }
      case OpKind::Sum: {
        double acc = 0.0;
        for (int i = 0; i < node(n.a).len; ++i) acc += a[i];
        y[0] = acc;
        break;
      }
      case OpKind::Index:
        y[0] = a[n.aux];
        break;
    }
  }

  void backward(const Node& n, std::span<double> grad) {
    const double* adj = &adjoint_[n.val_off];
    double* aa = n.a >= 0 ? &adjoint_[node(n.a).val_off] : nullptr;
    double* ab = n.b >= 0 ? &adjoint_[node(n.b).val_off] : nullptr;
    const double* va = n.a >= 0 ? &values_[node(n.a).val_off] : nullptr;
    const double* vb = n.b >= 0 ? &values_[node(n.b).val_off] : nullptr;
    const double* vy = &values_[n.val_off];
    switch (n.op) {
      case OpKind::Const:
        break;
      case OpKind::Param: {
        double* g = grad.data() + n.param_off;
        for (int i = 0; i < n.len; ++i) g[i] += adj[i];
        break;
      }
      case OpKind::MatVec: {
        const double* __restrict w = params_ + n.param_off;
        double* __restrict gw = grad.data() + n.param_off;
        const double* __restrict xv = va;
        double* __restrict xa = aa;
        const int cols = n.aux;
        for (int r = 0; r < n.len; ++r) {
          const double ar = adj[r];
          if (ar == 0.0) continue;
          const double* __restrict wr = w + int64_t(r) * cols;
          double* __restrict gr = gw + int64_t(r) * cols;
          for (int c = 0; c < cols; ++c) {
            xa[c] += wr[c] * ar;
            gr[c] += xv[c] * ar;
          }
        }
        break;
      }
      case OpKind::Add:
        for (int i = 0; i < n.len; ++i) { aa[i] += adj[i]; ab[i] += adj[i]; }
        break;
      case OpKind::Sub:
        for (int i = 0; i < n.len; ++i) { aa[i] += adj[i]; ab[i] -= adj[i]; }
        break;
      case OpKind::Mul:
        for (int i = 0; i < n.len; ++i) { aa[i] += vb[i] * adj[i]; ab[i] += va[i] * adj[i]; }
        break;
      case OpKind::Div:
        for (int i = 0; i < n.len; ++i) {
          aa[i] += adj[i] / vb[i];
          ab[i] -= adj[i] * va[i] / (vb[i] * vb[i]);
        }
        break;
      case OpKind::Scale: for (int i = 0; i < n.len; ++i) aa[i] += n.imm * adj[i]; break;
      case OpKind::AddImm: for (int i = 0; i < n.len; ++i) aa[i] += adj[i]; break;
      case OpKind::BMul:
        for (int i = 0; i < n.len; ++i) {
          aa[i] += vb[0] * adj[i];
          ab[0] += va[i] * adj[i];
        }
        break;
      case OpKind::BAdd:
        for (int i = 0; i < n.len; ++i) { aa[i] += adj[i]; ab[0] += adj[i]; }
        break;
      case OpKind::Unary:
        switch (n.fn) {
          case UnaryFn::Tanh:
            for (int i = 0; i < n.len; ++i) aa[i] += (1.0 - vy[i] * vy[i]) * adj[i];
            break;
          case UnaryFn::Sin:
            for (int i = 0; i < n.len; ++i) aa[i] += std::cos(va[i]) * adj[i];
            break;
          case UnaryFn::Cos:
            for (int i = 0; i < n.len; ++i) aa[i] -= std::sin(va[i]) * adj[i];
            break;
          case UnaryFn::Exp:
            for (int i = 0; i < n.len; ++i) aa[i] += vy[i] * adj[i];
            break;
          case UnaryFn::Neg:
            for (int i = 0; i < n.len; ++i) aa[i] -= adj[i];
            break;
          case UnaryFn::Square:
            for (int i = 0; i < n.len; ++i) aa[i] += 2.0 * va[i] * adj[i];
            break;
          case UnaryFn::Sqrt:
            for (int i = 0; i < n.len; ++i) aa[i] += adj[i] / (2.0 * vy[i]);
            break;
          case UnaryFn::Recip:
            for (int i = 0; i < n.len; ++i) aa[i] -= vy[i] * vy[i] * adj[i];
            break;
        }
        break;
      case OpKind::Dot: {
        const double s = adj[0];
        if (s != 0.0)
          for (int i = 0; i < node(n.a).len; ++i) {
            aa[i] += vb[i] * s;
            ab[i] += va[i] * s;
          }
        break;
      }
      case OpKind::Sum: {
        const double s = adj[0];
        for (int i = 0; i < node(n.a).len; ++i) aa[i] += s;
        break;
      }
      case OpKind::Index:
        aa[n.aux] += adj[0];
        break;
    }
  }

  std::vector<Node> nodes_;
  std::vector<double> values_;
  std::vector<double> adjoint_;
  std::vector<std::string> scopes_ = {"(root)"};
  const double* params_;
  int64_t n_params_;
  uint16_t current_scope_ = 0;
};

}  // namespace pinnlab
