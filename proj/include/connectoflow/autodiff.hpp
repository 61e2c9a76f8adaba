#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "connectoflow/matrix.hpp"

namespace connectoflow {

class Tape;
struct Parameter;

/// Handle to a node recorded on a Tape. Cheap to copy; valid until the tape is cleared.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  /// Accumulated ∂loss/∂value; all zeros until backward has reached this node.
  Matrix grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  double scalar() const;

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Adjoint storage handed to backward rules.
class AdjointSink {
 public:
  /// False for nodes no gradient can flow into (constants); rules may skip work.
  bool wants(Var v) const;
  /// Mutable adjoint of `v`, zero-initialized on first access.
  Matrix& at(Var v);

 private:
  friend class Tape;
  AdjointSink(Tape& tape, std::vector<Matrix>& adjoints) : tape_(tape), adjoints_(adjoints) {}
  Tape& tape_;
  std::vector<Matrix>& adjoints_;
};

using BackwardRule = std::function<void(const Matrix& adjoint, AdjointSink& sink)>;

/// Records a computation graph for one worker. Values are immutable once recorded.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  /// Free leaf that accumulates a gradient.
  Var variable(Matrix value);
  /// Leaf bound to a parameter; backward adds into Parameter::grad. One node per parameter per tape.
  Var param(Parameter& p);

  /// Record an op result. `parents` decide whether the node needs a gradient.
  Var record(const char* op, Matrix value, std::initializer_list<Var> parents, BackwardRule rule);
  Var record(const char* op, Matrix value, std::span<const Var> parents, BackwardRule rule);

  /// Reverse sweep from a 1×1 loss. Adds ∂loss/∂node into every reachable node's
  /// gradient and into bound parameters; repeated calls accumulate.
  void backward(Var loss);

  void clear();
  std::size_t size() const { return nodes_.size(); }

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  const Matrix& grad(std::size_t id) const { return nodes_[id].grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    BackwardRule rule;
    Parameter* param = nullptr;
    bool requires_grad = false;
    const char* op = "";
  };
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
};

// ---- Differentiable operations -------------------------------------------
// Binary elementwise ops require equal shapes unless stated otherwise.

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var neg(Var a);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var sigmoid(Var a);
Var tanh(Var a);
Var relu(Var a);
Var softplus(Var a);
/// Throws DomainError on any non-positive entry.
Var log(Var a);
Var exp(Var a);
Var square(Var a);
/// Elementwise power; throws DomainError on non-positive entries.
Var pow(Var a, double exponent);
/// Clamp with zero gradient outside [lo, hi].
Var clamp(Var a, double lo, double hi);

/// Sum of all entries → 1×1.
Var sum(Var a);
Var mean(Var a);
/// m×n → m×1.
Var row_sum(Var a);
/// m×n → 1×n.
Var col_max(Var a);
Var col_mean(Var a);
/// m×n plus 1×n row vector, broadcast over rows.
Var add_row(Var a, Var row);
/// m×n times m×1 column, broadcast over columns.
Var mul_col(Var a, Var col);
/// Column a (m×1) and column b (n×1) → m×n with entries a_i + b_j.
Var outer_sum(Var a, Var b);
Var transpose(Var a);
Var reshape(Var a, std::size_t rows, std::size_t cols);
Var concat_cols(Var a, Var b);
Var slice_cols(Var a, std::size_t start, std::size_t count);
/// Vertical concatenation; all parts share a column count.
Var stack_rows(std::span<const Var> parts);
/// Rows picked by index; index == npos yields a zero row.
Var gather_rows(Var a, std::span<const std::size_t> rows);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator-(Var a) { return neg(a); }
inline Var operator*(Var a, double s) { return scale(a, s); }
inline Var operator*(double s, Var a) { return scale(a, s); }

}  // namespace connectoflow
