#include "connectoflow/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "connectoflow/errors.hpp"
#include "connectoflow/params.hpp"

namespace connectoflow {

const Matrix& Var::value() const { return tape_->value(id_); }

Matrix Var::grad() const {
  const Matrix& g = tape_->grad(id_);
  if (g.empty()) return Matrix(value().rows(), value().cols());
  return g;
}

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw ShapeError("scalar() on " + v.shape_string());
  return v[0];
}

bool AdjointSink::wants(Var v) const { return tape_.requires_grad(v.id()); }

Matrix& AdjointSink::at(Var v) {
  Matrix& adj = adjoints_[v.id()];
  if (adj.empty()) {
    const Matrix& value = tape_.value(v.id());
    adj = Matrix(value.rows(), value.cols());
  }
  return adj;
}

Var Tape::constant(Matrix value) {
  if (!value.all_finite()) throw DomainError("non-finite constant");
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false, "constant"});
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Matrix value) {
  if (!value.all_finite()) throw DomainError("non-finite variable");
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, true, "variable"});
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(Parameter& p) {
  auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end()) return Var(this, it->second);
  if (!p.value.all_finite()) throw DivergenceError("non-finite parameter " + p.name);
  nodes_.push_back(Node{p.value, {}, {}, &p, true, "param"});
  param_nodes_.emplace(&p, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(const char* op, Matrix value, std::initializer_list<Var> parents, BackwardRule rule) {
  return record(op, std::move(value), std::span<const Var>(parents.begin(), parents.size()), std::move(rule));
}

Var Tape::record(const char* op, Matrix value, std::span<const Var> parents, BackwardRule rule) {
  if (!value.all_finite()) throw DivergenceError(std::string("non-finite result in ") + op);
  bool needs = false;
  for (const Var& p : parents) {
    if (&p.tape() != this) throw ContractError(std::string(op) + ": operands recorded on different tapes");
    needs = needs || nodes_[p.id()].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(rule) : BackwardRule{}, nullptr, needs, op});
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(Var loss) {
  if (&loss.tape() != this) throw ContractError("backward: loss belongs to another tape");
  const Matrix& lv = nodes_[loss.id()].value;
  if (lv.rows() != 1 || lv.cols() != 1) throw ContractError("backward: loss must be 1x1, got " + lv.shape_string());

  std::vector<Matrix> adjoints(loss.id() + 1);
  adjoints[loss.id()] = Matrix(1, 1, 1.0);
  AdjointSink sink(*this, adjoints);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    if (adjoints[i].empty()) continue;
    Node& node = nodes_[i];
    if (node.rule) node.rule(adjoints[i], sink);
  }
  for (std::size_t i = 0; i < adjoints.size(); ++i) {
    Matrix& adj = adjoints[i];
    if (adj.empty() || !nodes_[i].requires_grad) continue;
    Node& node = nodes_[i];
    if (node.param) {
      if (node.param->grad.empty()) node.param->grad = Matrix(adj.rows(), adj.cols());
      node.param->grad += adj;
    }
    if (node.grad.empty()) node.grad = std::move(adj);
    else node.grad += adj;
  }
}

void Tape::clear() {
  nodes_.clear();
  param_nodes_.clear();
}

// ---- ops -----------------------------------------------------------------

namespace {

void require_same(const char* op, Var a, Var b) {
  if (!a.value().same_shape(b.value()))
    throw ShapeError(std::string(op) + ": shapes " + a.value().shape_string() + " and " + b.value().shape_string());
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Unary elementwise op whose derivative is expressed through (x, y).
template <typename F, typename DF>
Var unary(const char* op, Var a, F f, DF df) {
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  Tape& tape = a.tape();
  const std::size_t out_id = tape.size();
  return tape.record(op, std::move(y), {a}, [a, df, &tape, out_id](const Matrix& adj, AdjointSink& sink) {
    const Matrix& xv = a.value();
    const Matrix& yv = tape.value(out_id);
    Matrix& g = sink.at(a);
    for (std::size_t i = 0; i < xv.size(); ++i) g[i] += adj[i] * df(xv[i], yv[i]);
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  Matrix out = matmul(a.value(), b.value());
  return a.tape().record("matmul", std::move(out), {a, b}, [a, b](const Matrix& adj, AdjointSink& sink) {
    if (sink.wants(a)) matmul_nt_accumulate(adj, b.value(), sink.at(a));
    if (sink.wants(b)) matmul_tn_accumulate(a.value(), adj, sink.at(b));
  });
}

Var add(Var a, Var b) {
  require_same("add", a, b);
  return a.tape().record("add", a.value() + b.value(), {a, b}, [a, b](const Matrix& adj, AdjointSink& sink) {
    if (sink.wants(a)) sink.at(a) += adj;
    if (sink.wants(b)) sink.at(b) += adj;
  });
}

Var sub(Var a, Var b) {
  require_same("sub", a, b);
  return a.tape().record("sub", a.value() - b.value(), {a, b}, [a, b](const Matrix& adj, AdjointSink& sink) {
    if (sink.wants(a)) sink.at(a) += adj;
    if (sink.wants(b)) sink.at(b) -= adj;
  });
}

Var mul(Var a, Var b) {
  require_same("mul", a, b);
  return a.tape().record("mul", hadamard(a.value(), b.value()), {a, b},
                         [a, b](const Matrix& adj, AdjointSink& sink) {
                           if (sink.wants(a)) {
                             Matrix& g = sink.at(a);
                             const Matrix& bv = b.value();
                             for (std::size_t i = 0; i < g.size(); ++i) g[i] += adj[i] * bv[i];
                           }
                           if (sink.wants(b)) {
                             Matrix& g = sink.at(b);
                             const Matrix& av = a.value();
                             for (std::size_t i = 0; i < g.size(); ++i) g[i] += adj[i] * av[i];
                           }
                         });
}

Var neg(Var a) { return scale(a, -1.0); }

Var scale(Var a, double s) {
  return a.tape().record("scale", a.value() * s, {a}, [a, s](const Matrix& adj, AdjointSink& sink) {
    Matrix& g = sink.at(a);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * adj[i];
  });
}

Var add_scalar(Var a, double s) {
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += s;
  return a.tape().record("add_scalar", std::move(out), {a},
                         [a](const Matrix& adj, AdjointSink& sink) { sink.at(a) += adj; });
}

Var sigmoid(Var a) {
  return unary("sigmoid", a, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
  return unary("tanh", a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var relu(Var a) {
  return unary("relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var softplus(Var a) {
  return unary(
      "softplus", a, [](double x) { return std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0); },
      [](double x, double) { return stable_sigmoid(x); });
}

Var log(Var a) {
  for (double v : a.value().data())
    if (!(v > 0.0)) throw DomainError("log of non-positive entry " + format_double(v));
  return unary("log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var exp(Var a) {
  return unary("exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var square(Var a) {
  return unary("square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var pow(Var a, double exponent) {
  for (double v : a.value().data())
    if (!(v > 0.0)) throw DomainError("pow of non-positive entry " + format_double(v));
  return unary(
      "pow", a, [exponent](double x) { return std::pow(x, exponent); },
      [exponent](double x, double y) { return exponent * y / x; });
}

Var clamp(Var a, double lo, double hi) {
  return unary(
      "clamp", a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Var sum(Var a) {
  return a.tape().record("sum", Matrix(1, 1, a.value().sum()), {a}, [a](const Matrix& adj, AdjointSink& sink) {
    Matrix& g = sink.at(a);
    const double s = adj[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s;
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  if (n == 0) throw ShapeError("mean of empty matrix");
  return scale(sum(a), 1.0 / n);
}

Var row_sum(Var a) {
  const Matrix& x = a.value();
  Matrix out(x.rows(), 1);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double s = 0.0;
    for (double v : x.row(r)) s += v;
    out(r, 0) = s;
  }
  return a.tape().record("row_sum", std::move(out), {a}, [a](const Matrix& adj, AdjointSink& sink) {
    Matrix& g = sink.at(a);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) g(r, c) += adj(r, 0);
  });
}

Var col_max(Var a) {
  const Matrix& x = a.value();
  if (x.rows() == 0) throw ShapeError("col_max of empty matrix");
  Matrix out(1, x.cols());
  std::vector<std::size_t> arg(x.cols(), 0);
  for (std::size_t c = 0; c < x.cols(); ++c) {
    out(0, c) = x(0, c);
    for (std::size_t r = 1; r < x.rows(); ++r)
      if (x(r, c) > out(0, c)) {
        out(0, c) = x(r, c);
        arg[c] = r;
      }
  }
  return a.tape().record("col_max", std::move(out), {a}, [a, arg](const Matrix& adj, AdjointSink& sink) {
    Matrix& g = sink.at(a);
    for (std::size_t c = 0; c < arg.size(); ++c) g(arg[c], c) += adj(0, c);
  });
}

Var col_mean(Var a) {
  const Matrix& x = a.value();
  if (x.rows() == 0) throw ShapeError("col_mean of empty matrix");
  Matrix out(1, x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) out(0, c) += x(r, c);
  const double inv = 1.0 / static_cast<double>(x.rows());
  out *= inv;
  return a.tape().record("col_mean", std::move(out), {a}, [a, inv](const Matrix& adj, AdjointSink& sink) {
    Matrix& g = sink.at(a);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) g(r, c) += adj(0, c) * inv;
  });
}

Var add_row(Var a, Var row) {
  const Matrix& x = a.value();
  const Matrix& b = row.value();
  if (b.rows() != 1 || b.cols() != x.cols())
    throw ShapeError("add_row: shapes " + x.shape_string() + " and " + b.shape_string());
  Matrix out = x;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += b(0, c);
  return a.tape().record("add_row", std::move(out), {a, row}, [a, row](const Matrix& adj, AdjointSink& sink) {
    if (sink.wants(a)) sink.at(a) += adj;
    if (sink.wants(row)) {
      Matrix& g = sink.at(row);
      for (std::size_t r = 0; r < adj.rows(); ++r)
        for (std::size_t c = 0; c < adj.cols(); ++c) g(0, c) += adj(r, c);
    }
  });
}

Var mul_col(Var a, Var col) {
  const Matrix& x = a.value();
  const Matrix& s = col.value();
  if (s.cols() != 1 || s.rows() != x.rows())
    throw ShapeError("mul_col: shapes " + x.shape_string() + " and " + s.shape_string());
  Matrix out = x;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) *= s(r, 0);
  return a.tape().record("mul_col", std::move(out), {a, col}, [a, col](const Matrix& adj, AdjointSink& sink) {
    const Matrix& xv = a.value();
    const Matrix& sv = col.value();
    if (sink.wants(a)) {
      Matrix& g = sink.at(a);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) g(r, c) += adj(r, c) * sv(r, 0);
    }
    if (sink.wants(col)) {
      Matrix& g = sink.at(col);
      for (std::size_t r = 0; r < xv.rows(); ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < xv.cols(); ++c) s += adj(r, c) * xv(r, c);
        g(r, 0) += s;
      }
    }
  });
}

Var outer_sum(Var a, Var b) {
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != 1 || bv.cols() != 1)
    throw ShapeError("outer_sum: expected columns, got " + av.shape_string() + " and " + bv.shape_string());
  Matrix out(av.rows(), bv.rows());
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < bv.rows(); ++j) out(i, j) = av(i, 0) + bv(j, 0);
  return a.tape().record("outer_sum", std::move(out), {a, b}, [a, b](const Matrix& adj, AdjointSink& sink) {
    if (sink.wants(a)) {
      Matrix& g = sink.at(a);
      for (std::size_t i = 0; i < adj.rows(); ++i) {
        double s = 0.0;
        for (double v : adj.row(i)) s += v;
        g(i, 0) += s;
      }
    }
    if (sink.wants(b)) {
      Matrix& g = sink.at(b);
      for (std::size_t i = 0; i < adj.rows(); ++i)
        for (std::size_t j = 0; j < adj.cols(); ++j) g(j, 0) += adj(i, j);
    }
  });
}

Var transpose(Var a) {
  return a.tape().record("transpose", a.value().transposed(), {a}, [a](const Matrix& adj, AdjointSink& sink) {
    Matrix& g = sink.at(a);
    for (std::size_t r = 0; r < adj.rows(); ++r)
      for (std::size_t c = 0; c < adj.cols(); ++c) g(c, r) += adj(r, c);
  });
}

Var reshape(Var a, std::size_t rows, std::size_t cols) {
  return a.tape().record("reshape", a.value().reshaped(rows, cols), {a}, [a](const Matrix& adj, AdjointSink& sink) {
    Matrix& g = sink.at(a);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += adj[i];
  });
}

Var concat_cols(Var a, Var b) {
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.rows() != bv.rows())
    throw ShapeError("concat_cols: shapes " + av.shape_string() + " and " + bv.shape_string());
  const std::size_t ca = av.cols(), cb = bv.cols();
  Matrix out(av.rows(), ca + cb);
  for (std::size_t r = 0; r < av.rows(); ++r) {
    for (std::size_t c = 0; c < ca; ++c) out(r, c) = av(r, c);
    for (std::size_t c = 0; c < cb; ++c) out(r, ca + c) = bv(r, c);
  }
  return a.tape().record("concat_cols", std::move(out), {a, b}, [a, b, ca, cb](const Matrix& adj, AdjointSink& sink) {
    if (sink.wants(a)) {
      Matrix& g = sink.at(a);
      for (std::size_t r = 0; r < adj.rows(); ++r)
        for (std::size_t c = 0; c < ca; ++c) g(r, c) += adj(r, c);
    }
    if (sink.wants(b)) {
      Matrix& g = sink.at(b);
      for (std::size_t r = 0; r < adj.rows(); ++r)
        for (std::size_t c = 0; c < cb; ++c) g(r, c) += adj(r, ca + c);
    }
  });
}

Var stack_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("stack_rows: no parts");
  const std::size_t cols = parts.front().cols();
  std::size_t rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw ShapeError("stack_rows: column mismatch " + p.value().shape_string());
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::vector<std::size_t> offsets;
  std::size_t r0 = 0;
  for (const Var& p : parts) {
    offsets.push_back(r0);
    const auto src = p.value().data();
    std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(r0 * cols));
    r0 += p.rows();
  }
  std::vector<Var> copy(parts.begin(), parts.end());
  return parts.front().tape().record(
      "stack_rows", std::move(out), parts, [copy, offsets, cols](const Matrix& adj, AdjointSink& sink) {
        for (std::size_t k = 0; k < copy.size(); ++k) {
          if (!sink.wants(copy[k])) continue;
          Matrix& g = sink.at(copy[k]);
          const auto src = adj.data().subspan(offsets[k] * cols, g.size());
          for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] += src[i];
        }
      });
}

Var slice_cols(Var a, std::size_t start, std::size_t count) {
  const Matrix& x = a.value();
  if (start + count > x.cols()) throw ShapeError("slice_cols out of range on " + x.shape_string());
  Matrix out(x.rows(), count);
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < count; ++c) out(r, c) = x(r, start + c);
  return a.tape().record("slice_cols", std::move(out), {a}, [a, start, count](const Matrix& adj, AdjointSink& sink) {
    Matrix& g = sink.at(a);
    for (std::size_t r = 0; r < adj.rows(); ++r)
      for (std::size_t c = 0; c < count; ++c) g(r, start + c) += adj(r, c);
  });
}

Var gather_rows(Var a, std::span<const std::size_t> rows) {
  const Matrix& x = a.value();
  constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  Matrix out(idx.size(), x.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] == npos) continue;
    if (idx[r] >= x.rows()) throw ShapeError("gather_rows index out of range");
    for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) = x(idx[r], c);
  }
  return a.tape().record("gather_rows", std::move(out), {a}, [a, idx](const Matrix& adj, AdjointSink& sink) {
    Matrix& g = sink.at(a);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      if (idx[r] == npos) continue;
      for (std::size_t c = 0; c < adj.cols(); ++c) g(idx[r], c) += adj(r, c);
    }
  });
}

}  // namespace connectoflow
