#include "connectoflow/losses.hpp"

#include <algorithm>
#include <cmath>

#include "connectoflow/errors.hpp"

namespace connectoflow {

Var ce_loss(Var p, int y) {
  if (y != 0 && y != 1) throw DomainError("ce_loss: label must be 0 or 1");
  if (p.rows() != 1 || p.cols() != 1) throw ShapeError("ce_loss expects a 1×1 probability");
  Var q = clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
  if (y == 1) return neg(log(q));
  return neg(log(add_scalar(neg(q), 1.0)));
}

Var mi_loss(Var p_masked, int y) { return ce_loss(p_masked, y); }

// Fused so that an N×N edge mask costs one tape node instead of a chain of
// elementwise temporaries. Entries with zero support contribute nothing.
Var binary_entropy(Var p, const Matrix& support) {
  const Matrix& pv = p.value();
  const bool all = support.size() == 0;
  if (!all && !support.same_shape(pv)) throw ShapeError("binary_entropy: support shape differs");
  constexpr double lo = kProbabilityClamp, hi = 1.0 - kProbabilityClamp;
  double total = 0.0;
  for (std::size_t k = 0; k < pv.size(); ++k) {
    if (!all && support[k] == 0.0) continue;
    const double q = std::clamp(pv[k], lo, hi);
    total -= (q * std::log(q) + (1.0 - q) * std::log(1.0 - q)) * (all ? 1.0 : support[k]);
  }
  return p.tape().record("binary_entropy", Matrix(1, 1, total), {p},
                         [p, support, all](const Matrix& adj, AdjointSink& sink) {
                           const Matrix& pv = p.value();
                           Matrix& g = sink.at(p);
                           for (std::size_t k = 0; k < pv.size(); ++k) {
                             const double w = all ? 1.0 : support[k];
                             const double x = pv[k];
                             if (w == 0.0 || x < lo || x > hi) continue;
                             g[k] += adj[0] * w * std::log((1.0 - x) / x);
                           }
                         });
}

namespace {

Var masked_sum(Var p, const Matrix& support) {
  const Matrix& pv = p.value();
  if (!support.same_shape(pv)) throw ShapeError("sparsity: support shape differs");
  double total = 0.0;
  for (std::size_t k = 0; k < pv.size(); ++k) total += pv[k] * support[k];
  return p.tape().record("masked_sum", Matrix(1, 1, total), {p}, [p, support](const Matrix& adj, AdjointSink& sink) {
    Matrix& g = sink.at(p);
    for (std::size_t k = 0; k < g.size(); ++k) g[k] += adj[0] * support[k];
  });
}

Var subject_mean(Var px, std::span<const SubjectEdgeMasks> subjects, bool entropy) {
  Tape& tape = px.tape();
  Var px_term = entropy ? binary_entropy(px) : sum(px);
  if (subjects.empty()) return px_term;
  Var edges = tape.constant(Matrix(1, 1));
  for (const SubjectEdgeMasks& s : subjects) {
    if (s.pa.size() != s.support.size()) throw ShapeError("edge masks and supports differ in count");
    for (std::size_t t = 0; t < s.pa.size(); ++t) {
      Var term = entropy ? binary_entropy(s.pa[t], s.support[t]) : masked_sum(s.pa[t], s.support[t]);
      edges = edges + term;
    }
  }
  return px_term + scale(edges, 1.0 / static_cast<double>(subjects.size()));
}

}  // namespace

Var sparsity_loss(Var px, std::span<const SubjectEdgeMasks> subjects) { return subject_mean(px, subjects, false); }

Var entropy_loss(Var px, std::span<const SubjectEdgeMasks> subjects) { return subject_mean(px, subjects, true); }

Var total_loss(const LossComponents& parts, const LossWeights& w) {
  if (w.lambda1 < 0.0 || w.lambda2 < 0.0 || w.lambda3 < 0.0) throw ConfigError("loss weights must be nonnegative");
  Var total = parts.ce;
  if (w.lambda1 != 0.0) total = total + scale(parts.mi, w.lambda1);
  if (w.lambda2 != 0.0) total = total + scale(parts.sp, w.lambda2);
  if (w.lambda3 != 0.0) total = total + scale(parts.en, w.lambda3);
  return total;
}

}  // namespace connectoflow
