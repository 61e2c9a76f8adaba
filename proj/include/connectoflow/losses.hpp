#pragma once

#include <span>
#include <vector>

#include "connectoflow/autodiff.hpp"

namespace connectoflow {

inline constexpr double kProbabilityClamp = 1e-7;

struct LossWeights {
  double lambda1 = 0.5;
  double lambda2 = 1e-3;
  double lambda3 = 1e-4;
};

/// −[y log p + (1−y) log(1−p)] with p clamped to [1e-7, 1−1e-7].
Var ce_loss(Var p, int y);

/// Cross-entropy of the prediction made from masked inputs.
Var mi_loss(Var p_masked, int y);

/// Σ −[p log p + (1−p) log(1−p)] over the entries of p where `support` is nonzero
/// (all entries when `support` is empty).
Var binary_entropy(Var p, const Matrix& support = Matrix());

/// Edge probabilities of one subject: one P_A per timepoint and the edges it applies to.
struct SubjectEdgeMasks {
  std::vector<Var> pa;
  std::vector<Matrix> support;
};

/// ‖P_X‖₁ + mean over subjects of Σ_t ‖P_A(t) on existing edges‖₁.
Var sparsity_loss(Var px, std::span<const SubjectEdgeMasks> subjects);

/// Entropy of P_X + mean over subjects of Σ_t entropy of P_A(t) on existing edges.
Var entropy_loss(Var px, std::span<const SubjectEdgeMasks> subjects);

struct LossComponents {
  Var ce;
  Var mi;
  Var sp;
  Var en;
};

/// L_CE + λ1 L_MI + λ2 L_SP + λ3 L_EN
Var total_loss(const LossComponents& parts, const LossWeights& weights);

}  // namespace connectoflow
