#pragma once

#include <span>
#include <vector>

#include "connectoflow/autodiff.hpp"
#include "connectoflow/biomarkers.hpp"
#include "connectoflow/params.hpp"
#include "connectoflow/random.hpp"

namespace connectoflow {

/// Shared feature importance P_X = sigmoid(logits) (N×D) and the edge vector v (2D×1).
class ImportanceMasks {
 public:
  ImportanceMasks() = default;
  ImportanceMasks(ParamStore& store, std::size_t nodes, std::size_t features, double init_logit = 0.0);

  Var px(Tape& tape) const;
  Var v(Tape& tape) const;
  Matrix px_value() const;
  Parameter& logits() const { return *logits_; }
  Parameter& edge_vector() const { return *v_; }
  std::size_t nodes() const { return logits_->value.rows(); }
  std::size_t features() const { return logits_->value.cols(); }

 private:
  Parameter* logits_ = nullptr;
  Parameter* v_ = nullptr;
};

/// ½[σ(vᵀ[x_i⊙p_i ‖ x_j⊙p_j]) + σ(vᵀ[x_j⊙p_j ‖ x_i⊙p_i])]
double edge_probability(std::span<const double> x_i, std::span<const double> x_j, std::span<const double> p_i,
                        std::span<const double> p_j, std::span<const double> v);

/// Symmetrized edge probability for every node pair (N×N).
Var edge_probability_matrix(Var features, Var px, Var v);

struct MaskedSlice {
  Var adjacency;  // A ⊙ P_A
  Var features;   // X ⊙ P_X
  Var pa;         // P_A over all pairs
  Matrix support; // 1 where A has an edge
};

/// Elementwise masking with a given P_A; zero entries of A stay zero.
MaskedSlice apply_masks(Tape& tape, const Matrix& adjacency, const Matrix& features, Var px, Var pa);

MaskedSlice mask_inputs(Tape& tape, const Matrix& adjacency, const Matrix& features, Var px, Var v);

/// Row means of P_X.
std::vector<double> roi_scores(const Matrix& px);

/// Indices by descending score, ties by index, truncated to `top`.
std::vector<std::size_t> rank_descending(const std::vector<double>& scores, std::size_t top);

struct EdgeTestConfig {
  double q = 0.05;
  std::size_t top_edges = 30;
  std::size_t networks = 7;
};

/// Welch t per edge i<j on per-subject N×N summaries, BH over all edges,
/// ranked significant edges and the network heatmap. Throws StatsError when a
/// group has fewer than two subjects.
void edge_group_test(const std::vector<Matrix>& subject_edges, const std::vector<int>& labels,
                     const EdgeTestConfig& config, BiomarkerReport& report);

}  // namespace connectoflow
