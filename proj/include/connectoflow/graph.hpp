#pragma once

#include <string>
#include <utility>
#include <vector>

#include "connectoflow/cohort.hpp"
#include "connectoflow/completion.hpp"

namespace connectoflow {

/// Pearson correlation between rows of an N×D signal matrix (D ≥ 3).
/// Zero-variance rows correlate 0 with every other row; their indices are
/// appended to `zero_variance` when given.
Matrix pearson_matrix(const Matrix& signals, std::vector<std::size_t>* zero_variance = nullptr);

struct ThresholdResult {
  Matrix adjacency;
  std::size_t target = 0;
  std::size_t kept = 0;
  /// Fewer strictly positive pairs than the target.
  bool sparsity_warning = false;
};

/// Keep the ⌈density·N(N−1)/2⌉ largest strictly positive off-diagonal pairs
/// (ties by lexicographic pair index); kept entries carry their correlation.
ThresholdResult threshold_top_positive(const Matrix& corr, double density);

struct RepairResult {
  Matrix adjacency;
  std::vector<std::pair<std::size_t, std::size_t>> added;
  /// Parallel to `added`: the partner had no positive correlation.
  std::vector<std::uint8_t> negative;
};

/// Connect every degree-0 node to its highest-correlation partner. Weights are
/// |corr| (at least kMinRepairWeight). Throws StructuralError for N = 1.
RepairResult repair_isolated(const Matrix& adjacency, const Matrix& corr);

inline constexpr double kMinRepairWeight = 1e-6;

struct GraphSnapshot {
  double month = 0.0;
  Matrix features;   // N×D
  Matrix adjacency;  // N×N symmetric, zero diagonal
};

struct DynamicGraph {
  std::string subject_id;
  int label = stable;
  std::vector<GraphSnapshot> snapshots;
  std::vector<std::size_t> zero_variance_nodes;
  std::size_t repair_edges = 0;
  bool sparsity_warning = false;

  std::size_t nodes() const { return snapshots.empty() ? 0 : snapshots.front().features.rows(); }
  std::size_t features() const { return snapshots.empty() ? 0 : snapshots.front().features.cols(); }
  DynamicGraph truncated(std::size_t k) const;
};

struct GraphConfig {
  double density = 0.10;
  bool binarize = false;
};

/// One sparse correlation graph per visit, in time order.
DynamicGraph build_dynamic_graph(const SubjectRecord& subject, const SignalCompleter& completer,
                                 const GraphConfig& config);

std::size_t degree(const Matrix& adjacency, std::size_t node);

}  // namespace connectoflow
