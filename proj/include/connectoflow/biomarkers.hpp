#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "connectoflow/matrix.hpp"

namespace connectoflow {

struct EdgeStat {
  std::size_t i = 0;
  std::size_t j = 0;
  double t = 0.0;
  double p = 1.0;
  double p_adj = 1.0;
  bool significant = false;
};

/// Group-level interpretation output: salient ROIs and discriminative edges.
struct BiomarkerReport {
  std::vector<double> roi_scores;
  /// ROI indices by descending score (ties by index), truncated to the top-k.
  std::vector<std::size_t> ranked_rois;
  /// Every tested pair i<j, in lexicographic order.
  std::vector<EdgeStat> edges;
  /// Significant edges by descending |t|, truncated to the top-k.
  std::vector<EdgeStat> ranked_edges;
  /// networks×networks mean |t| over significant edges; empty blocks hold 0 and are flagged.
  Matrix network_heatmap;
  std::vector<std::uint8_t> heatmap_empty;
};

/// Map node → network label by contiguous blocks of ≈ nodes/networks.
std::size_t network_of(std::size_t node, std::size_t nodes, std::size_t networks);

}  // namespace connectoflow
