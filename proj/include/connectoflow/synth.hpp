#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "connectoflow/biomarkers.hpp"
#include "connectoflow/cohort.hpp"

namespace connectoflow {

using NodePair = std::pair<std::size_t, std::size_t>;

struct SynthConfig {
  std::size_t n_stable = 120;
  std::size_t n_progressive = 60;
  std::size_t nodes = 100;
  std::size_t samples = 32;
  std::size_t max_visits = 6;
  std::size_t networks = 7;
  double horizon_months = 105.0;
  /// Progressive subjects convert this many months (uniform, at most) after their last visit.
  double max_conversion_lag_months = 12.0;
  /// Planted ROI set; empty selects the default (10 ROIs in network 1).
  std::vector<std::size_t> planted_rois;
  /// Planted edge set (node-disjoint pairs); empty selects 10 within-network pairs.
  std::vector<NodePair> planted_edges;
  /// Correlation shift on planted edges at the end of the horizon.
  double effect_size = 0.3;
  /// Amplitude of the planted ROI waveform per unit of effect_size.
  double roi_effect_scale = 4.0;
  double noise_sd = 1.0;
  std::uint64_t seed = 7;
};

struct GroundTruth {
  std::vector<std::size_t> planted_rois;
  std::vector<NodePair> planted_edges;
  std::vector<std::string> subject_ids;
  std::vector<std::vector<double>> visit_months;
  /// Progression phase per visit, 1 − (conversion − month) / horizon clamped to [0,1];
  /// empty for stable subjects.
  std::vector<std::vector<double>> progression_phase;
  /// Conversion month per subject; NaN for stable subjects.
  std::vector<double> conversion_month;
};

struct Cohort {
  std::vector<SubjectRecord> subjects;
  GroundTruth truth;
};

/// Fills planted sets when empty and checks feasibility; throws ConfigError.
SynthConfig resolve_config(SynthConfig config);

/// Deterministic cohort with planted ROI and edge effects that grow with time
/// in progressive subjects.
Cohort generate(const SynthConfig& config);

/// Mask each visit sample with probability `missing_rate`, keeping at least
/// three samples per visit. Throws ConfigError when the floor cannot be met.
std::vector<SubjectRecord> drop_observations(std::vector<SubjectRecord> subjects, double missing_rate,
                                             std::uint64_t seed);

struct Recovery {
  double roi_precision = 0.0;
  double edge_recall = 0.0;
};

/// Precision of the top-|S| ROIs against S; recall of E inside the significant edge set.
Recovery score_recovery(const BiomarkerReport& report, const GroundTruth& truth);

}  // namespace connectoflow
