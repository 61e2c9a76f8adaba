#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "connectoflow/config.hpp"
#include "connectoflow/pipeline.hpp"

namespace connectoflow {

/// Exit status for an exception escaping a command: 2 config/input, 3 state, 4 divergence.
int exit_code_for(const std::exception& e);

/// Writes the synthetic cohort (with config.missing_rate applied) and its ground truth.
nlohmann::json cmd_synth(const RunConfig& config, const std::string& out_dir);

struct TrainOutcome {
  RunResult run;
  RunTiming timing;
};

/// Reconstruction, graphs, k-fold training and the biomarker report, written to `out_dir`.
/// Fold checkpoints under out_dir/checkpoints let a rerun pick up where a killed run stopped.
TrainOutcome cmd_train(const std::string& cohort_dir, const RunConfig& config, const std::string& out_dir,
                       const ProgressSink& progress = {});

struct AblationOutcome {
  std::vector<std::string> arms;
  std::vector<TrainOutcome> runs;
  /// Pairwise DeLong on out-of-fold scores, in arm order (a < b).
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<DeLongResult> delong;
};

/// One cmd_train per arm in out_dir/arm_<name>, then ablation.csv (one row per arm per
/// fold) and delong.csv.
AblationOutcome cmd_ablate(const std::string& cohort_dir, const RunConfig& config, const std::string& axis,
                           const std::string& out_dir, const ProgressSink& progress = {});

/// SVG figures and the CSV tables behind them. Throws StateError for an incomplete run.
void cmd_report(const std::string& run_dir, const std::string& out_dir);

}  // namespace connectoflow
