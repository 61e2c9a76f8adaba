#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "connectoflow/biomarkers.hpp"
#include "connectoflow/completion.hpp"
#include "connectoflow/config.hpp"
#include "connectoflow/graph.hpp"
#include "connectoflow/stats.hpp"
#include "connectoflow/training.hpp"

namespace connectoflow {

/// Receives one machine-parseable progress line (key=value pairs).
using ProgressSink = std::function<void(const std::string&)>;

/// Owns whatever model backs a completer.
struct Completion {
  std::string method;
  /// False when every sample was observed and nothing had to be filled.
  bool trained = false;
  std::vector<double> loss_history;
  std::shared_ptr<void> model;
  std::unique_ptr<SignalCompleter> completer;
};

/// Trains the configured reconstruction arm on every visit window of the cohort
/// (labels are never read). The "mean" arm needs no training.
Completion fit_completion(const std::vector<SubjectRecord>& subjects, const RunConfig& config,
                          const ProgressSink& progress = {});

/// Completion, correlation graphs, and truncation to config.timepoints. With a
/// non-empty `cache_dir` every completed window is written to <cache_dir>/<id>/v<k>.csv.
std::vector<DynamicGraph> build_graphs(const std::vector<SubjectRecord>& subjects, const SignalCompleter& completer,
                                       const RunConfig& config, const std::string& cache_dir = "");

struct FoldResult {
  std::size_t fold = 0;
  bool diverged = false;
  std::string error;
  std::vector<std::size_t> test;
  std::vector<double> scores;
  MetricSet metrics;
  std::vector<EpochStats> history;
  /// P_X after training.
  Matrix px;
  /// Per test subject: mean of A ⊙ P_A over its timepoints.
  std::vector<Matrix> edge_summaries;
  bool resumed = false;
};

struct RunResult {
  std::vector<std::string> subject_ids;
  std::vector<int> labels;
  /// Out-of-fold score per subject; NaN where the fold diverged.
  std::vector<double> scores;
  std::vector<FoldResult> folds;
  MetricSet mean;
  BiomarkerReport biomarkers;
  bool biomarkers_valid = false;
  std::string biomarker_error;
};

/// Stratified k-fold training and evaluation. With a non-empty `checkpoint_dir`, each
/// finished fold is checkpointed there and reused on the next call with the same config.
/// Folds run concurrently on up to `threads` workers. Throws DivergenceError only when
/// every fold diverged.
RunResult cross_validate(const std::vector<DynamicGraph>& graphs, const RunConfig& config,
                         const std::string& checkpoint_dir = "", std::size_t threads = 1,
                         const ProgressSink& progress = {});

/// CONNECTOFLOW_THREADS if set and positive, else 1.
std::size_t thread_budget();

struct RunTiming {
  double reconstruction_s = 0.0;
  double graphs_s = 0.0;
  double training_s = 0.0;
};

/// metrics.csv, scores.csv, roi_scores.csv, edges.csv, heatmap.csv,
/// training_log.csv and report.json.
void write_run_outputs(const std::string& dir, const RunResult& run, const RunConfig& config,
                       const RunTiming& timing);

struct Arm {
  std::string name;
  RunConfig config;
};

/// Arms for an axis string: "recon" (sde, rnn, mean), "recon=sde,mean",
/// "timepoints" (1..max visits) or "timepoints=1,6". Throws ConfigError.
std::vector<Arm> ablation_arms(const std::string& axis, const RunConfig& base, std::size_t max_visits);

}  // namespace connectoflow
