#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "connectoflow/biomarkers.hpp"
#include "connectoflow/graph.hpp"
#include "connectoflow/losses.hpp"
#include "connectoflow/params.hpp"
#include "connectoflow/stats.hpp"
#include "connectoflow/stgnn.hpp"

namespace connectoflow {

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch = 32;
  double lr = 1e-3;
  double weight_decay = 1e-4;
  LossWeights loss;
  StgnnConfig model;
};

struct EpochStats {
  std::size_t epoch = 0;
  double loss = 0.0;
  double ce = 0.0;
  /// Mean binary entropy of P_X after the epoch.
  double px_entropy = 0.0;
};

using EpochHook = std::function<void(const EpochStats&)>;

/// Minibatch AdamW on the composite loss. Subjects are shuffled every epoch
/// with a stream derived from `seed`. Throws TrainingError on a non-finite loss.
std::vector<EpochStats> train_stgnn(StgnnModel& model, const std::vector<const DynamicGraph*>& data,
                                    const TrainConfig& config, std::uint64_t seed, const EpochHook& hook = {});

/// Mean over subjects of the batch loss terms, evaluated without dropout or noise.
double evaluate_loss(const StgnnModel& model, const std::vector<const DynamicGraph*>& data, const LossWeights& w);

/// Mean binary entropy per entry of P_X.
double mean_px_entropy(const StgnnModel& model);

/// Per-subject edge statistic: mean over timepoints of A ⊙ P_A in eval mode.
Matrix edge_summary(const StgnnModel& model, const DynamicGraph& graph);

}  // namespace connectoflow
