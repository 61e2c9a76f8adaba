#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"

#include "connectoflow/graph.hpp"
#include "connectoflow/reconstruct.hpp"
#include "connectoflow/synth.hpp"
#include "connectoflow/training.hpp"

namespace connectoflow {

struct InterpretConfig {
  std::size_t top_rois = 20;
  std::size_t top_edges = 30;
  double fdr_q = 0.05;
};

/// Every knob of a run. JSON keys mirror the field names; see docs/config.schema.json.
struct RunConfig {
  std::uint64_t seed = 7;
  SynthConfig synth;
  /// Fraction of samples removed per visit when synthesizing.
  double missing_rate = 0.0;
  GraphConfig graph;
  /// Reconstruction arm for absent samples: "sde", "rnn" or "mean".
  std::string recon_method = "sde";
  ReconConfig recon;
  std::size_t rnn_hidden = 32;
  TrainConfig train;
  std::size_t folds = 5;
  /// Keep only the first k visits per subject; 0 keeps all.
  std::size_t timepoints = 0;
  InterpretConfig interpret;
};

/// Throws ConfigError naming the offending key.
void validate(const RunConfig& config);

/// Missing keys keep their defaults; unknown keys are rejected.
RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const RunConfig& config);

RunConfig load_config(const std::string& path);

}  // namespace connectoflow
