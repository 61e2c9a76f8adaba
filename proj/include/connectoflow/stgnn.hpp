#pragma once

#include <string>
#include <vector>

#include "connectoflow/autodiff.hpp"
#include "connectoflow/graph.hpp"
#include "connectoflow/interpret.hpp"
#include "connectoflow/losses.hpp"
#include "connectoflow/nn.hpp"
#include "connectoflow/params.hpp"
#include "connectoflow/sde.hpp"

namespace connectoflow {

struct StgnnConfig {
  std::size_t hidden = 16;
  std::size_t layers = 2;
  std::size_t head_hidden1 = 64;
  std::size_t head_hidden2 = 16;
  double dropout = 0.5;
  std::size_t sde_hidden = 16;
  int steps_per_unit = 4;
  /// Months per solver time unit.
  double months_per_unit = 12.0;
  double mask_init_logit = 0.0;
  /// Initial bias of the weight GRU's update gate; negative values start the
  /// evolution close to the learned initial weights.
  double update_gate_bias = -3.0;
};

enum class Mode { train, eval };

/// D̃^{-1/2}(A+I)D̃^{-1/2}
Matrix normalize_adjacency(const Matrix& a);
Var normalize_adjacency(Var a);

/// sigmoid(norm_a · z · h)
Var gcn_forward(Var norm_a, Var z, Var h);

/// [column max ‖ column mean] as a 1×2d row.
Var readout(Var z);

/// GCN layer whose weight matrix H (d_in×d_out) is the hidden state of an SDE
/// followed by a matrix GRU.
class EvolvingLayer {
 public:
  EvolvingLayer() = default;
  EvolvingLayer(ParamStore& store, const std::string& name, std::size_t d_in, std::size_t d_out,
                std::size_t sde_hidden, RandomStream& rng, double update_gate_bias = 0.0);

  Var initial(Tape& tape) const;
  /// Learned projection of the top-d_out rows of z by L2 norm (ties by index), d_in×d_out.
  /// Zero rows stand in when z has fewer than d_out rows.
  Var summarize(Tape& tape, Var z) const;
  /// H' = SDE(prior, dt) then H = GRU(summary, H'). dt is in solver units.
  Var evolve(Tape& tape, Var prior, Var summary, double dt, int steps_per_unit, RandomStream* rng) const;

  const MlpSde& sde() const { return sde_; }
  Parameter& gate(const char* which) const;
  std::size_t d_in() const { return d_in_; }
  std::size_t d_out() const { return d_out_; }

 private:
  Var gru(Tape& tape, Var summary, Var h) const;

  std::size_t d_in_ = 0;
  std::size_t d_out_ = 0;
  Parameter* h_init_ = nullptr;
  Parameter* projection_ = nullptr;
  MlpSde sde_;
  // update, reset, candidate
  Parameter* w_[3] = {nullptr, nullptr, nullptr};
  Parameter* u_[3] = {nullptr, nullptr, nullptr};
  Parameter* b_[3] = {nullptr, nullptr, nullptr};
};

struct SubjectForward {
  Var probability;
  SubjectEdgeMasks edge_masks;
  /// A ⊙ P_A per timepoint.
  std::vector<Var> weighted_adjacency;
};

class StgnnModel {
 public:
  StgnnModel(std::size_t nodes, std::size_t features, const StgnnConfig& config, std::uint64_t seed);
  StgnnModel(StgnnModel&&) = default;

  /// P(progressive) for one subject. Train mode samples SDE noise and dropout from `rng`;
  /// eval mode ignores `rng` and follows the drift-only path.
  SubjectForward forward(Tape& tape, const DynamicGraph& graph, Mode mode, RandomStream* rng) const;
  double predict(const DynamicGraph& graph) const;

  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  const ImportanceMasks& masks() const { return masks_; }
  const StgnnConfig& config() const { return config_; }
  const std::vector<EvolvingLayer>& layers() const { return layers_; }
  std::size_t nodes() const { return nodes_; }
  std::size_t features() const { return features_; }
  std::uint64_t seed() const { return seed_; }

 private:
  std::size_t nodes_;
  std::size_t features_;
  StgnnConfig config_;
  std::uint64_t seed_;
  ParamStore store_;
  ImportanceMasks masks_;
  std::vector<EvolvingLayer> layers_;
  nn::Linear head_[3];
};

}  // namespace connectoflow
