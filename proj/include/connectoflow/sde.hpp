#pragma once

#include <functional>
#include <string>
#include <vector>

#include "connectoflow/autodiff.hpp"
#include "connectoflow/nn.hpp"
#include "connectoflow/random.hpp"

namespace connectoflow {

enum class NoiseType { diagonal, zero };

/// dz = drift(z) dt + diffusion(z) ⊙ dW. Both maps preserve the state's shape.
class NeuralSde {
 public:
  virtual ~NeuralSde() = default;
  virtual Var drift(Tape& tape, Var state) const = 0;
  /// Strictly positive elementwise when noise() == diagonal.
  virtual Var diffusion(Tape& tape, Var state) const = 0;
  virtual NoiseType noise() const = 0;
};

/// Drift and diffusion are two-layer tanh perceptrons on row-vector states;
/// the diffusion output goes through softplus.
class MlpSde final : public NeuralSde {
 public:
  MlpSde() = default;
  /// `diffusion_bias` initializes the diffusion output bias (softplus(-5) ≈ 0.0067).
  MlpSde(ParamStore& store, const std::string& name, std::size_t dim, std::size_t hidden, NoiseType noise,
         RandomStream& rng, double drift_scale = 1.0, double diffusion_bias = -5.0);

  /// Adds a learned linear term z·A + b to the drift, starting at zero. Oscillatory
  /// latent paths are hard to reach through the tanh layer alone.
  void add_linear_drift(ParamStore& store, const std::string& name, RandomStream& rng);

  Var drift(Tape& tape, Var state) const override;
  Var diffusion(Tape& tape, Var state) const override;
  NoiseType noise() const override { return noise_; }
  std::size_t dim() const { return dim_; }

 private:
  nn::Mlp2 drift_;
  nn::Mlp2 diffusion_;
  nn::Linear linear_;
  bool has_linear_ = false;
  NoiseType noise_ = NoiseType::diagonal;
  std::size_t dim_ = 0;
};

/// SDE from closures; used for closed-form reference problems.
class FunctionSde final : public NeuralSde {
 public:
  using Map = std::function<Var(Tape&, Var)>;
  FunctionSde(Map drift, Map diffusion, NoiseType noise)
      : drift_(std::move(drift)), diffusion_(std::move(diffusion)), noise_(noise) {}

  Var drift(Tape& tape, Var state) const override { return drift_(tape, state); }
  Var diffusion(Tape& tape, Var state) const override { return diffusion_(tape, state); }
  NoiseType noise() const override { return noise_; }

 private:
  Map drift_;
  Map diffusion_;
  NoiseType noise_;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<Var> states;
};

/// Number of Euler–Maruyama steps used for an interval of length `span`.
std::size_t euler_steps(double span, int steps_per_unit);

/// Euler–Maruyama endpoint from t_start to t_end with
/// h = span / ceil(steps_per_unit · span). Noise is sampled only when the SDE
/// has diagonal noise and `rng` is non-null; a null `rng` gives the drift-only path.
/// Throws DivergenceError carrying the step index on a non-finite state.
Var integrate(const NeuralSde& sde, Var z0, double t_start, double t_end, int steps_per_unit, RandomStream* rng);

/// States at every requested time, chained segment by segment. The first state
/// is z0 (a zero-length segment from times[0]).
Trajectory integrate_schedule(const NeuralSde& sde, Var z0, const std::vector<double>& times, int steps_per_unit,
                              RandomStream* rng);

}  // namespace connectoflow
