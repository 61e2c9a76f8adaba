#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "connectoflow/autodiff.hpp"
#include "connectoflow/cohort.hpp"
#include "connectoflow/completion.hpp"
#include "connectoflow/nn.hpp"
#include "connectoflow/params.hpp"
#include "connectoflow/random.hpp"
#include "connectoflow/sde.hpp"

namespace connectoflow {

/// Observations of all N ROIs at irregular, strictly increasing times.
struct IrregularSeries {
  std::vector<double> times;
  /// times.size() × N, one row per observation time.
  Matrix values;

  std::size_t nodes() const { return values.cols(); }
  std::size_t length() const { return times.size(); }
};

/// Throws InputError on empty, unordered, or misshapen series.
void validate_series(const IrregularSeries& series);

/// Acquisition time of every sample in a visit window.
std::vector<double> sample_times(std::size_t samples, double spacing);

/// The observed samples of a visit as a series on the acquisition clock.
IrregularSeries visit_series(const Visit& visit, double spacing);

struct ReconConfig {
  std::size_t latent = 24;
  std::size_t encoder_hidden = 32;
  std::size_t sde_hidden = 16;
  std::size_t decoder_hidden = 32;
  double kl_weight = 1e-4;
  double log_sigma_min = -5.0;
  double log_sigma_max = 2.0;
  /// Time between consecutive samples of a visit window, in solver units.
  double sample_spacing = 0.25;
  int steps_per_unit = 4;
  /// Learned linear term in the latent drift next to the perceptron.
  bool linear_drift = true;
  /// Training only: share of observed samples hidden from the encoder. The
  /// decoder is still scored on all of them, so the model learns to interpolate.
  double encoder_holdout = 0.0;
  std::size_t epochs = 200;
  std::size_t batch = 16;
  double learning_rate = 3e-3;
};

struct Posterior {
  Var mu;         // 1×L
  Var log_sigma;  // 1×L, clamped
  Var sigma;      // exp(log_sigma)
};

/// ½ Σ (σ² + μ² − 1 − 2 log σ)
Var kl_standard_normal(Var mu, Var log_sigma);

/// z0 = μ + σ ⊙ ε; a null `rng` gives ε = 0.
Var sample_initial(Tape& tape, const Posterior& posterior, RandomStream* rng);

/// Latent SDE: reverse-time GRU encoder, SDE over the latent state, perceptron decoder.
class ReconModel {
 public:
  ReconModel(std::size_t nodes, const ReconConfig& config, std::uint64_t seed);

  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const ReconConfig& config() const { return config_; }
  std::size_t nodes() const { return nodes_; }
  const NeuralSde& sde() const { return sde_; }

  Posterior encode(Tape& tape, const IrregularSeries& series) const;
  /// T×L latent rows → T×N observations.
  Var decode(Tape& tape, Var latent_rows) const;
  /// Decoded path at `times` (strictly increasing, first ≥ 0) starting from z0 at t = 0.
  Var decode_path(Tape& tape, Var z0, const std::vector<double>& times, RandomStream* rng) const;

  /// MSE over observed entries + kl_weight · KL. A null `rng` uses ε = 0 and a noise-free path.
  Var recon_loss(Tape& tape, const IrregularSeries& series, RandomStream* rng) const;

  /// Posterior-mean reconstruction (rows = query times) unless `rng` is given.
  Matrix reconstruct_at(const IrregularSeries& series, const std::vector<double>& query_times,
                        RandomStream* rng = nullptr) const;

 private:
  IrregularSeries encoder_view(const IrregularSeries& series, RandomStream& rng) const;

  ReconConfig config_;
  std::size_t nodes_;
  ParamStore params_;
  nn::GruCell encoder_;
  nn::Linear head_;
  MlpSde sde_;
  nn::Mlp2 decoder_;
};

using EpochCallback = std::function<void(std::size_t epoch, double mean_loss)>;

/// Minibatch AdamW on the mean loss; returns the mean loss of every epoch.
std::vector<double> train_recon(ReconModel& model, const std::vector<IrregularSeries>& data, std::size_t epochs,
                                std::uint64_t seed, const EpochCallback& on_epoch = {});

/// Per-ROI mean of the observations, repeated at every query time.
Matrix mean_impute(const IrregularSeries& series, const std::vector<double>& query_times);

/// One-step recurrent forecaster: a GRU over (observation, time) and a head that
/// maps (hidden state, elapsed time) to the next observation.
class RnnImputer {
 public:
  RnnImputer(std::size_t nodes, std::size_t hidden, std::uint64_t seed);

  ParamStore& params() { return params_; }
  std::size_t nodes() const { return nodes_; }

  /// Mean squared one-step prediction error over every observation.
  Var loss(Tape& tape, const IrregularSeries& series) const;
  /// Each query is predicted from the hidden state after the last observation strictly before it.
  Matrix predict(const IrregularSeries& series, const std::vector<double>& query_times) const;

 private:
  Var forecast(Tape& tape, Var hidden, double elapsed) const;

  std::size_t nodes_;
  ParamStore params_;
  nn::GruCell cell_;
  nn::Linear head_;
};

std::vector<double> train_rnn(RnnImputer& model, const std::vector<IrregularSeries>& data, std::size_t epochs,
                              std::size_t batch, double learning_rate, std::uint64_t seed,
                              const EpochCallback& on_epoch = {});

/// baseline_impute("mean" | "rnn"); the rnn variant needs a trained imputer.
Matrix baseline_impute(const std::string& method, const IrregularSeries& series,
                       const std::vector<double>& query_times, const RnnImputer* rnn = nullptr);

/// Visit completers for the reconstruction arms. Observed samples are kept.
class MeanCompleter final : public SignalCompleter {
 public:
  Matrix complete(const Visit& visit) const override;
  std::string name() const override { return "mean"; }
};

class SdeCompleter final : public SignalCompleter {
 public:
  explicit SdeCompleter(const ReconModel& model) : model_(model) {}
  Matrix complete(const Visit& visit) const override;
  std::string name() const override { return "sde"; }

 private:
  const ReconModel& model_;
};

class RnnCompleter final : public SignalCompleter {
 public:
  RnnCompleter(const RnnImputer& model, double spacing) : model_(model), spacing_(spacing) {}
  Matrix complete(const Visit& visit) const override;
  std::string name() const override { return "rnn"; }

 private:
  const RnnImputer& model_;
  double spacing_;
};

/// Every visit window in the cohort that has at least one observed sample.
std::vector<IrregularSeries> cohort_series(const std::vector<SubjectRecord>& subjects, double spacing);

}  // namespace connectoflow
