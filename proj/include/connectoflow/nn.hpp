#pragma once

#include <string>

#include "connectoflow/autodiff.hpp"
#include "connectoflow/params.hpp"
#include "connectoflow/random.hpp"

namespace connectoflow::nn {

/// Glorot-uniform fan_in×fan_out matrix.
Matrix glorot_uniform(std::size_t fan_in, std::size_t fan_out, RandomStream& rng);

/// y = x·W + b for row-major batches x (m×in).
class Linear {
 public:
  Linear() = default;
  Linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, RandomStream& rng);

  Var operator()(Tape& tape, Var x) const;
  Parameter& weight() const { return *weight_; }
  Parameter& bias() const { return *bias_; }
  std::size_t in() const { return weight_->value.rows(); }
  std::size_t out() const { return weight_->value.cols(); }

 private:
  Parameter* weight_ = nullptr;
  Parameter* bias_ = nullptr;
};

enum class Activation { tanh, relu, softplus, identity };

Var activate(Var x, Activation act);

/// Two affine layers with a tanh hidden layer and a configurable output activation.
class Mlp2 {
 public:
  Mlp2() = default;
  Mlp2(ParamStore& store, const std::string& name, std::size_t in, std::size_t hidden, std::size_t out,
       Activation output, RandomStream& rng);

  Var operator()(Tape& tape, Var x) const;
  Linear& first() { return first_; }
  Linear& second() { return second_; }

 private:
  Linear first_;
  Linear second_;
  Activation output_ = Activation::identity;
};

/// GRU cell over row vectors: h' = (1−u)⊙h + u⊙tanh(W_h x + U_h (r⊙h) + b_h).
class GruCell {
 public:
  GruCell() = default;
  GruCell(ParamStore& store, const std::string& name, std::size_t in, std::size_t hidden, RandomStream& rng);

  /// x: 1×in, h: 1×hidden → 1×hidden.
  Var operator()(Tape& tape, Var x, Var h) const;
  std::size_t hidden() const { return hidden_; }

 private:
  Parameter* input_weight_ = nullptr;   // in × 3h   (update | reset | candidate)
  Parameter* hidden_weight_ = nullptr;  // h × 3h
  Parameter* bias_ = nullptr;           // 1 × 3h
  std::size_t hidden_ = 0;
};

}  // namespace connectoflow::nn
