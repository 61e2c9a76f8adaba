#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "connectoflow/matrix.hpp"

namespace connectoflow {

/// Trainable tensor plus its optimizer state.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  Matrix first_moment;
  Matrix second_moment;
  std::int64_t step = 0;
};

/// Owns named parameters at stable addresses. Move-only.
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(ParamStore&&) = default;
  ParamStore& operator=(ParamStore&&) = default;
  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;

  Parameter& add(std::string name, Matrix init);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  Parameter* find(const std::string& name);

  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;
  Parameter& operator[](std::size_t i) { return *params_[i]; }
  const Parameter& operator[](std::size_t i) const { return *params_[i]; }

  void zero_grad();

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

/// Decoupled-weight-decay Adam. Advances moments and step counts, then zeroes
/// gradients. Throws TrainingError naming the first parameter with a non-finite gradient.
void adamw_step(ParamStore& store, const AdamWConfig& cfg);

/// Classic Adam with L2 penalty folded into the gradient. Identical to
/// adamw_step when weight_decay is zero.
void adam_step(ParamStore& store, const AdamWConfig& cfg);

}  // namespace connectoflow
