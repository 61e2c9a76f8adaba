#include "connectoflow/params.hpp"

#include <cmath>

#include "connectoflow/errors.hpp"

namespace connectoflow {

Parameter& ParamStore::add(std::string name, Matrix init) {
  if (find(name) != nullptr) throw ContractError("duplicate parameter " + name);
  auto p = std::make_unique<Parameter>();
  p->name = std::move(name);
  p->grad = Matrix(init.rows(), init.cols());
  p->first_moment = Matrix(init.rows(), init.cols());
  p->second_moment = Matrix(init.rows(), init.cols());
  p->value = std::move(init);
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter* ParamStore::find(const std::string& name) {
  for (auto& p : params_)
    if (p->name == name) return p.get();
  return nullptr;
}

Parameter& ParamStore::get(const std::string& name) {
  if (Parameter* p = find(name)) return *p;
  throw ContractError("unknown parameter " + name);
}

const Parameter& ParamStore::get(const std::string& name) const {
  for (const auto& p : params_)
    if (p->name == name) return *p;
  throw ContractError("unknown parameter " + name);
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p->grad.fill(0.0);
}

namespace {

void check_gradients(ParamStore& store) {
  for (std::size_t i = 0; i < store.size(); ++i) {
    const Parameter& p = store[i];
    if (!p.grad.all_finite()) throw TrainingError("non-finite gradient in parameter " + p.name);
  }
}

// decoupled == true: AdamW (decay applied to the weights directly);
// decoupled == false: Adam with the L2 term added to the gradient.
void adam_update(ParamStore& store, const AdamWConfig& cfg, bool decoupled) {
  check_gradients(store);
  for (std::size_t k = 0; k < store.size(); ++k) {
    Parameter& p = store[k];
    if (p.grad.empty()) p.grad = Matrix(p.value.rows(), p.value.cols());
    p.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(p.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(p.step));
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      double g = p.grad[i];
      if (decoupled) {
        if (cfg.weight_decay != 0.0) p.value[i] -= cfg.lr * cfg.weight_decay * p.value[i];
      } else if (cfg.weight_decay != 0.0) {
        g += cfg.weight_decay * p.value[i];
      }
      p.first_moment[i] = cfg.beta1 * p.first_moment[i] + (1.0 - cfg.beta1) * g;
      p.second_moment[i] = cfg.beta2 * p.second_moment[i] + (1.0 - cfg.beta2) * g * g;
      const double m_hat = p.first_moment[i] / bc1;
      const double v_hat = p.second_moment[i] / bc2;
      p.value[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
    p.grad.fill(0.0);
  }
}

}  // namespace

void adamw_step(ParamStore& store, const AdamWConfig& cfg) { adam_update(store, cfg, true); }

void adam_step(ParamStore& store, const AdamWConfig& cfg) { adam_update(store, cfg, false); }

}  // namespace connectoflow
