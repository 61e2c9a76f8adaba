#include "connectoflow/training.hpp"

#include <cmath>
#include <numeric>

#include "connectoflow/errors.hpp"

namespace connectoflow {

namespace {

struct SubjectLoss {
  double total = 0.0;
  double ce = 0.0;
};

// Batch loss = Σ_s total_loss(s)/B: the P_X terms appear B times with weight 1/B,
// so the sum equals the composite loss over the whole batch.
SubjectLoss subject_step(const StgnnModel& model, const DynamicGraph& graph, const LossWeights& w, double share,
                         Mode mode, RandomStream* rng, bool backward) {
  Tape tape;
  SubjectForward f = model.forward(tape, graph, mode, rng);
  Var px = model.masks().px(tape);
  SubjectEdgeMasks one[] = {f.edge_masks};
  Var ce = ce_loss(f.probability, graph.label);
  LossComponents parts{ce, mi_loss(f.probability, graph.label), sparsity_loss(px, one), entropy_loss(px, one)};
  Var loss = scale(total_loss(parts, w), share);
  SubjectLoss out{loss.scalar(), ce.scalar() * share};
  if (!std::isfinite(out.total))
    throw TrainingError("non-finite loss on subject " + graph.subject_id);
  if (backward) tape.backward(loss);
  return out;
}

}  // namespace

double mean_px_entropy(const StgnnModel& model) {
  const Matrix px = model.masks().px_value();
  double h = 0.0;
  for (double p : px.data()) {
    const double q = std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
    h -= q * std::log(q) + (1.0 - q) * std::log(1.0 - q);
  }
  return h / static_cast<double>(px.size());
}

std::vector<EpochStats> train_stgnn(StgnnModel& model, const std::vector<const DynamicGraph*>& data,
                                    const TrainConfig& config, std::uint64_t seed, const EpochHook& hook) {
  if (data.empty()) throw ConfigError("no training subjects");
  if (config.batch == 0 || config.epochs == 0) throw ConfigError("batch size and epochs must be positive");
  AdamWConfig opt;
  opt.lr = config.lr;
  opt.weight_decay = config.weight_decay;
  RandomStream root(seed);
  std::vector<std::size_t> order(data.size());
  std::vector<EpochStats> history;
  model.params().zero_grad();
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    RandomStream shuffle = root.derive(2 * epoch);
    shuffle.shuffle(order);
    RandomStream noise = root.derive(2 * epoch + 1);
    EpochStats stats;
    stats.epoch = epoch + 1;
    for (std::size_t start = 0; start < order.size(); start += config.batch) {
      const std::size_t end = std::min(order.size(), start + config.batch);
      const double share = 1.0 / static_cast<double>(end - start);
      for (std::size_t k = start; k < end; ++k) {
        RandomStream rng = noise.derive(order[k]);
        SubjectLoss l = subject_step(model, *data[order[k]], config.loss, share, Mode::train, &rng, true);
        stats.loss += l.total * static_cast<double>(end - start);
        stats.ce += l.ce * static_cast<double>(end - start);
      }
      adamw_step(model.params(), opt);
    }
    stats.loss /= static_cast<double>(order.size());
    stats.ce /= static_cast<double>(order.size());
    stats.px_entropy = mean_px_entropy(model);
    history.push_back(stats);
    if (hook) hook(stats);
  }
  return history;
}

double evaluate_loss(const StgnnModel& model, const std::vector<const DynamicGraph*>& data, const LossWeights& w) {
  double total = 0.0;
  for (const DynamicGraph* g : data) total += subject_step(model, *g, w, 1.0, Mode::eval, nullptr, false).total;
  return total / static_cast<double>(data.size());
}

Matrix edge_summary(const StgnnModel& model, const DynamicGraph& graph) {
  Tape tape;
  SubjectForward f = model.forward(tape, graph, Mode::eval, nullptr);
  Matrix out(graph.nodes(), graph.nodes());
  for (Var a : f.weighted_adjacency) out += a.value();
  out *= 1.0 / static_cast<double>(f.weighted_adjacency.size());
  return out;
}

}  // namespace connectoflow
