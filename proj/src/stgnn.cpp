#include "connectoflow/stgnn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "connectoflow/errors.hpp"

namespace connectoflow {

Matrix normalize_adjacency(const Matrix& a) {
  if (a.rows() != a.cols()) throw ShapeError("adjacency must be square, got " + a.shape_string());
  const std::size_t n = a.rows();
  std::vector<double> scale(n);
  for (std::size_t i = 0; i < n; ++i) {
    double d = 1.0;
    for (double w : a.row(i)) d += w;
    scale[i] = 1.0 / std::sqrt(d);
  }
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) = ((i == j ? 1.0 : 0.0) + a(i, j)) * scale[i] * scale[j];
  return out;
}

Var normalize_adjacency(Var a) {
  if (a.rows() != a.cols()) throw ShapeError("adjacency must be square, got " + a.value().shape_string());
  Var with_loops = a + a.tape().constant(Matrix::identity(a.rows()));
  Var inv_sqrt = pow(row_sum(with_loops), -0.5);
  return mul(with_loops, matmul(inv_sqrt, transpose(inv_sqrt)));
}

Var gcn_forward(Var norm_a, Var z, Var h) {
  if (norm_a.rows() != norm_a.cols() || norm_a.cols() != z.rows() || z.cols() != h.rows())
    throw ShapeError("gcn_forward: " + norm_a.value().shape_string() + " · " + z.value().shape_string() + " · " +
                     h.value().shape_string());
  return sigmoid(matmul(norm_a, matmul(z, h)));
}

Var readout(Var z) {
  if (z.rows() == 0) throw ShapeError("readout of an empty embedding");
  return concat_cols(col_max(z), col_mean(z));
}

namespace {

const char* kGateNames[3] = {"update", "reset", "candidate"};

Var dropout(Tape& tape, Var x, double rate, RandomStream& rng) {
  if (rate <= 0.0) return x;
  Matrix keep(x.rows(), x.cols());
  const double scale = 1.0 / (1.0 - rate);
  for (double& k : keep.data()) k = rng.uniform() < rate ? 0.0 : scale;
  return mul(x, tape.constant(std::move(keep)));
}

}  // namespace

EvolvingLayer::EvolvingLayer(ParamStore& store, const std::string& name, std::size_t d_in, std::size_t d_out,
                             std::size_t sde_hidden, RandomStream& rng, double update_gate_bias)
    : d_in_(d_in), d_out_(d_out) {
  h_init_ = &store.add(name + ".h_init", nn::glorot_uniform(d_in, d_out, rng));
  projection_ = &store.add(name + ".summary", nn::glorot_uniform(d_out, d_out, rng));
  sde_ = MlpSde(store, name + ".sde", d_in * d_out, sde_hidden, NoiseType::diagonal, rng, 0.1);
  for (int g = 0; g < 3; ++g) {
    const std::string gate = name + ".gru." + kGateNames[g];
    w_[g] = &store.add(gate + ".w", nn::glorot_uniform(d_in, d_in, rng));
    u_[g] = &store.add(gate + ".u", nn::glorot_uniform(d_in, d_in, rng));
    b_[g] = &store.add(gate + ".b", Matrix(d_in, d_out, g == 0 ? update_gate_bias : 0.0));
  }
}

Parameter& EvolvingLayer::gate(const char* which) const {
  const std::string key = which;
  for (int g = 0; g < 3; ++g) {
    if (key == std::string(kGateNames[g]) + ".w") return *w_[g];
    if (key == std::string(kGateNames[g]) + ".u") return *u_[g];
    if (key == std::string(kGateNames[g]) + ".b") return *b_[g];
  }
  throw ContractError("unknown gate parameter " + key);
}

Var EvolvingLayer::initial(Tape& tape) const { return tape.param(*h_init_); }

Var EvolvingLayer::summarize(Tape& tape, Var z) const {
  if (z.cols() != d_in_) throw ShapeError("summarize: embedding width " + std::to_string(z.cols()) + " vs " +
                                          std::to_string(d_in_));
  const Matrix& zv = z.value();
  std::vector<double> norms(zv.rows(), 0.0);
  for (std::size_t i = 0; i < zv.rows(); ++i)
    for (double x : zv.row(i)) norms[i] += x * x;
  std::vector<std::size_t> order(zv.rows());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return norms[a] > norms[b]; });
  if (order.size() > d_out_) order.resize(d_out_);
  Var top = gather_rows(z, order);
  if (order.size() < d_out_) {
    Var parts[] = {top, tape.constant(Matrix(d_out_ - order.size(), d_in_))};
    top = stack_rows(parts);
  }
  return matmul(transpose(top), tape.param(*projection_));
}

Var EvolvingLayer::gru(Tape& tape, Var s, Var h) const {
  auto gate = [&](int g, Var state) {
    return matmul(tape.param(*w_[g]), s) + matmul(tape.param(*u_[g]), state) + tape.param(*b_[g]);
  };
  Var update = sigmoid(gate(0, h));
  Var reset = sigmoid(gate(1, h));
  Var candidate = tanh(gate(2, mul(reset, h)));
  return h + mul(update, candidate - h);
}

Var EvolvingLayer::evolve(Tape& tape, Var prior, Var summary, double dt, int steps_per_unit,
                          RandomStream* rng) const {
  if (!(dt >= 0.0)) throw ScheduleError("negative time gap " + std::to_string(dt) + " in weight evolution");
  if (prior.rows() != d_in_ || prior.cols() != d_out_ || summary.rows() != d_in_ || summary.cols() != d_out_)
    throw ShapeError("evolve: hidden state " + prior.value().shape_string() + ", summary " +
                     summary.value().shape_string());
  Var evolved = prior;
  if (dt > 0.0) {
    Var flat = reshape(prior, 1, d_in_ * d_out_);
    evolved = reshape(integrate(sde_, flat, 0.0, dt, steps_per_unit, rng), d_in_, d_out_);
  }
  return gru(tape, summary, evolved);
}

StgnnModel::StgnnModel(std::size_t nodes, std::size_t features, const StgnnConfig& config, std::uint64_t seed)
    : nodes_(nodes), features_(features), config_(config), seed_(seed) {
  if (nodes == 0 || features == 0) throw ConfigError("model needs at least one node and one feature");
  if (config.layers == 0 || config.hidden == 0) throw ConfigError("model needs at least one hidden layer");
  if (config.dropout < 0.0 || config.dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
  if (config.steps_per_unit < 1 || !(config.months_per_unit > 0.0)) throw ConfigError("bad solver time scale");
  RandomStream rng(seed);
  masks_ = ImportanceMasks(store_, nodes, features, config.mask_init_logit);
  std::size_t width = features;
  for (std::size_t l = 0; l < config.layers; ++l) {
    layers_.emplace_back(store_, "gcn." + std::to_string(l), width, config.hidden, config.sde_hidden, rng,
                         config.update_gate_bias);
    width = config.hidden;
  }
  head_[0] = nn::Linear(store_, "head.0", 2 * config.hidden, config.head_hidden1, rng);
  head_[1] = nn::Linear(store_, "head.1", config.head_hidden1, config.head_hidden2, rng);
  head_[2] = nn::Linear(store_, "head.2", config.head_hidden2, 1, rng);
}

SubjectForward StgnnModel::forward(Tape& tape, const DynamicGraph& graph, Mode mode, RandomStream* rng) const {
  if (graph.snapshots.empty()) throw InputError("subject " + graph.subject_id + " has no timepoints");
  if (graph.nodes() != nodes_ || graph.features() != features_)
    throw ShapeError("subject " + graph.subject_id + " has " + std::to_string(graph.nodes()) + "×" +
                     std::to_string(graph.features()) + " inputs, model expects " + std::to_string(nodes_) + "×" +
                     std::to_string(features_));
  const bool train = mode == Mode::train;
  if (train && rng == nullptr) throw ContractError("train mode needs a random stream");
  RandomStream* noise = train ? rng : nullptr;

  Var px = masks_.px(tape);
  Var v = masks_.v(tape);
  SubjectForward out;
  std::vector<Var> hidden(layers_.size());
  Var z;
  double previous_month = graph.snapshots.front().month;
  for (std::size_t t = 0; t < graph.snapshots.size(); ++t) {
    const GraphSnapshot& snap = graph.snapshots[t];
    const double dt = (snap.month - previous_month) / config_.months_per_unit;
    previous_month = snap.month;
    MaskedSlice slice = mask_inputs(tape, snap.adjacency, snap.features, px, v);
    out.edge_masks.pa.push_back(slice.pa);
    out.edge_masks.support.push_back(std::move(slice.support));
    out.weighted_adjacency.push_back(slice.adjacency);
    Var norm_a = normalize_adjacency(slice.adjacency);
    z = slice.features;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const EvolvingLayer& layer = layers_[l];
      Var prior = t == 0 ? layer.initial(tape) : hidden[l];
      hidden[l] = layer.evolve(tape, prior, layer.summarize(tape, z), t == 0 ? 0.0 : dt, config_.steps_per_unit,
                               noise);
      z = gcn_forward(norm_a, z, hidden[l]);
    }
  }
  Var x = readout(z);
  x = relu(head_[0](tape, x));
  if (train) x = dropout(tape, x, config_.dropout, *rng);
  x = relu(head_[1](tape, x));
  if (train) x = dropout(tape, x, config_.dropout, *rng);
  out.probability = sigmoid(head_[2](tape, x));
  return out;
}

double StgnnModel::predict(const DynamicGraph& graph) const {
  Tape tape;
  return forward(tape, graph, Mode::eval, nullptr).probability.scalar();
}

}  // namespace connectoflow
