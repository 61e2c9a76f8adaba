#include "connectoflow/nn.hpp"

#include <cmath>

namespace connectoflow::nn {

Matrix glorot_uniform(std::size_t fan_in, std::size_t fan_out, RandomStream& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return rng.uniform_matrix(fan_in, fan_out, -limit, limit);
}

Linear::Linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, RandomStream& rng)
    : weight_(&store.add(name + ".weight", glorot_uniform(in, out, rng))),
      bias_(&store.add(name + ".bias", Matrix(1, out))) {}

Var Linear::operator()(Tape& tape, Var x) const {
  return add_row(matmul(x, tape.param(*weight_)), tape.param(*bias_));
}

Var activate(Var x, Activation act) {
  switch (act) {
    case Activation::tanh:
      return tanh(x);
    case Activation::relu:
      return relu(x);
    case Activation::softplus:
      return softplus(x);
    case Activation::identity:
      break;
  }
  return x;
}

Mlp2::Mlp2(ParamStore& store, const std::string& name, std::size_t in, std::size_t hidden, std::size_t out,
           Activation output, RandomStream& rng)
    : first_(store, name + ".0", in, hidden, rng), second_(store, name + ".1", hidden, out, rng), output_(output) {}

Var Mlp2::operator()(Tape& tape, Var x) const {
  return activate(second_(tape, tanh(first_(tape, x))), output_);
}

GruCell::GruCell(ParamStore& store, const std::string& name, std::size_t in, std::size_t hidden, RandomStream& rng)
    : hidden_(hidden) {
  Matrix wx(in, 3 * hidden), wh(hidden, 3 * hidden);
  for (std::size_t g = 0; g < 3; ++g) {
    Matrix a = glorot_uniform(in, hidden, rng);
    Matrix b = glorot_uniform(hidden, hidden, rng);
    for (std::size_t r = 0; r < in; ++r)
      for (std::size_t c = 0; c < hidden; ++c) wx(r, g * hidden + c) = a(r, c);
    for (std::size_t r = 0; r < hidden; ++r)
      for (std::size_t c = 0; c < hidden; ++c) wh(r, g * hidden + c) = b(r, c);
  }
  input_weight_ = &store.add(name + ".input_weight", std::move(wx));
  hidden_weight_ = &store.add(name + ".hidden_weight", std::move(wh));
  bias_ = &store.add(name + ".bias", Matrix(1, 3 * hidden));
}

Var GruCell::operator()(Tape& tape, Var x, Var h) const {
  const std::size_t n = hidden_;
  Var wx = tape.param(*input_weight_);
  Var wh = tape.param(*hidden_weight_);
  Var b = tape.param(*bias_);
  Var gx = add_row(matmul(x, wx), b);
  // Update and reset gates use the hidden contribution directly; the candidate
  // needs r⊙h, so its hidden product is computed separately.
  Var gh = matmul(h, slice_cols(wh, 0, 2 * n));
  Var update = sigmoid(slice_cols(gx, 0, n) + slice_cols(gh, 0, n));
  Var reset = sigmoid(slice_cols(gx, n, n) + slice_cols(gh, n, n));
  Var candidate = tanh(slice_cols(gx, 2 * n, n) + matmul(mul(reset, h), slice_cols(wh, 2 * n, n)));
  return h + mul(update, candidate - h);
}

}  // namespace connectoflow::nn
