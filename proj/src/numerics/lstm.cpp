#include "trunet/numerics/lstm.hpp"

#include <vector>

namespace trunet::num {

void add_lstm_params(ParameterStore& store, const std::string& prefix, std::size_t input, std::size_t hidden,
                     Rng& rng) {
  store.add_uniform(prefix + ".w_ih", {input, 4 * hidden}, input, rng);
  store.add_uniform(prefix + ".w_hh", {hidden, 4 * hidden}, hidden, rng);
  store.add_zeros(prefix + ".bias", {4 * hidden});
}

LstmWeights bind_lstm(ParamView& params, const std::string& prefix) {
  return {params(prefix + ".w_ih"), params(prefix + ".w_hh"), params(prefix + ".bias")};
}

LstmState lstm_cell(const Var& projected_input, const LstmState& prev, const Var& w_hh) {
  const std::size_t h = w_hh.dim(0);
  const Var gates = add(projected_input, matmul(prev.h, w_hh));
  const Var i = sigmoid(slice(gates, 1, 0, h));
  const Var f = sigmoid(slice(gates, 1, h, 2 * h));
  const Var g = tanh(slice(gates, 1, 2 * h, 3 * h));
  const Var o = sigmoid(slice(gates, 1, 3 * h, 4 * h));
  const Var c = add(mul(f, prev.c), mul(i, g));
  return {mul(o, tanh(c)), c};
}

Var lstm_layer(const Var& x, const LstmWeights& w, bool reverse) {
  if (x.shape().size() != 2 || x.dim(1) != w.w_ih.dim(0) || w.w_ih.dim(1) != 4 * w.hidden() ||
      w.bias.shape() != Shape{4 * w.hidden()}) {
    throw ShapeError("lstm_layer", "input " + to_string(x.shape()) + " with w_ih " + to_string(w.w_ih.shape()) +
                                       ", w_hh " + to_string(w.w_hh.shape()));
  }
  const std::size_t steps = x.dim(0);
  if (steps == 0) throw ShapeError("lstm_layer", "empty sequence");
  const std::size_t h = w.hidden();
  const Var projected = add_bias(matmul(x, w.w_ih), w.bias);
  LstmState state{constant(Tensor({1, h})), constant(Tensor({1, h}))};
  std::vector<Var> outputs(steps);
  for (std::size_t n = 0; n < steps; ++n) {
    const std::size_t t = reverse ? steps - 1 - n : n;
    state = lstm_cell(slice(projected, 0, t, t + 1), state, w.w_hh);
    outputs[t] = state.h;
  }
  return concat(outputs, 0);
}

Var bilstm_layer(const Var& x, const LstmWeights& forward, const LstmWeights& backward) {
  return concat({lstm_layer(x, forward, false), lstm_layer(x, backward, true)}, 1);
}

}  // namespace trunet::num
