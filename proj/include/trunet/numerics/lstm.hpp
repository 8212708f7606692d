#pragma once

#include <string>
#include <utility>

#include "trunet/numerics/ops.hpp"
#include "trunet/numerics/params.hpp"

namespace trunet::num {

// Gate blocks along the 4H axis are ordered input, forget, cell, output.
struct LstmWeights {
  Var w_ih;  // [F, 4H]
  Var w_hh;  // [H, 4H]
  Var bias;  // [4H]

  std::size_t hidden() const { return w_hh.dim(0); }
};

void add_lstm_params(ParameterStore& store, const std::string& prefix, std::size_t input, std::size_t hidden,
                     Rng& rng);
LstmWeights bind_lstm(ParamView& params, const std::string& prefix);

struct LstmState {
  Var h;  // [1, H]
  Var c;  // [1, H]
};

// One step given the already-projected input x_t W_ih + b of shape [1, 4H].
LstmState lstm_cell(const Var& projected_input, const LstmState& prev, const Var& w_hh);

// x[T, F] -> [T, H]. With `reverse` the recurrence runs from t = T-1 down to
// 0 and outputs stay aligned with their input frames.
Var lstm_layer(const Var& x, const LstmWeights& w, bool reverse);

// x[T, F] -> [T, 2H]: forward half then backward half along the feature axis.
Var bilstm_layer(const Var& x, const LstmWeights& forward, const LstmWeights& backward);

}  // namespace trunet::num
