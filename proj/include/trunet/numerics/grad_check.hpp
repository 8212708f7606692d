#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "trunet/numerics/params.hpp"
#include "trunet/numerics/tape.hpp"

namespace trunet::num {

struct GradCheckOptions {
  double step = 1e-5;
  // Five-point central stencil instead of the two-point one. Its O(h^4)
  // truncation error allows a larger step, which keeps round-off small when
  // the checked gradient is tiny compared with the function value.
  bool five_point = false;
  // With the five-point stencil, detects a kink of a piecewise-smooth f
  // (ReLU and friends) within 2h of the point from f alone, never from the
  // tape: the first differences at h and 2h, or h times the second
  // differences at h and 2h, disagree by more than kink_guard relative to
  // the gradient scale plus the rounding level of f. A flagged coordinate is retried with the step
  // divided by 4, up to kink_retries times, and skipped if still flagged.
  // 0 disables. The check fails when more than max_skipped_fraction of the
  // coordinates are skipped.
  double kink_guard = 0.0;
  std::size_t kink_retries = 0;
  // Ridders' extrapolation instead of a fixed stencil: central differences
  // from `step` down by factors of 1.4, extrapolated to zero step, keeping
  // the estimate whose tableau neighbours agree best. Suits functions where
  // no single step is safe for every coordinate. A coordinate whose best
  // error estimate exceeds kink_guard relative to the gradient scale is
  // skipped as unresolved (0 keeps all).
  bool ridders = false;
  std::size_t ridders_levels = 10;
  double max_skipped_fraction = 0.1;
  double tolerance = 1e-4;
  // Components checked per call; 0 checks all. When fewer than the tensor
  // size, coordinates are drawn with `seed`.
  std::size_t max_coords = 0;
  std::uint64_t seed = 1;
  // The relative error denominator is max(|tape|, |fd|, floor) with
  // floor = max(absolute_floor, relative_floor * max_i |tape_i|). Components
  // much smaller than the gradient's scale are thus compared absolutely.
  double absolute_floor = 1e-8;
  double relative_floor = 1e-3;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double worst_tape = 0.0;
  double worst_fd = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
  bool passed = true;

  std::string summary() const;
};

// Scalar-valued graph function of one input. It must build its result from
// `x` only through recorded ops.
using ScalarFn = std::function<Var(const Var& x)>;

// Compares the tape gradient of f at `point` with central finite
// differences. Throws NumericError naming the coordinate when f is not
// finite at a perturbed point.
GradCheckReport grad_check(const ScalarFn& f, const Tensor& point, const GradCheckOptions& options = {});

// Checks every parameter tensor of `store` in turn, holding the others fixed.
using ParamLossFn = std::function<Var(ParamView& params)>;

struct ParamGradCheckReport {
  std::vector<std::pair<std::string, GradCheckReport>> per_param;
  std::string worst_param;
  double max_rel_error = 0.0;
  bool passed = true;

  std::string summary() const;
};

ParamGradCheckReport grad_check_params(const ParameterStore& store, const ParamLossFn& loss,
                                       const GradCheckOptions& options = {});
// Same, with options chosen per tensor name (the usable step depends on how
// strongly the loss responds to that tensor).
using ParamOptionsFn = std::function<GradCheckOptions(const std::string& name)>;
ParamGradCheckReport grad_check_params(const ParameterStore& store, const ParamLossFn& loss,
                                       const ParamOptionsFn& options_for);

}  // namespace trunet::num
