#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "trunet/dsp/stft.hpp"

namespace trunet::loss {

using num::Var;

class LossError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Mode { kCmse, kCombined };

std::string to_string(Mode m);
Mode parse_mode(const std::string& name);  // "cmse" or "combined"

constexpr double kMagFloor = 1e-8;
constexpr double kLogFloor = 1e-10;

struct LossConfig {
  Mode mode = Mode::kCombined;
  double c = 0.3;
  double alpha = 0.7;

  void validate() const;
  // Set for exponents below 0.2, where training tends to diverge.
  std::optional<std::string> warning() const;
};

// |X|^c e^{j angle X}, computed as X * m^(c-1) with m = sqrt(|X|^2 + kMagFloor^2),
// so the magnitude never drops below kMagFloor and silent bins stay finite.
dsp::ComplexPlanes compress(const dsp::ComplexPlanes& x, double c);

// log10(max(sum |compress(X) - compress(Xhat)|^2, kLogFloor)) over all bins.
Var cmse(const dsp::ComplexPlanes& target, const dsp::ComplexPlanes& estimate, double c);
// alpha * cmse(c) + (1 - alpha) * cmse(1 - c); c in (0, 1), alpha in [0, 1].
Var combined_loss(const dsp::ComplexPlanes& target, const dsp::ComplexPlanes& estimate, double c, double alpha);
// Dispatches on config.mode.
Var loss(const dsp::ComplexPlanes& target, const dsp::ComplexPlanes& estimate, const LossConfig& config);

double cmse(const dsp::Spectra& target, const dsp::Spectra& estimate, double c);
double combined_loss(const dsp::Spectra& target, const dsp::Spectra& estimate, double c, double alpha);

using PairLoss = std::function<Var(const dsp::ComplexPlanes& target, const dsp::ComplexPlanes& estimate)>;

struct PitResult {
  Var loss;  // mean over sources of the per-source loss
  // estimate permutation[s] is assigned to target s.
  std::vector<std::size_t> permutation;
};

// Utterance-level permutation invariant loss: one assignment for the whole
// utterance, the one minimising the summed per-source loss (exhaustive over
// S! assignments). Ties go to the lexicographically first permutation.
PitResult upit(const std::vector<dsp::ComplexPlanes>& targets, const std::vector<dsp::ComplexPlanes>& estimates,
               const PairLoss& pair_loss);

}  // namespace trunet::loss
