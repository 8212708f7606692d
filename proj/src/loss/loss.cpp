#include "trunet/loss/loss.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "trunet/numerics/ops.hpp"

namespace trunet::loss {

std::string to_string(Mode m) { return m == Mode::kCmse ? "cmse" : "combined"; }

Mode parse_mode(const std::string& name) {
  if (name == "cmse") return Mode::kCmse;
  if (name == "combined") return Mode::kCombined;
  throw LossError("loss.mode must be cmse or combined, got '" + name + "'");
}

void LossConfig::validate() const {
  if (!(c > 0.0 && c <= 1.0)) throw LossError("loss.c must be in (0, 1], got " + std::to_string(c));
  if (mode == Mode::kCombined) {
    if (c >= 1.0) throw LossError("loss.c must be below 1 for the combined loss");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw LossError("loss.alpha must be in [0, 1], got " + std::to_string(alpha));
  }
}

std::optional<std::string> LossConfig::warning() const {
  const double smallest = mode == Mode::kCombined ? std::min(c, 1.0 - c) : c;
  if (smallest < 0.2) {
    return "loss exponent " + std::to_string(smallest) + " is below 0.2; training may become unstable";
  }
  return std::nullopt;
}

namespace {

void check_dims(const dsp::ComplexPlanes& a, const dsp::ComplexPlanes& b) {
  if (a.re.shape() != b.re.shape() || a.im.shape() != a.re.shape() || b.im.shape() != b.re.shape()) {
    throw LossError("cmse: target " + num::to_string(a.re.shape()) + " and estimate " +
                    num::to_string(b.re.shape()) + " differ");
  }
}

}  // namespace

dsp::ComplexPlanes compress(const dsp::ComplexPlanes& x, double c) {
  if (!(c > 0.0 && c <= 1.0)) throw LossError("compression exponent must be in (0, 1], got " + std::to_string(c));
  if (c == 1.0) return x;
  const Var factor = num::pow(num::magnitude(x.re, x.im, kMagFloor * kMagFloor), c - 1.0);
  return {x.re * factor, x.im * factor};
}

Var cmse(const dsp::ComplexPlanes& target, const dsp::ComplexPlanes& estimate, double c) {
  check_dims(target, estimate);
  const dsp::ComplexPlanes t = compress(target, c), e = compress(estimate, c);
  const Var dre = t.re - e.re, dim = t.im - e.im;
  const Var total = num::sum(dre * dre) + num::sum(dim * dim);
  return num::scale(num::log(num::clamp_min(total, kLogFloor)), 1.0 / std::numbers::ln10);
}

Var combined_loss(const dsp::ComplexPlanes& target, const dsp::ComplexPlanes& estimate, double c, double alpha) {
  if (!(c > 0.0 && c < 1.0)) throw LossError("combined loss needs c in (0, 1), got " + std::to_string(c));
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw LossError("alpha must be in [0, 1], got " + std::to_string(alpha));
  if (alpha == 1.0) return cmse(target, estimate, c);
  if (alpha == 0.0) return cmse(target, estimate, 1.0 - c);
  return alpha * cmse(target, estimate, c) + (1.0 - alpha) * cmse(target, estimate, 1.0 - c);
}

Var loss(const dsp::ComplexPlanes& target, const dsp::ComplexPlanes& estimate, const LossConfig& config) {
  config.validate();
  if (config.mode == Mode::kCmse) return cmse(target, estimate, config.c);
  return combined_loss(target, estimate, config.c, config.alpha);
}

double cmse(const dsp::Spectra& target, const dsp::Spectra& estimate, double c) {
  return cmse(target.as_constants(), estimate.as_constants(), c).value()[0];
}

double combined_loss(const dsp::Spectra& target, const dsp::Spectra& estimate, double c, double alpha) {
  return combined_loss(target.as_constants(), estimate.as_constants(), c, alpha).value()[0];
}

PitResult upit(const std::vector<dsp::ComplexPlanes>& targets, const std::vector<dsp::ComplexPlanes>& estimates,
               const PairLoss& pair_loss) {
  const std::size_t s = targets.size();
  if (s == 0 || estimates.size() != s) {
    throw LossError("upit: " + std::to_string(targets.size()) + " targets and " + std::to_string(estimates.size()) +
                    " estimates");
  }
  // pair[t][e]: loss of estimate e against target t.
  std::vector<std::vector<Var>> pair(s);
  for (std::size_t t = 0; t < s; ++t) {
    for (std::size_t e = 0; e < s; ++e) pair[t].push_back(pair_loss(targets[t], estimates[e]));
  }
  std::vector<std::size_t> perm(s), best;
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  double best_total = 0.0;
  do {
    double total = 0.0;
    for (std::size_t t = 0; t < s; ++t) total += pair[t][perm[t]].value()[0];
    if (best.empty() || total < best_total) {
      best_total = total;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  Var sum = pair[0][best[0]];
  for (std::size_t t = 1; t < s; ++t) sum = sum + pair[t][best[t]];
  return {num::scale(sum, 1.0 / static_cast<double>(s)), best};
}

}  // namespace trunet::loss
