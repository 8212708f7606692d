#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace trunet::metrics {

class MetricError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

constexpr double kCapDb = 60.0;

// 10 log10(|a t|^2 / |e - a t|^2), a = <e, t> / |t|^2, clamped to +-60 dB.
double si_sdr(std::span<const double> estimate, std::span<const double> target);

// Projection SIR: with P_t the projection onto the target and P_ti onto
// span{target, interferer}, 10 log10(|P_t e|^2 / |P_ti e - P_t e|^2),
// clamped to +-60 dB. Throws when the references are (nearly) collinear.
double sir(std::span<const double> estimate, std::span<const double> target, std::span<const double> interferer);

struct SourceScores {
  double sdr = 0.0;          // separated estimate
  double sdr_mixture = 0.0;  // unprocessed reference channel
  double sir = 0.0;
  double sir_mixture = 0.0;
  double delta_sdr() const { return sdr - sdr_mixture; }
  double delta_sir() const { return sir - sir_mixture; }
};

struct UtteranceReport {
  std::string id;
  // separated[permutation[s]] is scored against target s.
  std::vector<std::size_t> permutation;
  std::vector<SourceScores> sources;
  double delta_sdr() const;  // mean over sources
  double delta_sir() const;
};

// Scores one utterance. All signals are mono and of equal length; the
// assignment maximises the summed SI-SDR (exhaustive, first on ties).
UtteranceReport evaluate(const std::vector<std::vector<double>>& separated,
                         const std::vector<std::vector<double>>& targets, std::span<const double> mixture,
                         const std::string& id = "");

struct EvalReport {
  std::vector<UtteranceReport> utterances;
  double mean_delta_sdr() const;
  double mean_delta_sir() const;

  // One JSON object per utterance, then one {"aggregate": ...} line.
  std::string to_jsonl() const;
  std::string to_table() const;
};

}  // namespace trunet::metrics
