#pragma once

#include <cstddef>
#include <vector>

#include "trunet/dsp/wave.hpp"
#include "trunet/numerics/tape.hpp"

namespace trunet::dsp {

// Periodic Hann analysis and synthesis window.
struct StftConfig {
  std::size_t frame = 512;
  std::size_t hop = 256;

  std::size_t bins() const { return frame / 2 + 1; }
  void validate() const;
};

std::vector<double> hann_window(std::size_t n);

// Framing: frame k covers samples [k*hop, k*hop + frame). The first frame is
// left-aligned at sample 0 and the signal is zero-padded at the end up to
// frame + (K-1)*hop samples, K = 1 + ceil((length - frame) / hop).
std::size_t num_frames(std::size_t length, const StftConfig& config);
std::size_t padded_length(std::size_t length, const StftConfig& config);

// Samples [begin, end) covered by two overlapping frames at 50% overlap;
// reconstruction guarantees are stated for this region only.
struct SampleRange {
  std::size_t begin = 0;
  std::size_t end = 0;
};
SampleRange interior(std::size_t length, const StftConfig& config);

// Synthesis-window floor: iSTFT divides the overlap-added signal by
// max(sum_k w^2(t - k hop), kWolaFloor). Interior sums are >= 0.5.
constexpr double kWolaFloor = 1e-3;

// Complex spectra as two real planes of shape [M, K, F].
struct ComplexPlanes {
  num::Var re;
  num::Var im;
};

// Value-level spectra with the metadata of the STFT that produced them.
struct Spectra {
  num::Tensor re;  // [M, K, F]
  num::Tensor im;
  StftConfig config;
  std::size_t length = 0;  // time samples of the analysed signal
  int sample_rate = kDefaultSampleRate;

  std::size_t channels() const { return re.dim(0); }
  std::size_t frames() const { return re.dim(1); }
  std::size_t bins() const { return re.dim(2); }
  void validate() const;

  ComplexPlanes as_constants() const;
};

Spectra stft(const MultiWave& wave, const StftConfig& config = {});
MultiWave istft(const Spectra& spec);

// Differentiable forms. `wave` is [M, N]; spectra planes are [M, K, F].
ComplexPlanes stft(const num::Var& wave, const StftConfig& config);
num::Var istft(const ComplexPlanes& spec, const StftConfig& config, std::size_t length);

// istft followed by stft: projects spectra onto the set of consistent spectra.
ComplexPlanes consistency_projection(const ComplexPlanes& spec, const StftConfig& config, std::size_t length);

// Per-sample overlap-added squared window, length padded_length(length).
std::vector<double> window_power_sum(std::size_t length, const StftConfig& config);

}  // namespace trunet::dsp
