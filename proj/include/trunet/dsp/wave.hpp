#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "trunet/numerics/tensor.hpp"

namespace trunet::dsp {

constexpr int kDefaultSampleRate = 16000;

class DspError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Multi-channel time signal, channel-major. All channels share one length.
class MultiWave {
 public:
  MultiWave(std::size_t channels, std::size_t samples, int sample_rate = kDefaultSampleRate);
  MultiWave(const std::vector<std::vector<double>>& channels, int sample_rate = kDefaultSampleRate);
  // From a [M, N] tensor.
  MultiWave(num::Tensor samples, int sample_rate);

  std::size_t channels() const { return data_.dim(0); }
  std::size_t samples() const { return data_.dim(1); }
  int sample_rate() const { return sample_rate_; }

  std::span<double> channel(std::size_t m);
  std::span<const double> channel(std::size_t m) const;

  // Samples as a [M, N] tensor.
  const num::Tensor& tensor() const { return data_; }

  MultiWave select(std::size_t m) const;
  double energy() const;

 private:
  num::Tensor data_;
  int sample_rate_;
};

}  // namespace trunet::dsp
