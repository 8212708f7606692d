#include "trunet/dsp/wave.hpp"

#include <string>

namespace trunet::dsp {

namespace {
void check_rate(int sample_rate) {
  if (sample_rate <= 0) throw DspError("MultiWave: sample rate must be positive");
}
}  // namespace

MultiWave::MultiWave(std::size_t channels, std::size_t samples, int sample_rate)
    : data_({channels, samples}, 0.0), sample_rate_(sample_rate) {
  if (channels == 0) throw DspError("MultiWave: at least one channel required");
  check_rate(sample_rate);
}

MultiWave::MultiWave(const std::vector<std::vector<double>>& channels, int sample_rate)
    : data_({channels.size(), channels.empty() ? 0 : channels[0].size()}, 0.0), sample_rate_(sample_rate) {
  if (channels.empty()) throw DspError("MultiWave: at least one channel required");
  check_rate(sample_rate);
  const std::size_t n = channels[0].size();
  for (std::size_t m = 0; m < channels.size(); ++m) {
    if (channels[m].size() != n) {
      throw DspError("MultiWave: channel " + std::to_string(m) + " has " + std::to_string(channels[m].size()) +
                     " samples, expected " + std::to_string(n));
    }
    std::copy(channels[m].begin(), channels[m].end(), data_.ptr() + m * n);
  }
}

MultiWave::MultiWave(num::Tensor samples, int sample_rate) : data_(std::move(samples)), sample_rate_(sample_rate) {
  if (data_.rank() != 2 || data_.dim(0) == 0) throw DspError("MultiWave: expected a [M, N] tensor with M >= 1");
  check_rate(sample_rate);
}

std::span<double> MultiWave::channel(std::size_t m) {
  if (m >= channels()) throw DspError("MultiWave: channel " + std::to_string(m) + " out of range");
  return data_.data().subspan(m * samples(), samples());
}

std::span<const double> MultiWave::channel(std::size_t m) const {
  if (m >= channels()) throw DspError("MultiWave: channel " + std::to_string(m) + " out of range");
  return data_.data().subspan(m * samples(), samples());
}

MultiWave MultiWave::select(std::size_t m) const {
  const auto c = channel(m);
  return MultiWave(num::Tensor({1, samples()}, std::vector<double>(c.begin(), c.end())), sample_rate_);
}

double MultiWave::energy() const {
  double e = 0.0;
  for (double v : data_.data()) e += v * v;
  return e;
}

}  // namespace trunet::dsp
