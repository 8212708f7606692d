#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace trunet::dsp {

// Real-input FFT of a fixed size backed by FFTW. Instances are not safe for
// concurrent use; `real_fft` hands out one per thread and size.
class RealFft {
 public:
  explicit RealFft(std::size_t n);
  ~RealFft();
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  std::size_t size() const { return n_; }

  // out[f] = sum_n in[n] exp(-2 pi i f n / N), f = 0..N/2
  void forward(std::span<const double> in, std::span<std::complex<double>> out);
  // Unnormalised Hermitian inverse: out[n] = sum_{f=0}^{N-1} Z[f] exp(+2 pi i f n / N)
  // where Z extends `in` by conjugate symmetry. Imaginary parts of the DC and
  // Nyquist bins are ignored.
  void inverse(std::span<const std::complex<double>> in, std::span<double> out);

 private:
  std::size_t n_;
  double* real_ = nullptr;
  void* spec_ = nullptr;
  void* plan_fwd_ = nullptr;
  void* plan_inv_ = nullptr;
};

RealFft& real_fft(std::size_t n);

// Full linear convolution, length a.size() + b.size() - 1.
std::vector<double> fft_convolve(std::span<const double> a, std::span<const double> b);

}  // namespace trunet::dsp
