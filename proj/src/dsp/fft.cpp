#include "trunet/dsp/fft.hpp"

#include <fftw3.h>

#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>

namespace trunet::dsp {

namespace {
// FFTW's planner is not re-entrant.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

RealFft::RealFft(std::size_t n) : n_(n) {
  if (n < 2) throw std::invalid_argument("RealFft: size must be at least 2");
  std::lock_guard lock(planner_mutex());
  real_ = fftw_alloc_real(n);
  auto* spec = fftw_alloc_complex(n / 2 + 1);
  spec_ = spec;
  plan_fwd_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), real_, spec, FFTW_ESTIMATE);
  plan_inv_ = fftw_plan_dft_c2r_1d(static_cast<int>(n), spec, real_, FFTW_ESTIMATE);
}

RealFft::~RealFft() {
  std::lock_guard lock(planner_mutex());
  fftw_destroy_plan(static_cast<fftw_plan>(plan_fwd_));
  fftw_destroy_plan(static_cast<fftw_plan>(plan_inv_));
  fftw_free(real_);
  fftw_free(spec_);
}

void RealFft::forward(std::span<const double> in, std::span<std::complex<double>> out) {
  if (in.size() != n_ || out.size() != n_ / 2 + 1) throw std::invalid_argument("RealFft::forward: size mismatch");
  std::copy(in.begin(), in.end(), real_);
  fftw_execute(static_cast<fftw_plan>(plan_fwd_));
  const auto* spec = static_cast<const fftw_complex*>(spec_);
  for (std::size_t f = 0; f < out.size(); ++f) out[f] = {spec[f][0], spec[f][1]};
}

void RealFft::inverse(std::span<const std::complex<double>> in, std::span<double> out) {
  if (in.size() != n_ / 2 + 1 || out.size() != n_) throw std::invalid_argument("RealFft::inverse: size mismatch");
  auto* spec = static_cast<fftw_complex*>(spec_);
  for (std::size_t f = 0; f < in.size(); ++f) {
    spec[f][0] = in[f].real();
    spec[f][1] = in[f].imag();
  }
  fftw_execute(static_cast<fftw_plan>(plan_inv_));
  std::copy(real_, real_ + n_, out.begin());
}

RealFft& real_fft(std::size_t n) {
  thread_local std::map<std::size_t, std::unique_ptr<RealFft>> cache;
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<RealFft>(n);
  return *slot;
}

std::vector<double> fft_convolve(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) return {};
  const std::size_t out_len = a.size() + b.size() - 1;
  std::size_t n = 2;
  while (n < out_len) n <<= 1;
  RealFft& fft = real_fft(n);
  std::vector<double> buf(n, 0.0);
  std::vector<std::complex<double>> fa(n / 2 + 1), fb(n / 2 + 1);
  std::copy(a.begin(), a.end(), buf.begin());
  fft.forward(buf, fa);
  std::fill(buf.begin(), buf.end(), 0.0);
  std::copy(b.begin(), b.end(), buf.begin());
  fft.forward(buf, fb);
  for (std::size_t f = 0; f < fa.size(); ++f) fa[f] *= fb[f];
  fft.inverse(fa, buf);
  buf.resize(out_len);
  const double inv = 1.0 / static_cast<double>(n);
  for (double& v : buf) v *= inv;
  return buf;
}

}  // namespace trunet::dsp
