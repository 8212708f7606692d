#include "trunet/dsp/stft.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <string>

#include "trunet/dsp/fft.hpp"
#include "trunet/numerics/ops.hpp"

namespace trunet::dsp {

using num::Node;
using num::Shape;
using num::Tensor;
using num::Var;

void StftConfig::validate() const {
  if (frame < 2 || (frame & (frame - 1)) != 0) {
    throw DspError("stft: frame length must be a power of two >= 2, got " + std::to_string(frame));
  }
  if (hop == 0 || hop > frame) throw DspError("stft: hop must be in [1, frame], got " + std::to_string(hop));
}

std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double s = std::sin(std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
    w[i] = s * s;
  }
  return w;
}

std::size_t num_frames(std::size_t length, const StftConfig& config) {
  config.validate();
  if (length < config.frame) {
    throw DspError("stft: signal of " + std::to_string(length) + " samples is shorter than one frame (" +
                   std::to_string(config.frame) + ")");
  }
  return 1 + (length - config.frame + config.hop - 1) / config.hop;
}

std::size_t padded_length(std::size_t length, const StftConfig& config) {
  return config.frame + (num_frames(length, config) - 1) * config.hop;
}

SampleRange interior(std::size_t length, const StftConfig& config) {
  const std::size_t padded = padded_length(length, config);
  SampleRange r{config.hop, std::min(length, padded - config.hop)};
  if (r.end < r.begin) r.end = r.begin;
  return r;
}

std::vector<double> window_power_sum(std::size_t length, const StftConfig& config) {
  const std::size_t frames = num_frames(length, config);
  const auto w = hann_window(config.frame);
  std::vector<double> norm(padded_length(length, config), 0.0);
  for (std::size_t k = 0; k < frames; ++k) {
    for (std::size_t n = 0; n < config.frame; ++n) norm[k * config.hop + n] += w[n] * w[n];
  }
  return norm;
}

void Spectra::validate() const {
  config.validate();
  if (re.rank() != 3 || re.shape() != im.shape()) {
    throw DspError("Spectra: planes must be [M, K, F] and equal, got " + num::to_string(re.shape()) + " and " +
                   num::to_string(im.shape()));
  }
  if (bins() != config.bins()) {
    throw DspError("Spectra: " + std::to_string(bins()) + " bins inconsistent with frame " +
                   std::to_string(config.frame));
  }
  if (length == 0 || frames() != num_frames(length, config)) {
    throw DspError("Spectra: " + std::to_string(frames()) + " frames inconsistent with length " +
                   std::to_string(length));
  }
}

ComplexPlanes Spectra::as_constants() const { return {num::constant(re), num::constant(im)}; }

namespace {

struct Framing {
  std::size_t channels, length, frames, frame, hop, bins;
};

Framing framing_for(std::size_t channels, std::size_t length, const StftConfig& c) {
  return {channels, length, num_frames(length, c), c.frame, c.hop, c.bins()};
}

// wave [M, N] -> (re, im) [M, K, F]
void analysis(const Framing& fr, const double* x, double* re, double* im) {
  RealFft& fft = real_fft(fr.frame);
  const auto w = hann_window(fr.frame);
  std::vector<double> buf(fr.frame);
  std::vector<std::complex<double>> spec(fr.bins);
  for (std::size_t m = 0; m < fr.channels; ++m) {
    for (std::size_t k = 0; k < fr.frames; ++k) {
      const std::size_t start = k * fr.hop;
      for (std::size_t n = 0; n < fr.frame; ++n) {
        const std::size_t t = start + n;
        buf[n] = t < fr.length ? w[n] * x[m * fr.length + t] : 0.0;
      }
      fft.forward(buf, spec);
      const std::size_t base = (m * fr.frames + k) * fr.bins;
      for (std::size_t f = 0; f < fr.bins; ++f) {
        re[base + f] = spec[f].real();
        im[base + f] = spec[f].imag();
      }
    }
  }
}

// Adjoint of `analysis`: (gre, gim) -> gx, accumulated.
void analysis_adjoint(const Framing& fr, const double* gre, const double* gim, double* gx) {
  RealFft& fft = real_fft(fr.frame);
  const auto w = hann_window(fr.frame);
  std::vector<double> buf(fr.frame);
  std::vector<std::complex<double>> spec(fr.bins);
  const std::size_t nyq = fr.bins - 1;
  for (std::size_t m = 0; m < fr.channels; ++m) {
    for (std::size_t k = 0; k < fr.frames; ++k) {
      const std::size_t base = (m * fr.frames + k) * fr.bins;
      // Re sum_f G_f e^{+i theta} via the Hermitian inverse: halve interior bins.
      for (std::size_t f = 0; f < fr.bins; ++f) {
        if (f == 0 || f == nyq) {
          spec[f] = {gre[base + f], 0.0};
        } else {
          spec[f] = {0.5 * gre[base + f], 0.5 * gim[base + f]};
        }
      }
      fft.inverse(spec, buf);
      const std::size_t start = k * fr.hop;
      for (std::size_t n = 0; n < fr.frame; ++n) {
        const std::size_t t = start + n;
        if (t < fr.length) gx[m * fr.length + t] += w[n] * buf[n];
      }
    }
  }
}

// (re, im) [M, K, F] -> wave [M, N], weighted overlap-add.
void synthesis(const Framing& fr, const std::vector<double>& norm, const double* re, const double* im, double* x) {
  RealFft& fft = real_fft(fr.frame);
  const auto w = hann_window(fr.frame);
  std::vector<double> buf(fr.frame);
  std::vector<std::complex<double>> spec(fr.bins);
  std::vector<double> acc(norm.size());
  const double inv_n = 1.0 / static_cast<double>(fr.frame);
  for (std::size_t m = 0; m < fr.channels; ++m) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t k = 0; k < fr.frames; ++k) {
      const std::size_t base = (m * fr.frames + k) * fr.bins;
      for (std::size_t f = 0; f < fr.bins; ++f) spec[f] = {re[base + f], im[base + f]};
      fft.inverse(spec, buf);
      for (std::size_t n = 0; n < fr.frame; ++n) acc[k * fr.hop + n] += w[n] * buf[n] * inv_n;
    }
    for (std::size_t t = 0; t < fr.length; ++t) x[m * fr.length + t] = acc[t] / std::max(norm[t], kWolaFloor);
  }
}

// Adjoint of `synthesis`: gx -> (gre, gim), accumulated.
void synthesis_adjoint(const Framing& fr, const std::vector<double>& norm, const double* gx, double* gre, double* gim) {
  RealFft& fft = real_fft(fr.frame);
  const auto w = hann_window(fr.frame);
  std::vector<double> buf(fr.frame);
  std::vector<std::complex<double>> spec(fr.bins);
  std::vector<double> g(norm.size());
  const double inv_n = 1.0 / static_cast<double>(fr.frame);
  const std::size_t nyq = fr.bins - 1;
  for (std::size_t m = 0; m < fr.channels; ++m) {
    std::fill(g.begin(), g.end(), 0.0);
    for (std::size_t t = 0; t < fr.length; ++t) g[t] = gx[m * fr.length + t] / std::max(norm[t], kWolaFloor);
    for (std::size_t k = 0; k < fr.frames; ++k) {
      for (std::size_t n = 0; n < fr.frame; ++n) buf[n] = w[n] * g[k * fr.hop + n] * inv_n;
      fft.forward(buf, spec);
      const std::size_t base = (m * fr.frames + k) * fr.bins;
      for (std::size_t f = 0; f < fr.bins; ++f) {
        if (f == 0 || f == nyq) {
          gre[base + f] += spec[f].real();
        } else {
          gre[base + f] += 2.0 * spec[f].real();
          gim[base + f] += 2.0 * spec[f].imag();
        }
      }
    }
  }
}

}  // namespace

ComplexPlanes stft(const Var& wave, const StftConfig& config) {
  if (wave.shape().size() != 2) throw DspError("stft: expected a [M, N] wave, got " + num::to_string(wave.shape()));
  const Framing fr = framing_for(wave.dim(0), wave.dim(1), config);
  // One node holds both planes stacked as [2, M, K, F] so the backward is a
  // single joint adjoint; the planes are slices of it.
  const std::size_t plane = fr.channels * fr.frames * fr.bins;
  Tensor both(Shape{2, fr.channels, fr.frames, fr.bins});
  analysis(fr, wave.value().ptr(), both.ptr(), both.ptr() + plane);
  Var joint = num::detail::make_result("stft", std::move(both), {&wave}, [wave, fr, plane](Node& self) {
    analysis_adjoint(fr, self.grad.ptr(), self.grad.ptr() + plane, wave.node()->grad_buffer().ptr());
  });
  const Shape s{fr.channels, fr.frames, fr.bins};
  return {num::reshape(num::slice(joint, 0, 0, 1), s), num::reshape(num::slice(joint, 0, 1, 2), s)};
}

Var istft(const ComplexPlanes& spec, const StftConfig& config, std::size_t length) {
  const Shape& s = spec.re.shape();
  if (s.size() != 3 || spec.im.shape() != s) {
    throw DspError("istft: planes must be [M, K, F] and equal, got " + num::to_string(s) + " and " +
                   num::to_string(spec.im.shape()));
  }
  const Framing fr = framing_for(s[0], length, config);
  if (s[1] != fr.frames || s[2] != fr.bins) {
    throw DspError("istft: spectra " + num::to_string(s) + " inconsistent with length " + std::to_string(length) +
                   " and frame " + std::to_string(config.frame));
  }
  const auto norm = window_power_sum(length, config);
  Tensor x(Shape{fr.channels, length});
  synthesis(fr, norm, spec.re.value().ptr(), spec.im.value().ptr(), x.ptr());
  const Var re = spec.re, im = spec.im;
  return num::detail::make_result("istft", std::move(x), {&re, &im}, [re, im, fr, norm](Node& self) {
    Tensor gre(re.shape()), gim(im.shape());
    synthesis_adjoint(fr, norm, self.grad.ptr(), gre.ptr(), gim.ptr());
    for (auto [v, g] : {std::pair{re, &gre}, std::pair{im, &gim}}) {
      if (!v.requires_grad()) continue;
      double* dst = v.node()->grad_buffer().ptr();
      for (std::size_t i = 0; i < g->size(); ++i) dst[i] += (*g)[i];
    }
  });
}

ComplexPlanes consistency_projection(const ComplexPlanes& spec, const StftConfig& config, std::size_t length) {
  return stft(istft(spec, config, length), config);
}

Spectra stft(const MultiWave& wave, const StftConfig& config) {
  const ComplexPlanes p = stft(num::constant(wave.tensor()), config);
  Spectra s{p.re.value(), p.im.value(), config, wave.samples(), wave.sample_rate()};
  return s;
}

MultiWave istft(const Spectra& spec) {
  spec.validate();
  const Var x = istft(spec.as_constants(), spec.config, spec.length);
  return MultiWave(x.value(), spec.sample_rate);
}

}  // namespace trunet::dsp
