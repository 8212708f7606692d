#include "trunet/runet/runet.hpp"

#include "trunet/numerics/lstm.hpp"
#include "trunet/numerics/ops.hpp"

namespace trunet::runet {

using num::Shape;
using num::Tensor;

std::size_t RUNetConfig::padded_bins() const {
  const std::size_t step = std::size_t{1} << layers();
  return (bins + step - 1) / step * step;
}

void RUNetConfig::validate() const {
  if (channels.empty()) throw ConfigError("runet: at least one encoder layer required");
  for (std::size_t c : channels) {
    if (c == 0) throw ConfigError("runet: channel counts must be positive");
  }
  if (kernel_time == 0 || kernel_freq < 2 || kernel_freq % 2 != 0) {
    throw ConfigError("runet: kernel must have positive time extent and even frequency extent");
  }
  if (mics == 0 || bins == 0 || sources == 0 || lstm_hidden == 0) {
    throw ConfigError("runet: M, F, source count and BLSTM width must be positive");
  }
}

num::ConvGeometry encoder_geometry(const RUNetConfig& c) {
  num::ConvGeometry g;
  g.stride_h = 1;
  g.stride_w = 2;
  g.pad_top = c.kernel_time / 2;
  g.pad_bottom = c.kernel_time - 1 - c.kernel_time / 2;
  // (W + 2p - k) / 2 + 1 == W / 2 for even W.
  g.pad_left = g.pad_right = (c.kernel_freq - 2) / 2;
  return g;
}

num::ConvGeometry same_geometry(const RUNetConfig& c) {
  num::ConvGeometry g;
  g.pad_top = c.kernel_time / 2;
  g.pad_bottom = c.kernel_time - 1 - c.kernel_time / 2;
  g.pad_left = c.kernel_freq / 2;
  g.pad_right = c.kernel_freq - 1 - c.kernel_freq / 2;
  return g;
}

namespace {

std::string layer(const std::string& prefix, const char* kind, std::size_t l) {
  return prefix + "." + kind + std::to_string(l);
}

std::size_t bridge_width(const RUNetConfig& c) { return c.channels.back() * (c.padded_bins() >> c.layers()); }

}  // namespace

void add_runet_params(num::ParameterStore& store, const RUNetConfig& c, num::Rng& rng, const std::string& prefix) {
  c.validate();
  const std::size_t kk = c.kernel_time * c.kernel_freq;
  std::size_t prev = c.in_channels();
  for (std::size_t l = 1; l <= c.layers(); ++l) {
    const std::size_t ch = c.channels[l - 1];
    store.add_uniform(layer(prefix, "enc", l) + ".w", {ch, prev, c.kernel_time, c.kernel_freq}, prev * kk, rng);
    store.add_zeros(layer(prefix, "enc", l) + ".b", {ch});
    prev = ch;
  }
  const std::size_t width = bridge_width(c), h = c.lstm_hidden;
  num::add_lstm_params(store, prefix + ".blstm1.fwd", width, h, rng);
  num::add_lstm_params(store, prefix + ".blstm1.bwd", width, h, rng);
  num::add_lstm_params(store, prefix + ".blstm2.fwd", 2 * h, h, rng);
  num::add_lstm_params(store, prefix + ".blstm2.bwd", 2 * h, h, rng);
  store.add_uniform(prefix + ".bridge_out.w", {2 * h, width}, 2 * h, rng);
  store.add_zeros(prefix + ".bridge_out.b", {width});
  for (std::size_t l = c.layers(); l >= 1; --l) {
    const std::size_t ch = c.channels[l - 1];
    const std::size_t out = l == 1 ? c.mics : c.channels[l - 2];
    store.add_uniform(layer(prefix, "skip", l) + ".w", {ch, ch, 1, 1}, ch, rng);
    store.add_zeros(layer(prefix, "skip", l) + ".b", {ch});
    // Transposed convolution weights are [C_in, C_out, kh, kw].
    store.add_uniform(layer(prefix, "dec", l) + ".w", {ch, out, c.kernel_time, c.kernel_freq}, ch * kk, rng);
    store.add_zeros(layer(prefix, "dec", l) + ".b", {out});
  }
  if (c.mode == dsp::FilterMode::kSingleChannel) {
    store.add_uniform(prefix + ".single.w", {1, c.mics, c.kernel_time, c.kernel_freq}, c.mics * kk, rng);
    store.add_zeros(prefix + ".single.b", {1});
  }
  const std::size_t fp = c.padded_bins();
  store.add_uniform(prefix + ".head.w", {fp, 2 * c.sources * c.bins}, fp, rng);
  store.add_zeros(prefix + ".head.b", {2 * c.sources * c.bins});
}

std::vector<Var> encode(const Var& x, const RUNetConfig& c, num::ParamView& p, const std::string& prefix) {
  c.validate();
  if (x.shape().size() != 3 || x.dim(0) != c.in_channels()) {
    throw num::ShapeError("runet.encode", "expected [" + std::to_string(c.in_channels()) + ", K, F'], got " +
                                              num::to_string(x.shape()));
  }
  const std::size_t step = std::size_t{1} << c.layers();
  if (x.dim(2) % step != 0) {
    throw ConfigError("runet: frequency width " + std::to_string(x.dim(2)) + " cannot pass " +
                      std::to_string(c.layers()) + " stride-2 layers and be restored; pad it to a multiple of " +
                      std::to_string(step) + " (" + std::to_string((x.dim(2) + step - 1) / step * step) + ")");
  }
  const num::ConvGeometry g = encoder_geometry(c);
  std::vector<Var> out;
  Var h = x;
  for (std::size_t l = 1; l <= c.layers(); ++l) {
    const Var b = p(layer(prefix, "enc", l) + ".b");
    h = num::leaky_relu(num::conv2d(h, p(layer(prefix, "enc", l) + ".w"), &b, g));
    out.push_back(h);
  }
  return out;
}

Var blstm_bridge(const Var& encoded, const RUNetConfig& c, num::ParamView& p, const std::string& prefix) {
  if (encoded.shape().size() != 3 || encoded.dim(0) * encoded.dim(2) != bridge_width(c)) {
    throw num::ShapeError("runet.blstm_bridge", "expected " + std::to_string(bridge_width(c)) +
                                                    " features per frame, got " + num::to_string(encoded.shape()));
  }
  const Shape s = encoded.shape();  // [C_L, K, F_L]
  const std::size_t frames = s[1], width = s[0] * s[2];
  const Var seq = num::reshape(num::permute(encoded, {1, 0, 2}), {frames, width});
  const Var b1 = num::bilstm_layer(seq, num::bind_lstm(p, prefix + ".blstm1.fwd"),
                                   num::bind_lstm(p, prefix + ".blstm1.bwd"));
  const Var b2 = num::bilstm_layer(b1, num::bind_lstm(p, prefix + ".blstm2.fwd"),
                                   num::bind_lstm(p, prefix + ".blstm2.bwd"));
  const Var out = num::add_bias(num::matmul(b1 + b2, p(prefix + ".bridge_out.w")), p(prefix + ".bridge_out.b"));
  return num::permute(num::reshape(out, {frames, s[0], s[2]}), {1, 0, 2});
}

Var decode(const Var& bridged, const std::vector<Var>& skips, const RUNetConfig& c, num::ParamView& p,
           const std::string& prefix) {
  const num::ConvGeometry g = encoder_geometry(c);
  const num::ConvGeometry one;  // 1x1, stride 1, no padding
  Var h = bridged;
  for (std::size_t l = c.layers(); l >= 1; --l) {
    const Var sb = p(layer(prefix, "skip", l) + ".b");
    const Var in = h + num::conv2d(skips[l - 1], p(layer(prefix, "skip", l) + ".w"), &sb, one);
    const Var db = p(layer(prefix, "dec", l) + ".b");
    h = num::leaky_relu(num::conv2d_transpose(in, p(layer(prefix, "dec", l) + ".w"), &db, g));
  }
  if (c.mode == dsp::FilterMode::kSingleChannel) {
    const Var b = p(prefix + ".single.b");
    h = num::leaky_relu(num::conv2d(h, p(prefix + ".single.w"), &b, same_geometry(c)));
  }
  return h;
}

Var encoder_decoder(const Var& x, const RUNetConfig& c, num::ParamView& p, const std::string& prefix) {
  const std::vector<Var> skips = encode(x, c, p, prefix);
  return decode(blstm_bridge(skips.back(), c, p, prefix), skips, c, p, prefix);
}

std::vector<dsp::ComplexPlanes> filter_heads(const Var& decoded, const RUNetConfig& c, num::ParamView& p,
                                             const std::string& prefix) {
  const Var y = num::tanh(num::add_bias(num::matmul(decoded, p(prefix + ".head.w")), p(prefix + ".head.b")));
  std::vector<dsp::ComplexPlanes> out;
  for (std::size_t s = 0; s < c.sources; ++s) {
    const std::size_t base = 2 * s * c.bins;
    out.push_back({num::slice(y, 2, base, base + c.bins), num::slice(y, 2, base + c.bins, base + 2 * c.bins)});
  }
  return out;
}

}  // namespace trunet::runet
