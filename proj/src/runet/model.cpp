#include "trunet/runet/model.hpp"

#include "trunet/numerics/ops.hpp"

namespace trunet::runet {

using num::Shape;
using num::Tensor;

void ModelConfig::validate() const {
  runet.validate();
  stft.validate();
  if (runet.bins != stft.bins()) {
    throw ConfigError("model: RUNet expects " + std::to_string(runet.bins) + " bins but the STFT gives " +
                      std::to_string(stft.bins()));
  }
  const std::size_t expect_in = use_tnet ? 3 * runet.mics : 2 * runet.mics;
  if (runet.in_channels() != expect_in) {
    throw ConfigError("model: RUNet input must have " + std::to_string(expect_in) + " planes, configured " +
                      std::to_string(runet.in_channels()));
  }
  if (use_tnet) {
    tnet.validate();
    if (tnet.bins != stft.bins()) throw ConfigError("model: TNet bins differ from the STFT bins");
  }
  if (reference_channel >= runet.mics) throw ConfigError("model: reference channel out of range");
}

namespace {

ModelConfig make_preset(tnet::Variant variant, dsp::FilterMode mode, std::size_t mics, std::vector<std::size_t> ch,
                        std::size_t lstm, std::size_t blocks, std::size_t heads, std::size_t dim) {
  ModelConfig c;
  c.tnet.variant = variant;
  c.tnet.blocks = blocks;
  c.tnet.heads = heads;
  c.tnet.dim = dim;
  c.tnet.bins = c.stft.bins();
  c.runet.channels = std::move(ch);
  c.runet.lstm_hidden = lstm;
  c.runet.mics = mics;
  c.runet.input_channels = 3 * mics;
  c.runet.bins = c.stft.bins();
  c.runet.mode = mode;
  return c;
}

}  // namespace

ModelConfig toy_preset(tnet::Variant variant, dsp::FilterMode mode) {
  return make_preset(variant, mode, 2, {4, 8}, 32, 1, 2, 8);
}

ModelConfig paper_preset(tnet::Variant variant, dsp::FilterMode mode) {
  return make_preset(variant, mode, 8, {16, 16, 32, 32, 64}, 1200, 4, 16, 1024);
}

void add_model_params(num::ParameterStore& store, const ModelConfig& c, num::Rng& rng) {
  c.validate();
  if (c.use_tnet) {
    tnet::add_tnet_params(store, c.tnet, rng, "tnet");
    const std::size_t d = c.tnet.output_dim(), fp = c.runet.padded_bins();
    store.add_uniform("merge.w", {d, fp}, d, rng);
    store.add_zeros("merge.b", {fp});
  }
  add_runet_params(store, c.runet, rng, "runet");
}

ModelOutput trunet_forward(const dsp::ComplexPlanes& mixture, std::size_t length, const ModelConfig& c,
                           num::ParamView& p) {
  c.validate();
  const Shape& s = mixture.re.shape();
  if (s.size() != 3 || s[0] != c.mics() || s[2] != c.runet.bins) {
    throw ConfigError("model: expected mixture spectra [" + std::to_string(c.mics()) + ", K, " +
                      std::to_string(c.runet.bins) + "], got " + num::to_string(s));
  }
  const std::size_t frames = s[1], fp = c.runet.padded_bins();
  const Var pad = num::constant(Tensor(Shape{s[0], frames, fp - s[2]}, 0.0));
  std::vector<Var> planes{num::concat({mixture.re, pad}, 2), num::concat({mixture.im, pad}, 2)};
  if (c.use_tnet) {
    // [K, M, D'] -> [K, M, F'] -> [M, K, F']
    const Var t = tnet::tnet_forward(mixture, c.tnet, p, "tnet");
    const Var merged = num::add_bias(num::matmul(t, p("merge.w")), p("merge.b"));
    planes.push_back(num::permute(merged, {1, 0, 2}));
  }
  const Var decoded = encoder_decoder(num::concat(planes, 0), c.runet, p, "runet");
  const std::vector<dsp::ComplexPlanes> heads = filter_heads(decoded, c.runet, p, "runet");

  ModelOutput out;
  for (const auto& h : heads) {
    dsp::FilterSet set{c.runet.mode, {h}, c.reference_channel};
    dsp::ComplexPlanes est = dsp::apply_filter(set, mixture)[0];
    Var wave = dsp::istft(est, c.stft, length);
    out.consistent.push_back(dsp::stft(wave, c.stft));
    out.filters.push_back(std::move(set));
    out.estimates.push_back(std::move(est));
    out.waves.push_back(std::move(wave));
  }
  return out;
}

std::vector<dsp::MultiWave> separate(const dsp::MultiWave& mixture, const ModelConfig& c,
                                     const num::ParameterStore& params) {
  if (mixture.channels() != c.mics()) {
    throw ConfigError("separate: input has " + std::to_string(mixture.channels()) + " channels, the model expects M=" +
                      std::to_string(c.mics()));
  }
  const dsp::Spectra spec = dsp::stft(mixture, c.stft);
  num::ParamView view(params, nullptr);
  const ModelOutput out = trunet_forward(spec.as_constants(), mixture.samples(), c, view);
  std::vector<dsp::MultiWave> waves;
  for (const Var& w : out.waves) waves.emplace_back(w.value(), mixture.sample_rate());
  return waves;
}

}  // namespace trunet::runet
