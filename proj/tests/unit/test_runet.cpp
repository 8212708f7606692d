#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "test_util.hpp"
#include "trunet/numerics/grad_check.hpp"
#include "trunet/numerics/ops.hpp"
#include "trunet/runet/model.hpp"

using namespace trunet;
using namespace trunet::runet;
using num::Shape;
using num::Tensor;
using trunet::test::random_tensor;

namespace {

RUNetConfig small_runet() {
  RUNetConfig c;
  c.channels = {2, 4};
  c.lstm_hidden = 3;
  c.mics = 2;
  c.bins = 5;  // F' = 8
  return c;
}

// Toy model shrunk to K=3 frames of an 8-point STFT so every parameter can be
// probed by finite differences.
ModelConfig tiny_model(tnet::Variant v, dsp::FilterMode mode, bool use_tnet = true) {
  ModelConfig c = toy_preset(v, mode);
  c.stft = {8, 4};
  c.tnet.bins = 5;
  c.runet.bins = 5;
  c.runet.lstm_hidden = 4;
  c.use_tnet = use_tnet;
  c.runet.input_channels = use_tnet ? 6 : 4;
  return c;
}

dsp::ComplexPlanes planes_of(const dsp::Spectra& s) { return s.as_constants(); }

}  // namespace

TEST_CASE("encoder shape trace halves and restores frequency", "[runet]") {
  RUNetConfig c;
  c.mics = 1;
  c.bins = 256;
  c.lstm_hidden = 2;
  REQUIRE(c.padded_bins() == 256);
  const auto g = encoder_geometry(c);
  std::size_t f = 256;
  std::vector<std::size_t> trace{f};
  for (std::size_t l = 0; l < 5; ++l) trace.push_back(f = num::conv_out_size(f, 6, g.stride_w, g.pad_left, g.pad_right));
  REQUIRE(trace == std::vector<std::size_t>{256, 128, 64, 32, 16, 8});
  REQUIRE(num::conv_out_size(100, 6, g.stride_h, g.pad_top, g.pad_bottom) == 100);
  for (std::size_t l = 0; l < 5; ++l) f = (f - 1) * g.stride_w + 6 - g.pad_left - g.pad_right;
  REQUIRE(f == 256);

  num::ParameterStore ps;
  num::Rng rng(1);
  add_runet_params(ps, c, rng);
  num::ParamView pv(ps, nullptr);
  const auto skips = encode(num::constant(random_tensor({2, 4, 256}, 2)), c, pv);
  REQUIRE(skips.size() == 5);
  REQUIRE(skips.back().shape() == Shape{64, 4, 8});
  REQUIRE(encoder_decoder(num::constant(random_tensor({2, 4, 256}, 2)), c, pv).shape() == Shape{1, 4, 256});
}

TEST_CASE("padded widths and the restorability error", "[runet]") {
  RUNetConfig c = small_runet();
  REQUIRE(c.padded_bins() == 8);
  c.bins = 257;
  REQUIRE(c.padded_bins() == 260);
  c.channels = {16, 16, 32, 32, 64};
  REQUIRE(c.padded_bins() == 288);
  RUNetConfig s = small_runet();
  num::ParameterStore ps;
  num::Rng rng(3);
  add_runet_params(ps, s, rng);
  num::ParamView pv(ps, nullptr);
  REQUIRE_THROWS_WITH(encode(num::constant(Tensor({4, 3, 6})), s, pv),
                      Catch::Matchers::ContainsSubstring("multiple of 4 (8)"));
}

TEST_CASE("zero input gives zero output", "[runet]") {
  const RUNetConfig c = small_runet();
  num::ParameterStore ps;
  num::Rng rng(4);
  add_runet_params(ps, c, rng);
  num::ParamView pv(ps, nullptr);
  const num::Var out = encoder_decoder(num::constant(Tensor({4, 3, 8}, 0.0)), c, pv);
  REQUIRE(out.shape() == Shape{2, 3, 8});
  REQUIRE(num::max_abs(out.value()) == 0.0);
}

TEST_CASE("encoder-decoder gradients match finite differences", "[runet]") {
  const RUNetConfig c = small_runet();
  num::ParameterStore ps;
  num::Rng rng(5);
  add_runet_params(ps, c, rng);
  // Nonzero biases so every path carries signal.
  for (const auto& n : ps.names()) {
    if (n.ends_with(".b") || n.ends_with(".bias")) ps.get(n) = random_tensor(ps.get(n).shape(), 6, -0.2, 0.2);
  }
  const Tensor x = random_tensor({4, 3, 8}, 7), w = random_tensor({2, 3, 8}, 8);
  const auto loss = [&](num::ParamView& pv) {
    return num::sum(encoder_decoder(num::constant(x), c, pv) * num::constant(w));
  };
  num::GradCheckOptions opt;
  opt.max_coords = 40;
  const auto report = num::grad_check_params(ps, loss, opt);
  INFO(report.summary());
  REQUIRE(report.passed);
}

TEST_CASE("bridge with zero LSTM weights passes only the output bias", "[runet]") {
  const RUNetConfig c = small_runet();
  num::ParameterStore ps;
  num::Rng rng(9);
  add_runet_params(ps, c, rng);
  for (const auto& n : ps.names()) {
    if (n.find("blstm") != std::string::npos) ps.get(n).fill(0.0);
  }
  ps.get("runet.bridge_out.b") = random_tensor({8}, 10);
  num::ParamView pv(ps, nullptr);
  const num::Var out = blstm_bridge(num::constant(random_tensor({4, 3, 2}, 11)), c, pv);
  REQUIRE(out.shape() == Shape{4, 3, 2});
  const Tensor& b = ps.get("runet.bridge_out.b");
  for (std::size_t ch = 0; ch < 4; ++ch)
    for (std::size_t k = 0; k < 3; ++k)
      for (std::size_t f = 0; f < 2; ++f) REQUIRE(out.value()[(ch * 3 + k) * 2 + f] == b[ch * 2 + f]);
}

TEST_CASE("bridge over a single frame", "[runet]") {
  const RUNetConfig c = small_runet();
  num::ParameterStore ps;
  num::Rng rng(12);
  add_runet_params(ps, c, rng);
  const Tensor x = random_tensor({4, 1, 2}, 13), w = random_tensor({4, 1, 2}, 14);
  const auto loss = [&](num::ParamView& pv) { return num::sum(blstm_bridge(num::constant(x), c, pv) * num::constant(w)); };
  const auto report = num::grad_check_params(ps, loss);
  INFO(report.summary());
  REQUIRE(report.passed);
}

TEST_CASE("filter heads are tanh bounded and vanish with zero weights", "[runet]") {
  const RUNetConfig c = small_runet();
  num::ParameterStore ps;
  num::Rng rng(15);
  add_runet_params(ps, c, rng);
  num::ParamView pv(ps, nullptr);
  const auto heads = filter_heads(num::constant(random_tensor({2, 3, 8}, 16, -50.0, 50.0)), c, pv);
  REQUIRE(heads.size() == 2);
  for (const auto& h : heads) {
    REQUIRE(h.re.shape() == Shape{2, 3, 5});
    REQUIRE(num::max_abs(h.re.value()) <= 1.0);
    REQUIRE(num::max_abs(h.im.value()) <= 1.0);
  }
  ps.get("runet.head.w").fill(0.0);
  num::ParamView pz(ps, nullptr);
  for (const auto& h : filter_heads(num::constant(random_tensor({2, 3, 8}, 16)), c, pz)) {
    REQUIRE(num::max_abs(h.re.value()) == 0.0);
    REQUIRE(num::max_abs(h.im.value()) == 0.0);
  }
}

TEST_CASE("model shapes round-trip in both filter modes", "[runet]") {
  for (auto mode : {dsp::FilterMode::kMultiChannel, dsp::FilterMode::kSingleChannel}) {
    const ModelConfig c = toy_preset(tnet::Variant::kCat, mode);
    num::ParameterStore ps;
    num::Rng rng(17);
    add_model_params(ps, c, rng);
    const dsp::MultiWave x(random_tensor({2, 3000}, 18, -0.1, 0.1), 16000);
    const dsp::Spectra y = dsp::stft(x, c.stft);
    num::ParamView pv(ps, nullptr);
    const ModelOutput out = trunet_forward(planes_of(y), x.samples(), c, pv);
    REQUIRE(out.waves.size() == 2);
    for (std::size_t s = 0; s < 2; ++s) {
      REQUIRE(out.waves[s].shape() == Shape{1, 3000});
      REQUIRE(out.estimates[s].re.shape() == Shape{1, y.frames(), 257});
      REQUIRE(out.consistent[s].re.shape() == Shape{1, y.frames(), 257});
      REQUIRE(out.filters[s].per_source[0].re.shape() ==
              Shape{mode == dsp::FilterMode::kMultiChannel ? 2u : 1u, y.frames(), 257});
    }
    if (mode == dsp::FilterMode::kMultiChannel) {
      // |sum_m conj(B_m) Y_m| <= M * max_m |Y_m| * sqrt(2) with |Re B|, |Im B| <= 1.
      const std::size_t plane = y.frames() * y.bins();
      for (std::size_t s = 0; s < 2; ++s)
        for (std::size_t i = 0; i < plane; ++i) {
          const double ymax = std::max(std::hypot(y.re[i], y.im[i]), std::hypot(y.re[plane + i], y.im[plane + i]));
          const double mag = std::hypot(out.estimates[s].re.value()[i], out.estimates[s].im.value()[i]);
          REQUIRE(mag <= 2.0 * ymax * std::sqrt(2.0) + 1e-15);
        }
    }
  }
}

TEST_CASE("zero parameters give silent outputs", "[runet]") {
  const ModelConfig c = toy_preset(tnet::Variant::kMagPhase, dsp::FilterMode::kSingleChannel);
  num::ParameterStore ps;
  num::Rng rng(19);
  add_model_params(ps, c, rng);
  for (const auto& n : ps.names()) ps.get(n).fill(0.0);
  const dsp::MultiWave x(random_tensor({2, 2000}, 20), 16000);
  for (const auto& w : separate(x, c, ps)) {
    REQUIRE(w.samples() == 2000);
    REQUIRE(w.energy() == 0.0);
  }
  REQUIRE_THROWS_WITH(separate(dsp::MultiWave(3, 2000), c, ps), Catch::Matchers::ContainsSubstring("M=2"));
}

TEST_CASE("runet-only ablation feeds the spectra planes alone", "[runet]") {
  ModelConfig c = toy_preset(tnet::Variant::kCat, dsp::FilterMode::kMultiChannel);
  c.use_tnet = false;
  c.runet.input_channels = 0;
  REQUIRE(c.runet.in_channels() == 4);
  num::ParameterStore ps;
  num::Rng rng(21);
  add_model_params(ps, c, rng);
  for (const auto& n : ps.names()) REQUIRE((!n.starts_with("tnet") && !n.starts_with("merge")));
  REQUIRE(ps.get("runet.enc1.w").shape() == Shape{4, 4, 6, 6});
  const dsp::MultiWave x(random_tensor({2, 1500}, 22), 16000);
  REQUIRE(separate(x, c, ps)[0].samples() == 1500);

  ModelConfig mismatched = c;
  mismatched.runet.input_channels = 6;
  REQUIRE_THROWS_AS(mismatched.validate(), ConfigError);
}

TEST_CASE("full model gradients match finite differences", "[runet]") {
  for (auto v : {tnet::Variant::kCat, tnet::Variant::kRealImag, tnet::Variant::kMagPhase}) {
    for (auto mode : {dsp::FilterMode::kMultiChannel, dsp::FilterMode::kSingleChannel}) {
      const ModelConfig c = tiny_model(v, mode);
      num::ParameterStore ps;
      num::Rng rng(23);
      add_model_params(ps, c, rng);
      // Zero biases put exactly-zero pre-activations (from the padded bins)
      // on the leaky-ReLU kink, where finite differences are meaningless.
      for (const auto& n : ps.names()) {
        if (n.ends_with(".b") || n.ends_with(".bias")) ps.get(n) = random_tensor(ps.get(n).shape(), 28, -0.2, 0.2);
      }
      const dsp::MultiWave x(random_tensor({2, 16}, 24), 16000);
      const dsp::Spectra y = dsp::stft(x, c.stft);
      REQUIRE(y.frames() == 3);
      const Tensor wr = random_tensor({1, 3, 5}, 25), wi = random_tensor({1, 3, 5}, 26), ww = random_tensor({1, 16}, 27);
      const auto loss = [&](num::ParamView& pv) {
        const ModelOutput out = trunet_forward(planes_of(y), 16, c, pv);
        num::Var total = num::constant(Tensor::scalar(0.0));
        for (std::size_t s = 0; s < 2; ++s) {
          const double sign = s == 0 ? 1.0 : -0.5;
          total = total + sign * (num::sum(out.consistent[s].re * num::constant(wr)) +
                                  num::sum(out.consistent[s].im * num::constant(wi)) +
                                  num::sum(out.waves[s] * num::constant(ww)));
        }
        return total;
      };
      // BLSTM weight gradients are ~1e-9 against O(1) intermediate values, so
      // round-off needs h=1e-3; elsewhere softmax/LayerNorm curvature needs
      // h=1e-4. ReLU kinks within 2h are detected from f alone and skipped.
      const auto options_for = [](const std::string& name) {
        num::GradCheckOptions opt;
        opt.max_coords = 24;
        opt.five_point = true;
        opt.kink_guard = 1e-3;
        opt.step = name.find("blstm") != std::string::npos ? 1e-3 : 1e-4;
        return opt;
      };
      const auto report = num::grad_check_params(ps, loss, options_for);
      INFO(tnet::to_string(v) << (mode == dsp::FilterMode::kMultiChannel ? " multi: " : " single: ")
                              << report.summary());
      REQUIRE(report.passed);
    }
  }
}

TEST_CASE("same seed gives bit-identical parameters", "[runet]") {
  const ModelConfig c = toy_preset();
  num::ParameterStore a, b;
  num::Rng ra(99), rb(99);
  add_model_params(a, c, ra);
  add_model_params(b, c, rb);
  REQUIRE(a == b);
}
