#include "trunet/cli/gradcheck.hpp"

#include <chrono>
#include <tuple>

#include "trunet/loss/loss.hpp"
#include "trunet/numerics/grad_check.hpp"
#include "trunet/numerics/lstm.hpp"
#include "trunet/numerics/ops.hpp"
#include "trunet/runet/model.hpp"

namespace trunet::cli {

namespace {

using num::GradCheckOptions;
using num::ParamView;
using num::Shape;
using num::Tensor;
using num::Var;

Tensor uniform(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  num::Rng rng(num::derive_seed(seed, 0));
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// Contracts an output with fixed weights so every element counts differently.
Var contract(const Var& v, std::uint64_t seed) { return num::sum(v * num::constant(uniform(v.shape(), seed))); }

dsp::ComplexPlanes planes(std::size_t m, std::size_t k, std::size_t f, std::uint64_t seed) {
  return {num::constant(uniform({m, k, f}, seed)), num::constant(uniform({m, k, f}, seed + 1))};
}

// Biases drawn away from zero keep padded (all-zero) inputs off the ReLU kink.
void randomise_biases(num::ParameterStore& ps, std::uint64_t seed) {
  for (const auto& n : ps.names()) {
    if (n.ends_with(".b") || n.ends_with(".bias")) ps.get(n) = uniform(ps.get(n).shape(), seed++, -0.2, 0.2);
  }
}

class Runner {
 public:
  explicit Runner(const GradCheckSuiteOptions& o) : options_(o) {}

  template <typename Fn>
  void run(const std::string& group, const std::string& name, Fn&& check) {
    const auto t0 = std::chrono::steady_clock::now();
    GradCheckItem item{group, name, false, "", 0.0};
    try {
      std::tie(item.passed, item.summary) = check();
    } catch (const std::exception& e) {
      item.summary = std::string("error: ") + e.what();
    }
    item.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (options_.on_item) options_.on_item(item);
    items_.push_back(std::move(item));
  }

  std::vector<GradCheckItem> take() { return std::move(items_); }

 private:
  const GradCheckSuiteOptions& options_;
  std::vector<GradCheckItem> items_;
};

std::pair<bool, std::string> verdict(const num::GradCheckReport& r) { return {r.passed, r.summary()}; }
std::pair<bool, std::string> verdict(const num::ParamGradCheckReport& r) { return {r.passed, r.summary()}; }

// Checks a scalar function of an input tensor and of every parameter of `ps`.
std::pair<bool, std::string> input_and_params(const num::ParameterStore& ps, const Tensor& input,
                                              const std::function<Var(const Var&, ParamView&)>& f,
                                              const GradCheckOptions& opt) {
  ParamView fixed(ps, nullptr);
  const auto wrt_input = num::grad_check([&](const Var& x) { return f(x, fixed); }, input, opt);
  if (!wrt_input.passed) return {false, "input: " + wrt_input.summary()};
  const Var x = num::constant(input);
  const auto wrt_params = num::grad_check_params(ps, [&](ParamView& pv) { return f(x, pv); }, opt);
  return {wrt_params.passed, "input: " + wrt_input.summary() + "; params: " + wrt_params.summary()};
}

// Ridders' extrapolation, started from a step matched to each tensor: BLSTM
// weights have tiny gradients against O(1) activations and want a large
// step, RUNet convolutions sit among dense leaky-ReLU kinks and want a small
// one. Coordinates whose extrapolation does not settle (a kink inside the
// stencil) are skipped.
GradCheckOptions recurrent_options(const std::string& pname, double tol, std::size_t coords) {
  GradCheckOptions o;
  o.tolerance = tol;
  o.max_coords = coords;
  o.ridders = true;
  o.kink_guard = tol / 5.0;
  const bool blstm = pname.find("blstm") != std::string::npos;
  const bool conv = pname.starts_with("runet.") && !blstm && pname.find("head") == std::string::npos &&
                    pname.find("bridge") == std::string::npos;
  if (blstm) {
    o.step = pname.ends_with("bias") ? 1e-3 : 1e-2;
  } else {
    o.step = conv ? 1e-5 : 1e-4;
  }
  return o;
}

void layer_checks(Runner& run, double tol) {
  GradCheckOptions opt;
  opt.tolerance = tol;

  run.run("layer", "dense", [&] {
    num::ParameterStore ps;
    num::Rng rng(11);
    ps.add_uniform("w", {5, 4}, 5, rng);
    ps.add("b", uniform({4}, 12));
    return input_and_params(ps, uniform({3, 5}, 13), [](const Var& x, ParamView& p) {
      return contract(num::add_bias(num::matmul(x, p("w")), p("b")), 14);
    }, opt);
  });

  const num::ConvGeometry g{1, 2, 3, 2, 2, 2};
  run.run("layer", "conv2d", [&] {
    num::ParameterStore ps;
    ps.add("w", uniform({3, 2, 6, 6}, 21));
    ps.add("b", uniform({3}, 22));
    return input_and_params(ps, uniform({2, 5, 8}, 23), [&](const Var& x, ParamView& p) {
      const Var b = p("b");
      return contract(num::conv2d(x, p("w"), &b, g), 24);
    }, opt);
  });
  run.run("layer", "conv2d_transpose", [&] {
    num::ParameterStore ps;
    ps.add("w", uniform({3, 2, 6, 6}, 31));
    ps.add("b", uniform({2}, 32));
    return input_and_params(ps, uniform({3, 5, 4}, 33), [&](const Var& x, ParamView& p) {
      const Var b = p("b");
      return contract(num::conv2d_transpose(x, p("w"), &b, g), 34);
    }, opt);
  });

  run.run("layer", "activations", [&] {
    const Tensor x = uniform({4, 5}, 41, -2.0, 2.0);
    for (const auto& f : std::vector<num::ScalarFn>{
             [](const Var& v) { return contract(num::tanh(v), 42); },
             [](const Var& v) { return contract(num::sigmoid(v), 43); },
             [](const Var& v) { return contract(num::leaky_relu(v), 44); },
             [](const Var& v) { return contract(num::softmax(v, 1), 45); }}) {
      const auto r = num::grad_check(f, x, opt);
      if (!r.passed) return verdict(r);
    }
    return std::pair<bool, std::string>{true, "tanh, sigmoid, leaky_relu, softmax"};
  });

  run.run("layer", "layer_norm", [&] {
    num::ParameterStore ps;
    ps.add("gain", uniform({6}, 51, 0.5, 1.5));
    ps.add("bias", uniform({6}, 52));
    return input_and_params(ps, uniform({4, 6}, 53), [](const Var& x, ParamView& p) {
      return contract(num::layer_norm(x, p("gain"), p("bias")), 54);
    }, opt);
  });

  run.run("layer", "lstm", [&] {
    num::ParameterStore ps;
    num::Rng rng(61);
    num::add_lstm_params(ps, "l", 3, 4, rng);
    return input_and_params(ps, uniform({5, 3}, 62), [](const Var& x, ParamView& p) {
      return contract(num::lstm_layer(x, num::bind_lstm(p, "l"), false), 63);
    }, opt);
  });
  run.run("layer", "blstm", [&] {
    num::ParameterStore ps;
    num::Rng rng(71);
    num::add_lstm_params(ps, "f", 3, 4, rng);
    num::add_lstm_params(ps, "r", 3, 4, rng);
    return input_and_params(ps, uniform({5, 3}, 72), [](const Var& x, ParamView& p) {
      return contract(num::bilstm_layer(x, num::bind_lstm(p, "f"), num::bind_lstm(p, "r")), 73);
    }, opt);
  });

  run.run("layer", "attention_head", [&] {
    const Tensor q = uniform({2, 3, 4}, 81), k = uniform({2, 3, 4}, 82), v = uniform({2, 3, 4}, 83);
    const auto r = num::grad_check(
        [&](const Var& x) { return contract(tnet::attention_head(x, x, num::constant(v)).values, 84); }, q, opt);
    if (!r.passed) return verdict(r);
    return verdict(num::grad_check(
        [&](const Var& x) { return contract(tnet::attention_head(num::constant(q), num::constant(k), x).values, 85); },
        v, opt));
  });
  run.run("layer", "complex_attention_head", [&] {
    const Tensor qr = uniform({2, 3, 4}, 91), qi = uniform({2, 3, 4}, 92), kr = uniform({2, 3, 4}, 93),
                 ki = uniform({2, 3, 4}, 94), v = uniform({2, 3, 4}, 95);
    const auto c = [](const Tensor& t) { return num::constant(t); };
    for (const auto& f : std::vector<num::ScalarFn>{
             [&](const Var& x) { return contract(tnet::complex_attention_head(x, c(qi), c(kr), c(ki), c(v)).values, 96); },
             [&](const Var& x) { return contract(tnet::complex_attention_head(c(qr), x, c(kr), c(ki), c(v)).values, 97); },
             [&](const Var& x) { return contract(tnet::complex_attention_head(c(qr), c(qi), x, c(ki), c(v)).values, 98); }}) {
      const auto r = num::grad_check(f, qr, opt);
      if (!r.passed) return verdict(r);
    }
    return verdict(num::grad_check(
        [&](const Var& x) { return contract(tnet::complex_attention_head(c(qr), c(qi), c(kr), c(ki), x).values, 99); },
        v, opt));
  });

  run.run("layer", "transformer_block", [&] {
    num::ParameterStore ps;
    num::Rng rng(101);
    tnet::add_block_params(ps, "b", 8, 16, rng);
    return input_and_params(ps, uniform({1, 2, 8}, 102), [](const Var& x, ParamView& p) {
      return contract(tnet::transformer_block(x, x, x, tnet::bind_block(p, "b"), 2), 103);
    }, opt);
  });
  run.run("layer", "complex_transformer_block", [&] {
    num::ParameterStore ps;
    num::Rng rng(111);
    tnet::add_block_params(ps, "b", 8, 16, rng);
    const Tensor im = uniform({1, 2, 8}, 112), v = uniform({1, 2, 8}, 113);
    return input_and_params(ps, uniform({1, 2, 8}, 114), [&](const Var& x, ParamView& p) {
      const Var i = num::constant(im);
      return contract(tnet::complex_transformer_block(x, i, x, i, num::constant(v), tnet::bind_block(p, "b"), 2), 115);
    }, opt);
  });

  for (auto variant : {tnet::Variant::kCat, tnet::Variant::kRealImag, tnet::Variant::kMagPhase}) {
    run.run("layer", "tnet_" + tnet::to_string(variant), [&] {
      tnet::TNetConfig c;
      c.variant = variant;
      c.blocks = 1;
      c.heads = 2;
      c.dim = 8;
      c.bins = 4;
      num::ParameterStore ps;
      num::Rng rng(121);
      tnet::add_tnet_params(ps, c, rng);
      const auto y = planes(2, 2, 4, 122);
      return verdict(num::grad_check_params(
          ps, [&](ParamView& p) { return contract(tnet::tnet_forward(y, c, p), 123); }, opt));
    });
  }

  runet::RUNetConfig rc;
  rc.channels = {2, 4};
  rc.lstm_hidden = 3;
  rc.mics = 2;
  rc.bins = 5;  // padded to 8
  run.run("layer", "runet_encoder_decoder", [&] {
    num::ParameterStore ps;
    num::Rng rng(131);
    runet::add_runet_params(ps, rc, rng);
    randomise_biases(ps, 132);
    const Tensor x = uniform({4, 3, 8}, 133);
    return verdict(num::grad_check_params(
        ps, [&](ParamView& p) { return contract(runet::encoder_decoder(num::constant(x), rc, p), 134); },
        [&](const std::string& pname) { return recurrent_options(pname, tol, 40); }));
  });
  run.run("layer", "filter_heads", [&] {
    num::ParameterStore ps;
    num::Rng rng(141);
    runet::add_runet_params(ps, rc, rng);
    const Tensor x = uniform({2, 3, 8}, 142);
    return verdict(num::grad_check_params(ps, [&](ParamView& p) {
      const auto heads = runet::filter_heads(num::constant(x), rc, p);
      return contract(heads[0].re, 143) + contract(heads[1].im, 144);
    }, opt));
  });

  run.run("layer", "stft_istft", [&] {
    const dsp::StftConfig sc{8, 4};
    const auto r = num::grad_check(
        [&](const Var& x) {
          const auto s = dsp::stft(x, sc);
          return contract(s.re, 151) + contract(s.im, 152);
        },
        uniform({2, 19}, 153), opt);
    if (!r.passed) return verdict(r);
    return verdict(num::grad_check(
        [&](const Var& x) { return contract(dsp::istft({x, num::constant(uniform({2, 3, 5}, 154))}, sc, 16), 155); },
        uniform({2, 3, 5}, 156), opt));
  });
  for (auto mode : {dsp::FilterMode::kMultiChannel, dsp::FilterMode::kSingleChannel}) {
    const bool multi = mode == dsp::FilterMode::kMultiChannel;
    run.run("layer", multi ? "filter_multi" : "filter_single", [&] {
      const auto y = planes(2, 3, 4, 161);
      const std::size_t fm = multi ? 2 : 1;
      const Tensor bi = uniform({fm, 3, 4}, 162);
      return verdict(num::grad_check(
          [&](const Var& x) {
            dsp::FilterSet set{mode, {{x, num::constant(bi)}}, 1};
            const auto est = dsp::apply_filter(set, y)[0];
            return contract(est.re, 163) + contract(est.im, 164);
          },
          uniform({fm, 3, 4}, 165), opt));
    });
  }
}

void model_checks(Runner& run, double tol, std::size_t coords) {
  for (auto variant : {tnet::Variant::kCat, tnet::Variant::kRealImag, tnet::Variant::kMagPhase}) {
    for (auto mode : {dsp::FilterMode::kMultiChannel, dsp::FilterMode::kSingleChannel}) {
      const std::string name = "toy_" + tnet::to_string(variant) +
                               (mode == dsp::FilterMode::kMultiChannel ? "_multi" : "_single");
      run.run("model", name, [&] {
        const runet::ModelConfig c = runet::toy_preset(variant, mode);
        num::ParameterStore ps;
        num::Rng rng(201);
        runet::add_model_params(ps, c, rng);
        randomise_biases(ps, 202);
        // Three frames of the toy STFT.
        const std::size_t length = 1024;
        const dsp::Spectra y = dsp::stft(dsp::MultiWave(uniform({c.mics(), length}, 203), 16000), c.stft);
        const auto loss = [&](ParamView& p) {
          const auto out = runet::trunet_forward(y.as_constants(), length, c, p);
          Var total = num::constant(Tensor::scalar(0.0));
          for (std::size_t s = 0; s < out.consistent.size(); ++s) {
            total = total + contract(out.consistent[s].re, 210 + s) + contract(out.consistent[s].im, 220 + s) +
                    contract(out.waves[s], 230 + s);
          }
          return total;
        };
        const auto options_for = [&](const std::string& pname) { return recurrent_options(pname, tol, coords); };
        return verdict(num::grad_check_params(ps, loss, options_for));
      });
    }
  }
}

void loss_checks(Runner& run, double tol) {
  GradCheckOptions opt;
  opt.tolerance = tol;
  const dsp::ComplexPlanes target = planes(1, 3, 7, 301);
  const Tensor est_re = uniform({1, 3, 7}, 302, -2.0, 2.0), est_im = uniform({1, 3, 7}, 303, -2.0, 2.0);
  for (double c : {0.3, 0.5, 1.0}) {
    run.run("loss", "cmse_c" + std::to_string(c).substr(0, 3), [&] {
      const auto r = num::grad_check(
          [&](const Var& x) { return loss::cmse(target, {x, num::constant(est_im)}, c); }, est_re, opt);
      if (!r.passed) return verdict(r);
      return verdict(num::grad_check(
          [&](const Var& x) { return loss::cmse(target, {num::constant(est_re), x}, c); }, est_im, opt));
    });
  }
  run.run("loss", "combined", [&] {
    const auto r = num::grad_check(
        [&](const Var& x) { return loss::combined_loss(target, {x, num::constant(est_im)}, 0.3, 0.7); }, est_re, opt);
    if (!r.passed) return verdict(r);
    return verdict(num::grad_check(
        [&](const Var& x) { return loss::combined_loss(target, {num::constant(est_re), x}, 0.3, 0.7); }, est_im, opt));
  });
  run.run("loss", "upit_combined", [&] {
    const dsp::ComplexPlanes other = planes(1, 3, 7, 304);
    const dsp::ComplexPlanes second = {num::constant(uniform({1, 3, 7}, 305)), num::constant(uniform({1, 3, 7}, 306))};
    return verdict(num::grad_check(
        [&](const Var& x) {
          return loss::upit({target, other}, {second, {x, num::constant(est_im)}},
                            [](const dsp::ComplexPlanes& t, const dsp::ComplexPlanes& e) {
                              return loss::combined_loss(t, e, 0.3, 0.7);
                            })
              .loss;
        },
        est_re, opt));
  });
}

}  // namespace

std::vector<GradCheckItem> run_gradcheck_suite(const GradCheckSuiteOptions& options) {
  Runner run(options);
  if (options.layers) layer_checks(run, options.model_tolerance);
  if (options.models) model_checks(run, options.model_tolerance, options.model_coords);
  if (options.loss) loss_checks(run, options.loss_tolerance);
  return run.take();
}

}  // namespace trunet::cli
