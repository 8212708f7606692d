// Acceptance suite: one PASS/FAIL line per criterion, with the measured
// values behind each verdict. Oracles are written out here rather than taken
// from the library where the library is what is being tested.
//
//   trunet_acceptance [--only 1,2,...] [--expect-fail 8.loss,...] [--work-dir DIR]
//
// The exit status is 0 when every check outside --expect-fail passes and
// every check inside it fails; an expected failure that starts passing is
// reported so the note explaining it can be retired.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "trunet/cli/config.hpp"
#include "trunet/cli/gradcheck.hpp"
#include "trunet/cli/train.hpp"
#include "trunet/datagen/rir.hpp"
#include "trunet/datagen/scene.hpp"
#include "trunet/dsp/filter.hpp"
#include "trunet/dsp/stft.hpp"
#include "trunet/loss/loss.hpp"
#include "trunet/metrics/metrics.hpp"
#include "trunet/numerics/ops.hpp"
#include "trunet/tnet/tnet.hpp"

namespace fs = std::filesystem;
using namespace trunet;
using num::Tensor;
using cplx = std::complex<double>;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// Sub-checks of one criterion, each with an id such as "8.loss".
class Criterion {
 public:
  Criterion(int number, std::string title) : number_(number), title_(std::move(title)) {}

  void check(const std::string& id, bool ok, const std::string& detail) {
    checks_.push_back({std::to_string(number_) + "." + id, ok, detail});
  }

  int number() const { return number_; }
  const std::string& title() const { return title_; }
  bool passed() const {
    return std::all_of(checks_.begin(), checks_.end(), [](const Check& c) { return c.ok; });
  }

  struct Check {
    std::string id;
    bool ok;
    std::string detail;
  };
  const std::vector<Check>& checks() const { return checks_; }

 private:
  int number_;
  std::string title_;
  std::vector<Check> checks_;
};

Tensor uniform(num::Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  num::Rng rng(seed);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

std::vector<double> gaussian(std::size_t n, std::uint64_t seed) {
  num::Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal(0.0, 1.0);
  return v;
}

// ---------------------------------------------------------------- 1

void gradient_oracle(Criterion& c) {
  const auto t0 = Clock::now();
  const auto items = cli::run_gradcheck_suite();
  const double secs = seconds_since(t0);
  std::size_t layers = 0, models = 0, losses = 0;
  for (const auto& item : items) {
    c.check(item.group + "." + item.name, item.passed, item.summary + fmt(" (%.1f s)", item.seconds));
    layers += item.group == "layer";
    models += item.group == "model";
    losses += item.group == "loss";
  }
  c.check("coverage", models == 6 && layers > 0 && losses > 0,
          std::to_string(layers) + " layer, " + std::to_string(models) + " model, " + std::to_string(losses) +
              " loss checks");
  c.check("runtime", secs < 300.0, fmt("%.1f s (limit 300 s)", secs));
}

// ---------------------------------------------------------------- 2

// Relative L2 difference over the interior samples of every channel.
double interior_error(const dsp::MultiWave& a, const dsp::MultiWave& b, const dsp::StftConfig& cfg) {
  const auto r = dsp::interior(a.samples(), cfg);
  double num = 0.0, den = 0.0;
  for (std::size_t m = 0; m < a.channels(); ++m) {
    for (std::size_t t = r.begin; t < r.end; ++t) {
      const double d = a.channel(m)[t] - b.channel(m)[t];
      num += d * d;
      den += b.channel(m)[t] * b.channel(m)[t];
    }
  }
  return std::sqrt(num / den);
}

void stft_consistency(Criterion& c) {
  const dsp::StftConfig cfg;
  double worst_rt = 0.0, worst_idem = 0.0;
  std::uint64_t seed = 100;
  for (std::size_t len : {1000u, 16000u, 16001u, 32000u}) {
    for (std::size_t ch : {1u, 3u}) {
      const dsp::MultiWave x(uniform({ch, len}, ++seed), 16000);
      const dsp::MultiWave once = dsp::istft(dsp::stft(x, cfg));
      worst_rt = std::max(worst_rt, interior_error(once, x, cfg));
      const dsp::MultiWave twice = dsp::istft(dsp::stft(once, cfg));
      worst_idem = std::max(worst_idem, interior_error(twice, once, cfg));
    }
  }
  c.check("round_trip", worst_rt < 1e-10, fmt("max interior relative error %.3e (limit 1e-10)", worst_rt));
  c.check("idempotence", worst_idem < 1e-10, fmt("max interior relative error %.3e (limit 1e-10)", worst_idem));
}

// ---------------------------------------------------------------- 3

cplx at(const dsp::Spectra& s, std::size_t i) { return {s.re[i], s.im[i]}; }

void filter_semantics(Criterion& c) {
  const std::size_t m_count = 4;
  const dsp::Spectra y = dsp::stft(dsp::MultiWave(uniform({m_count, 3000}, 31), 16000));
  const std::size_t plane = y.frames() * y.bins();

  // One-hot weights select a channel.
  double worst_sel = 0.0;
  for (std::size_t sel = 0; sel < m_count; ++sel) {
    dsp::Spectra b = y;
    b.re.fill(0.0);
    b.im.fill(0.0);
    for (std::size_t i = 0; i < plane; ++i) b.re[sel * plane + i] = 1.0;
    const dsp::Spectra out = dsp::apply_filter(b, y, dsp::FilterMode::kMultiChannel);
    for (std::size_t i = 0; i < plane; ++i) worst_sel = std::max(worst_sel, std::abs(at(out, i) - at(y, sel * plane + i)));
  }
  c.check("one_hot", worst_sel < 1e-12, fmt("max deviation %.3e (limit 1e-12)", worst_sel));

  // Linear in Y, with the output computed independently as sum conj(b) y.
  dsp::Spectra b = y;
  b.re = uniform({m_count, y.frames(), y.bins()}, 32);
  b.im = uniform({m_count, y.frames(), y.bins()}, 33);
  const dsp::Spectra y2 = dsp::stft(dsp::MultiWave(uniform({m_count, 3000}, 34), 16000));
  const cplx alpha(0.7, -1.3), beta(-2.1, 0.4);
  dsp::Spectra mix = y;
  for (std::size_t i = 0; i < mix.re.size(); ++i) {
    const cplx v = alpha * at(y, i) + beta * at(y2, i);
    mix.re[i] = v.real();
    mix.im[i] = v.imag();
  }
  const dsp::Spectra o = dsp::apply_filter(b, mix, dsp::FilterMode::kMultiChannel);
  const dsp::Spectra o1 = dsp::apply_filter(b, y, dsp::FilterMode::kMultiChannel);
  const dsp::Spectra o2 = dsp::apply_filter(b, y2, dsp::FilterMode::kMultiChannel);
  double lin = 0.0, scale = 0.0, oracle = 0.0;
  for (std::size_t i = 0; i < plane; ++i) {
    lin = std::max(lin, std::abs(at(o, i) - (alpha * at(o1, i) + beta * at(o2, i))));
    scale = std::max(scale, std::abs(at(o, i)));
    cplx direct = 0.0;
    for (std::size_t m = 0; m < m_count; ++m) direct += std::conj(at(b, m * plane + i)) * at(y, m * plane + i);
    oracle = std::max(oracle, std::abs(at(o1, i) - direct));
  }
  c.check("linearity", lin <= 1e-12 * scale, fmt("max deviation %.3e relative to the output scale", lin / scale));
  c.check("oracle", oracle < 1e-12, fmt("max deviation from sum conj(B) Y %.3e", oracle));

  // Conjugation: weight j on channel 1 gives conj(j) Y_1 = -j Y_1.
  dsp::Spectra bj = y;
  bj.re.fill(0.0);
  bj.im.fill(0.0);
  for (std::size_t i = 0; i < plane; ++i) bj.im[plane + i] = 1.0;
  const dsp::Spectra oj = dsp::apply_filter(bj, y, dsp::FilterMode::kMultiChannel);
  bool exact = true;
  for (std::size_t i = 0; i < plane; ++i) exact = exact && at(oj, i) == cplx(0.0, -1.0) * at(y, plane + i);
  c.check("conjugation", exact, exact ? "B = j e_1 returns -j Y_1 exactly" : "B = j e_1 does not return -j Y_1");
}

// ---------------------------------------------------------------- 4

tnet::TNetConfig attention_config(tnet::Variant v, bool pe) {
  tnet::TNetConfig c;
  c.variant = v;
  c.blocks = 2;
  c.heads = 2;
  c.dim = 8;
  c.bins = 6;
  c.positional_encoding = pe;
  return c;
}

dsp::ComplexPlanes planes(std::size_t m, std::size_t k, std::size_t f, std::uint64_t seed, double s = 1.0) {
  return {num::constant(uniform({m, k, f}, seed, -s, s)), num::constant(uniform({m, k, f}, seed + 1, -s, s))};
}

Tensor permute_channels(const Tensor& t, const std::vector<std::size_t>& perm) {
  Tensor out(t.shape());
  const std::size_t plane = t.dim(1) * t.dim(2);
  for (std::size_t m = 0; m < perm.size(); ++m) {
    std::copy(t.ptr() + perm[m] * plane, t.ptr() + (perm[m] + 1) * plane, out.ptr() + m * plane);
  }
  return out;
}

// Largest |out_p[k, m] - out[k, perm[m]]| over frames, channels and features.
double equivariance_gap(const tnet::TNetConfig& cfg, const num::ParameterStore& ps, std::size_t m_count,
                        const std::vector<std::size_t>& perm, std::uint64_t seed) {
  num::ParamView pv(ps, nullptr);
  const auto y = planes(m_count, 3, cfg.bins, seed);
  const dsp::ComplexPlanes yp{num::constant(permute_channels(y.re.value(), perm)),
                              num::constant(permute_channels(y.im.value(), perm))};
  const Tensor out = tnet::tnet_forward(y, cfg, pv).value(), outp = tnet::tnet_forward(yp, cfg, pv).value();
  const std::size_t d = cfg.output_dim();
  double gap = 0.0;
  for (std::size_t k = 0; k < 3; ++k)
    for (std::size_t m = 0; m < m_count; ++m)
      for (std::size_t i = 0; i < d; ++i)
        gap = std::max(gap, std::abs(outp[(k * m_count + m) * d + i] - out[(k * m_count + perm[m]) * d + i]));
  return gap;
}

void attention_invariants(Criterion& c) {
  for (auto v : {tnet::Variant::kCat, tnet::Variant::kRealImag, tnet::Variant::kMagPhase}) {
    const std::string name = tnet::to_string(v);
    num::ParameterStore ps;
    num::Rng rng(41);
    const auto cfg = attention_config(v, true);
    tnet::add_tnet_params(ps, cfg, rng);
    num::ParamView pv(ps, nullptr);

    tnet::Trace trace;
    tnet::tnet_forward(planes(5, 3, 6, 42, 4.0), cfg, pv, "tnet", &trace);
    double worst = 0.0;
    for (const auto& w : trace.attention) {
      const Tensor& t = w.value();
      const std::size_t cols = t.dim(2), rows = t.size() / cols;
      for (std::size_t r = 0; r < rows; ++r) {
        double s = 0.0;
        for (std::size_t j = 0; j < cols; ++j) s += t[r * cols + j];
        worst = std::max(worst, std::abs(s - 1.0));
      }
    }
    c.check("row_stochastic." + name, !trace.attention.empty() && worst < 1e-9,
            fmt("max |row sum - 1| %.3e (limit 1e-9)", worst));

    const auto nope = attention_config(v, false);
    const double gap2 = equivariance_gap(nope, ps, 2, {1, 0}, 43);
    c.check("equivariance_m2." + name, gap2 == 0.0, fmt("max deviation %.3e (exact required)", gap2));
    // With more than two channels the sums inside softmax and the weighted
    // average are reordered, so agreement is to rounding.
    const double gap5 = equivariance_gap(nope, ps, 5, {3, 0, 4, 1, 2}, 44);
    c.check("equivariance_m5." + name, gap5 < 1e-12, fmt("max deviation %.3e (reordered sums, limit 1e-12)", gap5));

    tnet::Trace single;
    tnet::tnet_forward(planes(1, 4, 6, 45), cfg, pv, "tnet", &single);
    bool ones = !single.attention.empty();
    for (const auto& w : single.attention)
      for (double x : w.value().data()) ones = ones && x == 1.0;
    c.check("single_channel." + name, ones, ones ? "every M=1 weight is exactly 1" : "M=1 weights differ from 1");
  }
  // M=1 heads return their values bit for bit.
  const Tensor q = uniform({4, 1, 3}, 46), k = uniform({4, 1, 3}, 47), v = uniform({4, 1, 3}, 48);
  const auto real = tnet::attention_head(num::constant(q), num::constant(k), num::constant(v));
  const auto cx = tnet::complex_attention_head(num::constant(q), num::constant(k), num::constant(k), num::constant(q),
                                               num::constant(v));
  const bool same = std::ranges::equal(real.values.value().data(), v.data()) &&
                    std::ranges::equal(cx.values.value().data(), v.data());
  c.check("identity_on_values", same, same ? "real and complex heads return v exactly" : "head output differs from v");
}

// ---------------------------------------------------------------- 5

std::vector<cplx> random_bins(std::size_t n, std::uint64_t seed, double scale = 2.0) {
  num::Rng rng(seed);
  std::vector<cplx> b(n);
  for (auto& x : b) {
    const double re = rng.uniform(-scale, scale);
    x = {re, rng.uniform(-scale, scale)};
  }
  return b;
}

dsp::ComplexPlanes to_planes(const std::vector<cplx>& b) {
  Tensor re({1, 1, b.size()}), im({1, 1, b.size()});
  for (std::size_t i = 0; i < b.size(); ++i) {
    re[i] = b[i].real();
    im[i] = b[i].imag();
  }
  return {num::constant(re), num::constant(im)};
}

// log10 of the summed squared difference of the compressed spectra, in
// polar form.
double oracle_cmse(const std::vector<cplx>& x, const std::vector<cplx>& xh, double c) {
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    total += std::norm(std::polar(std::pow(std::abs(x[i]), c), std::arg(x[i])) -
                       std::polar(std::pow(std::abs(xh[i]), c), std::arg(xh[i])));
  }
  return std::log10(total);
}

double value(const num::Var& v) { return v.value()[0]; }

void loss_identities(Criterion& c) {
  double worst_c1 = 0.0;
  bool endpoints = true;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto x = random_bins(40, seed), xh = random_bins(40, seed + 500);
    double direct = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) direct += std::norm(x[i] - xh[i]);
    const double got = value(loss::cmse(to_planes(x), to_planes(xh), 1.0));
    worst_c1 = std::max(worst_c1, std::abs(got - std::log10(direct)) / std::abs(std::log10(direct)));
    for (double cc : {0.2, 0.3, 0.45}) {
      const auto t = to_planes(x), e = to_planes(xh);
      endpoints = endpoints && value(loss::combined_loss(t, e, cc, 1.0)) == value(loss::cmse(t, e, cc)) &&
                  value(loss::combined_loss(t, e, cc, 0.0)) == value(loss::cmse(t, e, 1.0 - cc));
    }
  }
  c.check("cmse_c1", worst_c1 < 1e-12, fmt("max relative deviation from log10 sum |X - X^|^2: %.3e", worst_c1));
  c.check("combined_endpoints", endpoints, endpoints ? "alpha=1 and alpha=0 match cmse(c), cmse(1-c) exactly"
                                                     : "an endpoint differs from cmse");

  std::size_t agree = 0, swaps = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto t0 = random_bins(12, 1000 + 4 * seed), t1 = random_bins(12, 1001 + 4 * seed);
    const auto e0 = random_bins(12, 1002 + 4 * seed), e1 = random_bins(12, 1003 + 4 * seed);
    const double cc = 0.3, alpha = 0.7;
    const auto comb = [&](const auto& t, const auto& e) {
      return alpha * oracle_cmse(t, e, cc) + (1.0 - alpha) * oracle_cmse(t, e, 1.0 - cc);
    };
    const double ident = 0.5 * (comb(t0, e0) + comb(t1, e1));
    const double swap = 0.5 * (comb(t0, e1) + comb(t1, e0));
    const std::vector<std::size_t> best = ident <= swap ? std::vector<std::size_t>{0, 1} : std::vector<std::size_t>{1, 0};
    const auto r = loss::upit({to_planes(t0), to_planes(t1)}, {to_planes(e0), to_planes(e1)},
                              [&](const dsp::ComplexPlanes& t, const dsp::ComplexPlanes& e) {
                                return loss::combined_loss(t, e, cc, alpha);
                              });
    const double expect = std::min(ident, swap);
    const double dev = std::abs(value(r.loss) - expect) / std::abs(expect);
    worst = std::max(worst, dev);
    agree += r.permutation == best && dev < 1e-12;
    swaps += best[0] == 1;
  }
  c.check("upit_oracle", agree == 100,
          std::to_string(agree) + "/100 cases match the exhaustive oracle (" + std::to_string(swaps) +
              " swapped), max relative deviation " + fmt("%.3e", worst));
}

// ---------------------------------------------------------------- 6

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void data_pipeline(Criterion& c, const fs::path& work) {
  // Free field: one impulse per microphone at round(fs d / c) of 1/(4 pi d).
  datagen::RoomSpec room;
  room.dims = {6.0, 5.0, 3.0};
  room.reflection.fill(0.0);
  datagen::ArraySpec array;
  array.mics = 4;
  array.radius = 0.05;
  array.center = {3.1, 2.4, 1.5};
  const datagen::Vec3 src{1.3, 1.1, 1.2};
  const auto rir = datagen::simulate_rir(room, array, src, 16000);
  bool free_ok = rir.size() == 4;
  double amp_dev = 0.0;
  const auto mics = array.positions();
  for (std::size_t m = 0; free_ok && m < 4; ++m) {
    const double d = std::sqrt((src.x - mics[m].x) * (src.x - mics[m].x) + (src.y - mics[m].y) * (src.y - mics[m].y) +
                               (src.z - mics[m].z) * (src.z - mics[m].z));
    const auto idx = static_cast<std::size_t>(std::llround(16000.0 * d / datagen::kSpeedOfSound));
    std::size_t nonzero = 0;
    for (double v : rir[m]) nonzero += v != 0.0;
    free_ok = free_ok && nonzero == 1 && idx < rir[m].size() && rir[m][idx] != 0.0;
    if (free_ok) amp_dev = std::max(amp_dev, std::abs(rir[m][idx] * 4.0 * std::numbers::pi * d - 1.0));
  }
  c.check("free_field", free_ok && amp_dev < 1e-12,
          free_ok ? fmt("impulses at the rounded delays, max relative amplitude error %.3e", amp_dev)
                  : "impulse index or count wrong");

  // Mixture SNR as drawn.
  datagen::SceneConfig sc;
  sc.mics = 2;
  sc.seconds = 1.0;
  double worst_snr = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto scene = datagen::draw_scene(sc, seed);
    const std::size_t n = sc.samples();
    const auto mix = datagen::make_mixture(scene, datagen::synthetic_speech(n, 10 + seed),
                                           datagen::synthetic_speech(n, 20 + seed),
                                           datagen::sensor_noise(2, n, 30 + seed));
    double es = 0.0, en = 0.0;
    for (std::size_t m = 0; m < 2; ++m) {
      for (std::size_t i = 0; i < n; ++i) {
        const double s = mix.images[0].channel(m)[i] + mix.images[1].channel(m)[i];
        const double v = mix.mixture.channel(m)[i] - s;  // what the mixture holds besides speech
        es += s * s;
        en += v * v;
      }
    }
    worst_snr = std::max(worst_snr, std::abs(10.0 * std::log10(es / en) - scene.draws.snr_db));
  }
  c.check("snr", worst_snr < 0.01, fmt("max |measured - drawn| SNR %.2e dB (limit 0.01 dB)", worst_snr));

  // Shaping a synthetic flat tail.
  const std::size_t direct = 120, early = 800, cap = 3200;  // 50 ms and 200 ms at 16 kHz
  std::vector<double> flat(12000, 0.05);
  for (std::size_t i = 0; i < direct; ++i) flat[i] = 0.0;
  flat[direct] = 1.0;
  const auto shaped = datagen::shape_target_rir(flat, 16000);
  bool early_same = shaped.size() == flat.size();
  for (std::size_t i = 0; early_same && i < direct + early; ++i) early_same = shaped[i] == flat[i];
  const std::size_t t0 = direct + early;
  double decay = 0.0;
  for (std::size_t i = t0 + cap; i < shaped.size(); ++i) decay = std::max(decay, std::abs(shaped[i]));
  // The window reaches 1e-3 exactly at 200 ms; the slack is rounding in exp.
  const double drop_db = 20.0 * std::log10(decay / std::abs(shaped[t0]));
  c.check("shaping_early", early_same, early_same ? "first 50 ms after the direct path unchanged" : "early part changed");
  c.check("shaping_decay", drop_db <= -60.0 + 1e-9, fmt("envelope from 200 ms on at %.6f dB (limit -60 dB)", drop_db));

  // Same seed, same bytes.
  datagen::SceneConfig small = sc;
  small.seconds = 0.5;
  const fs::path a = work / "det_a", b = work / "det_b";
  fs::remove_all(a);
  fs::remove_all(b);
  datagen::generate_dataset(small, 3, 77, a, 1);
  datagen::generate_dataset(small, 3, 77, b, 2);
  std::size_t files = 0, equal = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    ++files;
    equal += fs::exists(b / e.path().filename()) && slurp(e.path()) == slurp(b / e.path().filename());
  }
  c.check("deterministic", files > 0 && files == equal,
          std::to_string(equal) + "/" + std::to_string(files) + " files identical across runs (1 and 2 workers)");
  fs::remove_all(a);
  fs::remove_all(b);
}

// ---------------------------------------------------------------- 7

void metric_checks(Criterion& c) {
  const auto t = gaussian(4000, 71), n = gaussian(4000, 72);
  std::vector<double> e(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) e[i] = t[i] + 0.3 * n[i];
  const double base = metrics::si_sdr(e, t);
  bool exact = true;
  for (double g : {0.125, 4.0, 1024.0}) {
    std::vector<double> s(e);
    for (double& v : s) v *= g;
    exact = exact && metrics::si_sdr(s, t) == base;
  }
  c.check("si_sdr_scale", exact, exact ? fmt("bit-identical under power-of-two gains (%.4f dB)", base)
                                       : "value changes under scaling");

  // Orthogonal target and interferer of equal energy, interferer at 0.1
  // amplitude: 20 log10(1 / 0.1) = 20 dB.
  const std::size_t len = 1600;
  std::vector<double> tt(len), ii(len), est(len);
  for (std::size_t k = 0; k < len; ++k) {
    const double ph = 2.0 * std::numbers::pi * 5.0 * static_cast<double>(k) / static_cast<double>(len);
    tt[k] = std::cos(ph);
    ii[k] = std::sin(ph);
    est[k] = tt[k] + 0.1 * ii[k];
  }
  const double got = metrics::sir(est, tt, ii);
  c.check("sir_20db", std::abs(got - 20.0) < 0.01, fmt("SIR %.6f dB (expected 20 +- 0.01)", got));
}

// ---------------------------------------------------------------- 8

struct RunOutcome {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double delta_sdr = 0.0;
  double delta_sir = 0.0;
  double seconds = 0.0;
};

// Mean uPIT loss over all examples, no tape.
double mean_loss(const cli::RunConfig& config, const num::ParameterStore& params,
                 const std::vector<cli::Example>& data) {
  num::ParamView pv(params, nullptr);
  double total = 0.0;
  for (const auto& ex : data) total += value(cli::example_loss(config, pv, ex));
  return total / static_cast<double>(data.size());
}

RunOutcome toy_run(cli::RunConfig config, const std::vector<cli::Example>& data, const char* label) {
  const auto t0 = Clock::now();
  cli::Trainer trainer(config, data);
  RunOutcome out;
  out.initial_loss = mean_loss(config, trainer.params(), data);
  while (trainer.completed() < config.train.steps) {
    const auto r = trainer.step();
    if ((r.step + 1) % 250 == 0) {
      std::printf("    [%s] step %zu loss %.4f (%.0f s)\n", label, r.step + 1, r.loss, seconds_since(t0));
      std::fflush(stdout);
    }
  }
  out.final_loss = mean_loss(config, trainer.params(), data);
  const auto report = cli::evaluate_model(config.model, trainer.params(), data);
  out.delta_sdr = report.mean_delta_sdr();
  out.delta_sir = report.mean_delta_sir();
  out.seconds = seconds_since(t0);
  return out;
}

void toy_learning(Criterion& c, const fs::path& work) {
  cli::RunConfig config = cli::preset_config("toy");
  config.finalize();
  // Four fixed 2 s scenes, M = 2.
  const fs::path dir = work / "toy_scenes";
  fs::remove_all(dir);
  const auto t0 = Clock::now();
  datagen::generate_dataset(config.data, 4, 8, dir, 1);
  const auto data = cli::load_examples(dir, config.model);
  const double gen_secs = seconds_since(t0);

  const RunOutcome r03 = toy_run(config, data, "c=0.3");
  const double ratio = r03.final_loss / r03.initial_loss;
  c.check("loss", ratio < 0.5,
          fmt("mean uPIT loss %.4f", r03.initial_loss) + fmt(" -> %.4f", r03.final_loss) +
              fmt(", ratio %.3f (limit 0.5)", ratio));
  c.check("delta_si_sdr", r03.delta_sdr > 3.0, fmt("mean dSI-SDR %.2f dB (limit > 3 dB)", r03.delta_sdr));
  const double secs = gen_secs + r03.seconds;
  c.check("runtime", secs < 1800.0, fmt("%.0f s for data and 2000 steps (limit 1800 s)", secs));

  // The trend concerns the exponent of a single compressed loss. In combined
  // mode c = 0.9 would bring in cMSE(0.1), the smallest exponent of either
  // run, so both trend runs use plain cMSE on the same scenes and seed.
  cli::RunConfig low = config;
  low.loss.mode = loss::Mode::kCmse;
  low.finalize();
  cli::RunConfig high = low;
  high.loss.c = 0.9;
  high.finalize();
  const RunOutcome l03 = toy_run(low, data, "cMSE c=0.3");
  const RunOutcome l09 = toy_run(high, data, "cMSE c=0.9");
  c.check("sir_trend", l09.delta_sir < l03.delta_sir,
          fmt("mean dSIR %.2f dB at c=0.9", l09.delta_sir) + fmt(" vs %.2f dB at c=0.3 (cMSE", l03.delta_sir) +
              fmt("; dSI-SDR %.2f", l09.delta_sdr) + fmt(" vs %.2f dB)", l03.delta_sdr));
}

// ---------------------------------------------------------------- 9

void determinism(Criterion& c, const fs::path& work) {
  cli::RunConfig config = cli::preset_config("toy");
  config.data.seconds = 0.5;
  config.finalize();
  const fs::path dir = work / "resume_scenes";
  fs::remove_all(dir);
  datagen::generate_dataset(config.data, 3, 9, dir, 1);
  const auto data = cli::load_examples(dir, config.model);

  cli::Trainer straight(config, data);
  for (int i = 0; i < 8; ++i) straight.step();
  cli::Trainer again(config, data);
  for (int i = 0; i < 8; ++i) again.step();

  cli::Trainer head(config, data);
  for (int i = 0; i < 3; ++i) head.step();
  const fs::path ckpt = work / "resume.ckpt";
  num::save_checkpoint(ckpt, head.checkpoint());
  cli::Trainer tail(config, data, num::load_checkpoint(ckpt));
  for (int i = 0; i < 5; ++i) tail.step();

  const auto a = num::serialize(straight.checkpoint()), b = num::serialize(again.checkpoint()),
             r = num::serialize(tail.checkpoint());
  c.check("rerun", a == b, a == b ? "two fresh 8-step runs give identical checkpoints" : "fresh runs differ");
  c.check("resume", a == r,
          a == r ? "3 steps + save/load + 5 steps equals 8 straight steps bit for bit" : "resumed run differs");
  fs::remove(ckpt);
  fs::remove_all(dir);
}

std::set<std::string> split_set(const std::string& s) {
  std::set<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.insert(item);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string only = "1,2,3,4,5,6,7,8,9", expect_fail;
  std::string work = (fs::temp_directory_path() / "trunet_acceptance").string();
  app.add_option("--only", only, "Comma-separated criterion numbers");
  app.add_option("--expect-fail", expect_fail, "Comma-separated check ids known to fail");
  app.add_option("--work-dir", work, "Scratch directory");
  CLI11_PARSE(app, argc, argv);
  const auto selected = split_set(only), expected = split_set(expect_fail);
  fs::create_directories(work);

  const std::vector<std::pair<int, std::function<void(Criterion&)>>> all{
      {1, gradient_oracle},
      {2, stft_consistency},
      {3, filter_semantics},
      {4, attention_invariants},
      {5, loss_identities},
      {6, [&](Criterion& c) { data_pipeline(c, work); }},
      {7, metric_checks},
      {8, [&](Criterion& c) { toy_learning(c, work); }},
      {9, [&](Criterion& c) { determinism(c, work); }},
  };
  const std::map<int, std::string> titles{
      {1, "gradient oracle"}, {2, "STFT consistency"},    {3, "filter semantics"},
      {4, "attention invariants"}, {5, "loss identities"}, {6, "data pipeline"},
      {7, "metrics"},         {8, "toy-scale learning"}, {9, "determinism"},
  };

  int unexpected = 0;
  for (const auto& [number, run] : all) {
    if (!selected.count(std::to_string(number))) continue;
    Criterion c(number, titles.at(number));
    const auto t0 = Clock::now();
    try {
      run(c);
    } catch (const std::exception& e) {
      c.check("error", false, e.what());
    }
    for (const auto& ch : c.checks()) {
      const bool known = expected.count(ch.id) > 0;
      const char* tag = ch.ok ? (known ? "pass (expected to fail)" : "pass") : (known ? "FAIL (expected)" : "FAIL");
      std::printf("    %-38s %-24s %s\n", ch.id.c_str(), tag, ch.detail.c_str());
      unexpected += ch.ok == known;
    }
    std::printf("criterion %d (%s): %s  [%.1f s]\n", number, c.title().c_str(), c.passed() ? "PASS" : "FAIL",
                seconds_since(t0));
    std::fflush(stdout);
  }
  if (unexpected) std::printf("%d check(s) did not match their expected outcome\n", unexpected);
  return unexpected == 0 ? 0 : 1;
}
