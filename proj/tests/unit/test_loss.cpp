#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>

#include "test_util.hpp"
#include "trunet/loss/loss.hpp"
#include "trunet/numerics/grad_check.hpp"
#include "trunet/numerics/ops.hpp"

using namespace trunet;
using namespace trunet::loss;
using dsp::ComplexPlanes;
using num::Tensor;
using num::Var;
using trunet::test::random_tensor;

namespace {

using Bins = std::vector<std::complex<double>>;

Bins random_bins(std::size_t n, std::uint64_t seed, double scale = 1.0) {
  const Tensor r = random_tensor({n}, seed, -scale, scale), i = random_tensor({n}, seed + 1000, -scale, scale);
  Bins b(n);
  for (std::size_t k = 0; k < n; ++k) b[k] = {r[k], i[k]};
  return b;
}

// Bins as a [1, 1, n] spectrum.
ComplexPlanes planes(const Bins& b) {
  Tensor re({1, 1, b.size()}), im({1, 1, b.size()});
  for (std::size_t k = 0; k < b.size(); ++k) {
    re[k] = b[k].real();
    im[k] = b[k].imag();
  }
  return {num::constant(re), num::constant(im)};
}

double value(const Var& v) { return v.value()[0]; }

// Independent evaluation with std::complex polar form, valid away from the
// magnitude floor.
double oracle_cmse(const Bins& x, const Bins& xh, double c) {
  double total = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const auto a = std::polar(std::pow(std::abs(x[k]), c), std::arg(x[k]));
    const auto b = std::polar(std::pow(std::abs(xh[k]), c), std::arg(xh[k]));
    total += std::norm(a - b);
  }
  return std::log10(std::max(total, 1e-10));
}

}  // namespace

TEST_CASE("cmse matches the polar-form oracle", "[loss]") {
  for (double c : {0.1, 0.3, 0.5, 0.7, 1.0}) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const Bins x = random_bins(33, seed, 3.0), xh = random_bins(33, seed + 50, 3.0);
      REQUIRE(value(cmse(planes(x), planes(xh), c)) == Catch::Approx(oracle_cmse(x, xh, c)).epsilon(1e-12));
    }
  }
}

TEST_CASE("perfect reconstruction hits the log floor", "[loss]") {
  const Bins x = random_bins(17, 3);
  REQUIRE(value(cmse(planes(x), planes(x), 0.3)) == Catch::Approx(std::log10(kLogFloor)).epsilon(1e-14));
  REQUIRE(value(cmse(planes(x), planes(x), 0.3)) == Catch::Approx(-10.0).epsilon(1e-14));
}

TEST_CASE("c = 1 is the log of the plain complex squared error", "[loss]") {
  const Bins x = random_bins(20, 7), xh = random_bins(20, 8);
  double direct = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) direct += std::norm(x[k] - xh[k]);
  REQUIRE(value(cmse(planes(x), planes(xh), 1.0)) == Catch::Approx(std::log10(direct)).epsilon(1e-14));
}

TEST_CASE("single-bin hand example", "[loss]") {
  // |X| = 4, |Xhat| = 1, equal phase, c = 0.5: (2 - 1)^2 = 1 -> 0.
  const double phase = 0.9;
  const Bins x{std::polar(4.0, phase)}, xh{std::polar(1.0, phase)};
  REQUIRE(std::abs(value(cmse(planes(x), planes(xh), 0.5))) < 1e-14);
}

TEST_CASE("cmse is symmetric", "[loss]") {
  const Bins x = random_bins(40, 11, 2.0), xh = random_bins(40, 12, 2.0);
  for (double c : {0.2, 0.3, 0.9}) {
    REQUIRE(value(cmse(planes(x), planes(xh), c)) == Catch::Approx(value(cmse(planes(xh), planes(x), c))).epsilon(1e-14));
  }
}

TEST_CASE("growing the magnitude gap never lowers cmse", "[loss]") {
  const Bins x = random_bins(25, 13, 2.0);
  for (double c : {0.3, 0.7}) {
    double previous = -1e300;
    for (double gain = 1.0; gain <= 4.0; gain += 0.25) {
      Bins xh = x;
      for (auto& v : xh) v *= gain;
      const double l = value(cmse(planes(x), planes(xh), c));
      REQUIRE(l >= previous);
      previous = l;
    }
  }
}

TEST_CASE("combined loss endpoints and convexity", "[loss]") {
  const Bins x = random_bins(30, 14), xh = random_bins(30, 15);
  const auto t = planes(x), e = planes(xh);
  REQUIRE(value(combined_loss(t, e, 0.3, 1.0)) == value(cmse(t, e, 0.3)));
  REQUIRE(value(combined_loss(t, e, 0.3, 0.0)) == value(cmse(t, e, 0.7)));
  const double expected = 0.7 * oracle_cmse(x, xh, 0.3) + 0.3 * oracle_cmse(x, xh, 0.7);
  REQUIRE(value(combined_loss(t, e, 0.3, 0.7)) == Catch::Approx(expected).epsilon(1e-12));

  LossConfig paper;
  REQUIRE(paper.mode == Mode::kCombined);
  REQUIRE(paper.c == 0.3);
  REQUIRE(paper.alpha == 0.7);
  REQUIRE(value(loss::loss(t, e, paper)) == value(combined_loss(t, e, 0.3, 0.7)));
}

TEST_CASE("cmse gradients match finite differences", "[loss][grad]") {
  const Bins x = random_bins(12, 16, 2.0);
  const Tensor est_re = random_tensor({1, 1, 12}, 17, -2.0, 2.0), est_im = random_tensor({1, 1, 12}, 18, -2.0, 2.0);
  for (double c : {0.3, 0.7, 1.0}) {
    const auto wrt_re = [&](const Var& v) { return cmse(planes(x), {v, num::constant(est_im)}, c); };
    const auto wrt_im = [&](const Var& v) { return cmse(planes(x), {num::constant(est_re), v}, c); };
    REQUIRE(num::grad_check(wrt_re, est_re).passed);
    REQUIRE(num::grad_check(wrt_im, est_im).passed);
  }
  const auto comb = [&](const Var& v) { return combined_loss(planes(x), {v, num::constant(est_im)}, 0.3, 0.7); };
  const auto r = num::grad_check(comb, est_re);
  INFO(r.summary());
  REQUIRE(r.passed);
}

TEST_CASE("silent bins stay finite", "[loss]") {
  Bins x = random_bins(6, 19);
  x[2] = 0.0;
  Bins xh = x;
  xh[2] = 0.0;
  xh[4] *= 2.0;
  num::Tape tape;
  const Var re = tape.leaf(planes(xh).re.value()), im = tape.leaf(planes(xh).im.value());
  const Var l = cmse(planes(x), {re, im}, 0.3);
  tape.backward(l);
  REQUIRE(std::isfinite(value(l)));
  for (double g : re.grad().data()) REQUIRE(std::isfinite(g));
  for (double g : im.grad().data()) REQUIRE(std::isfinite(g));
}

TEST_CASE("cmse rejects mismatched dimensions", "[loss][errors]") {
  REQUIRE_THROWS_AS(cmse(planes(random_bins(4, 1)), planes(random_bins(5, 2)), 0.3), LossError);
  REQUIRE_THROWS_AS(cmse(planes(random_bins(4, 1)), planes(random_bins(4, 2)), 0.0), LossError);
  REQUIRE_THROWS_AS(combined_loss(planes(random_bins(4, 1)), planes(random_bins(4, 2)), 1.0, 0.5), LossError);
}

TEST_CASE("loss config validation and warnings", "[loss][config]") {
  LossConfig c;
  REQUIRE_NOTHROW(c.validate());
  REQUIRE_FALSE(c.warning());
  c.c = 0.1;
  REQUIRE(c.warning());
  c.mode = Mode::kCmse;
  REQUIRE(c.warning());
  c.c = 1.0;
  REQUIRE_NOTHROW(c.validate());
  REQUIRE_FALSE(c.warning());
  c.mode = Mode::kCombined;
  REQUIRE_THROWS_AS(c.validate(), LossError);
  c.c = 0.3;
  c.alpha = 1.5;
  REQUIRE_THROWS_AS(c.validate(), LossError);
  REQUIRE(parse_mode("cmse") == Mode::kCmse);
  REQUIRE(parse_mode(to_string(Mode::kCombined)) == Mode::kCombined);
  REQUIRE_THROWS_AS(parse_mode("mse"), LossError);
}

TEST_CASE("upit picks the swap for swapped estimates", "[loss][pit]") {
  const Bins a = random_bins(16, 20), b = random_bins(16, 21);
  const auto pair = [](const ComplexPlanes& t, const ComplexPlanes& e) { return cmse(t, e, 0.3); };
  const auto same = upit({planes(a), planes(b)}, {planes(a), planes(b)}, pair);
  REQUIRE(same.permutation == std::vector<std::size_t>{0, 1});
  REQUIRE(value(same.loss) == Catch::Approx(-10.0).epsilon(1e-14));

  const Bins eb = random_bins(16, 23);
  const auto straight = upit({planes(a), planes(b)}, {planes(a), planes(eb)}, pair);
  const auto swapped = upit({planes(a), planes(b)}, {planes(eb), planes(a)}, pair);
  REQUIRE(swapped.permutation == std::vector<std::size_t>{1, 0});
  REQUIRE(value(swapped.loss) == value(straight.loss));
}

TEST_CASE("upit matches brute force over both assignments", "[loss][pit]") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Bins t0 = random_bins(10, 4 * seed + 100), t1 = random_bins(10, 4 * seed + 101);
    const Bins e0 = random_bins(10, 4 * seed + 102), e1 = random_bins(10, 4 * seed + 103);
    const double c = 0.2 + 0.6 * static_cast<double>(seed % 4) / 3.0;
    const double ident = 0.5 * (oracle_cmse(t0, e0, c) + oracle_cmse(t1, e1, c));
    const double swap = 0.5 * (oracle_cmse(t0, e1, c) + oracle_cmse(t1, e0, c));
    const auto pair = [c](const ComplexPlanes& t, const ComplexPlanes& e) { return cmse(t, e, c); };
    const auto r = upit({planes(t0), planes(t1)}, {planes(e0), planes(e1)}, pair);
    const auto rs = upit({planes(t0), planes(t1)}, {planes(e1), planes(e0)}, pair);
    REQUIRE(value(r.loss) == Catch::Approx(std::min(ident, swap)).epsilon(1e-12));
    REQUIRE(r.permutation == (ident <= swap ? std::vector<std::size_t>{0, 1} : std::vector<std::size_t>{1, 0}));
    REQUIRE(value(rs.loss) == value(r.loss));
  }
}

TEST_CASE("upit searches all permutations of three sources", "[loss][pit]") {
  std::vector<Bins> t{random_bins(8, 300), random_bins(8, 301), random_bins(8, 302)};
  const std::vector<std::size_t> order{2, 0, 1};
  std::vector<ComplexPlanes> tp, ep;
  for (const auto& b : t) tp.push_back(planes(b));
  // Estimate k is a slightly perturbed copy of target order[k].
  for (std::size_t k = 0; k < 3; ++k) {
    Bins e = t[order[k]];
    for (auto& v : e) v *= 1.05;
    ep.push_back(planes(e));
  }
  const auto r = upit(tp, ep, [](const ComplexPlanes& a, const ComplexPlanes& b) { return cmse(a, b, 0.5); });
  // permutation[s] is the estimate assigned to target s.
  for (std::size_t k = 0; k < 3; ++k) REQUIRE(r.permutation[order[k]] == k);
  REQUIRE_THROWS_AS(upit(tp, {ep[0]}, [](const ComplexPlanes& a, const ComplexPlanes& b) { return cmse(a, b, 0.5); }),
                    LossError);
}

TEST_CASE("upit gradient flows only through the chosen assignment", "[loss][pit][grad]") {
  const Bins t0 = random_bins(6, 400), t1 = random_bins(6, 401);
  const Tensor e_re = random_tensor({1, 1, 6}, 402), e_im = random_tensor({1, 1, 6}, 403);
  const auto f = [&](const Var& v) {
    const ComplexPlanes e0{v, num::constant(e_im)};
    const ComplexPlanes e1 = planes(t0);
    return upit({planes(t0), planes(t1)}, {e0, e1}, [](const ComplexPlanes& a, const ComplexPlanes& b) {
             return cmse(a, b, 0.3);
           }).loss;
  };
  const auto r = num::grad_check(f, e_re);
  INFO(r.summary());
  REQUIRE(r.passed);
}
