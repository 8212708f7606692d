#include "trunet/numerics/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace trunet::num {

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  os << (passed ? "PASS" : "FAIL") << " max_rel_err=" << max_rel_error << " at [" << worst_index
     << "] tape=" << worst_tape << " fd=" << worst_fd << " checked=" << checked;
  if (skipped) os << " skipped=" << skipped;
  return os.str();
}

namespace {

double evaluate(const ScalarFn& f, const Tensor& x, std::size_t coord) {
  const Var out = f(constant(x));
  if (out.size() != 1) throw ShapeError("grad_check", "function must return a scalar, got " + to_string(out.shape()));
  const double v = out.value()[0];
  if (!std::isfinite(v)) {
    throw NumericError("grad_check: function is not finite when perturbing coordinate " + std::to_string(coord));
  }
  return v;
}

struct Estimate {
  double value;
  double error;
};

// Neville tableau over central differences with steps h, h/1.4, h/1.4^2, ...
// Stops once the diagonal error grows past twice the best seen.
template <typename At>
Estimate ridders(const At& at, double h, std::size_t levels) {
  constexpr double kShrink = 1.4, kShrink2 = kShrink * kShrink, kSafe = 2.0;
  std::vector<std::vector<double>> a(levels, std::vector<double>(levels, 0.0));
  a[0][0] = (at(h) - at(-h)) / (2.0 * h);
  Estimate best{a[0][0], std::numeric_limits<double>::infinity()};
  for (std::size_t i = 1; i < levels; ++i) {
    h /= kShrink;
    a[0][i] = (at(h) - at(-h)) / (2.0 * h);
    double fac = kShrink2;
    for (std::size_t j = 1; j <= i; ++j) {
      a[j][i] = (a[j - 1][i] * fac - a[j - 1][i - 1]) / (fac - 1.0);
      fac *= kShrink2;
      const double e = std::max(std::abs(a[j][i] - a[j - 1][i]), std::abs(a[j][i] - a[j - 1][i - 1]));
      if (e <= best.error) best = {a[j][i], e};
    }
    if (std::abs(a[i][i] - a[i - 1][i - 1]) >= kSafe * best.error) break;
  }
  return best;
}

}  // namespace

GradCheckReport grad_check(const ScalarFn& f, const Tensor& point, const GradCheckOptions& options) {
  Tape tape;
  const Var x = tape.leaf(point);
  const Var y = f(x);
  if (y.size() != 1) throw ShapeError("grad_check", "function must return a scalar, got " + to_string(y.shape()));
  if (!std::isfinite(y.value()[0])) throw NumericError("grad_check: function is not finite at the base point");
  Tensor analytic(point.shape());
  if (y.requires_grad()) {
    tape.backward(y);
    analytic = x.grad();
  }

  std::vector<std::size_t> coords(point.size());
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  if (options.max_coords && options.max_coords < coords.size()) {
    std::mt19937_64 rng(options.seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(options.max_coords);
    std::sort(coords.begin(), coords.end());
  }

  const double floor = std::max(options.absolute_floor, options.relative_floor * max_abs(analytic));
  GradCheckReport report;
  Tensor probe = point;
  const double base = y.value()[0];
  for (std::size_t c : coords) {
    const double orig = probe[c];
    const auto at = [&](double offset) {
      probe[c] = orig + offset;
      return evaluate(f, probe, c);
    };
    double fd = 0.0;
    bool kink = false;
    if (options.ridders) {
      const Estimate e = ridders(at, options.step, std::max<std::size_t>(options.ridders_levels, 2));
      fd = e.value;
      kink = options.kink_guard > 0.0 && e.error > options.kink_guard * std::max(std::abs(fd), floor);
    } else if (options.five_point) {
      double h = options.step;
      for (std::size_t attempt = 0; attempt <= options.kink_retries; ++attempt, h /= 4.0) {
        const double p1 = at(h), m1 = at(-h), p2 = at(2.0 * h), m2 = at(-2.0 * h);
        const double d1 = (p1 - m1) / (2.0 * h);
        const double d2 = (p2 - m2) / (4.0 * h);
        fd = (4.0 * d1 - d2) / 3.0;
        if (options.kink_guard <= 0.0) break;
        // h times the second differences at h and 2h. Both estimate h f''
        // on smooth f; a slope jump J within 2h separates either them or
        // the first differences by at least |J|/8.
        const double s1 = (p1 - 2.0 * base + m1) / h;
        const double s2 = (p2 - 2.0 * base + m2) / (4.0 * h);
        const double signal = std::max(std::abs(d2 - d1), std::abs(s1 - s2));
        // Bound on what rounding in the five evaluations contributes to it.
        const double fmax = std::max({std::abs(base), std::abs(p1), std::abs(m1), std::abs(p2), std::abs(m2)});
        const double noise = 8.0 * std::numeric_limits<double>::epsilon() * fmax / h;
        kink = signal > options.kink_guard * std::max(std::abs(d1), floor) + noise;
        if (!kink) break;
      }
    } else {
      const double h = options.step;
      fd = (at(h) - at(-h)) / (2.0 * h);
    }
    probe[c] = orig;
    if (kink) {
      ++report.skipped;
      continue;
    }
    const double a = analytic[c];
    const double denom = std::max({std::abs(a), std::abs(fd), floor});
    const double err = std::abs(a - fd) / denom;
    if (err > report.max_rel_error || report.checked == 0) {
      report.max_rel_error = err;
      report.worst_index = c;
      report.worst_tape = a;
      report.worst_fd = fd;
    }
    ++report.checked;
  }
  const double total = static_cast<double>(report.checked + report.skipped);
  report.passed = report.max_rel_error <= options.tolerance &&
                  static_cast<double>(report.skipped) <= options.max_skipped_fraction * total;
  return report;
}

std::string ParamGradCheckReport::summary() const {
  std::ostringstream os;
  os << (passed ? "PASS" : "FAIL") << " over " << per_param.size() << " tensors, max_rel_err=" << max_rel_error;
  if (!worst_param.empty()) os << " in " << worst_param;
  return os.str();
}

ParamGradCheckReport grad_check_params(const ParameterStore& store, const ParamLossFn& loss,
                                       const GradCheckOptions& options) {
  return grad_check_params(store, loss, [&](const std::string&) { return options; });
}

ParamGradCheckReport grad_check_params(const ParameterStore& store, const ParamLossFn& loss,
                                       const ParamOptionsFn& options_for) {
  ParamGradCheckReport out;
  for (const std::string& name : store.names()) {
    const auto f = [&](const Var& x) {
      ParamView view(store, x.tape());
      view.bind(name, x);
      return loss(view);
    };
    GradCheckReport r = grad_check(f, store.get(name), options_for(name));
    if (r.max_rel_error > out.max_rel_error || out.per_param.empty()) {
      out.max_rel_error = r.max_rel_error;
      out.worst_param = name;
    }
    out.passed = out.passed && r.passed;
    out.per_param.emplace_back(name, std::move(r));
  }
  return out;
}

}  // namespace trunet::num
