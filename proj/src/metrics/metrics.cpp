#include "trunet/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace trunet::metrics {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// 10 log10(num / den) clamped; 0/0 counts as the floor.
double ratio_db(double num, double den) {
  if (num <= 0.0) return -kCapDb;
  if (den <= 0.0) return kCapDb;
  return std::clamp(10.0 * std::log10(num / den), -kCapDb, kCapDb);
}

void check_lengths(std::span<const double> a, std::span<const double> b, const char* op) {
  if (a.size() != b.size() || a.empty()) {
    throw MetricError(std::string(op) + ": signals must be non-empty and of equal length, got " +
                      std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
}

}  // namespace

double si_sdr(std::span<const double> estimate, std::span<const double> target) {
  check_lengths(estimate, target, "si_sdr");
  const double tt = dot(target, target);
  if (tt == 0.0) throw MetricError("si_sdr: target is silent");
  const double a = dot(estimate, target) / tt;
  double signal = 0.0, residual = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double s = a * target[i];
    signal += s * s;
    residual += (estimate[i] - s) * (estimate[i] - s);
  }
  return ratio_db(signal, residual);
}

double sir(std::span<const double> estimate, std::span<const double> target, std::span<const double> interferer) {
  check_lengths(estimate, target, "sir");
  check_lengths(estimate, interferer, "sir");
  const double tt = dot(target, target), ii = dot(interferer, interferer), ti = dot(target, interferer);
  const double det = tt * ii - ti * ti;
  if (tt == 0.0 || ii == 0.0 || det <= 1e-12 * tt * ii) {
    throw MetricError("sir: target and interferer references are rank deficient");
  }
  const double et = dot(estimate, target), ei = dot(estimate, interferer);
  // Least squares on span{t, i}.
  const double ct = (ii * et - ti * ei) / det, ci = (tt * ei - ti * et) / det;
  const double a = et / tt;
  double signal = 0.0, interference = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double pt = a * target[i];
    const double pti = ct * target[i] + ci * interferer[i];
    signal += pt * pt;
    interference += (pti - pt) * (pti - pt);
  }
  return ratio_db(signal, interference);
}

double UtteranceReport::delta_sdr() const {
  double s = 0.0;
  for (const auto& x : sources) s += x.delta_sdr();
  return sources.empty() ? 0.0 : s / static_cast<double>(sources.size());
}

double UtteranceReport::delta_sir() const {
  double s = 0.0;
  for (const auto& x : sources) s += x.delta_sir();
  return sources.empty() ? 0.0 : s / static_cast<double>(sources.size());
}

UtteranceReport evaluate(const std::vector<std::vector<double>>& separated,
                         const std::vector<std::vector<double>>& targets, std::span<const double> mixture,
                         const std::string& id) {
  const std::size_t n = targets.size();
  if (n < 2 || separated.size() != n) {
    throw MetricError("evaluate: need matching separated and target sets of at least two sources, got " +
                      std::to_string(separated.size()) + " and " + std::to_string(n));
  }
  // score[s][k]: SI-SDR of separated k against target s.
  std::vector<std::vector<double>> score(n, std::vector<double>(n));
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t k = 0; k < n; ++k) score[s][k] = si_sdr(separated[k], targets[s]);
  }
  std::vector<std::size_t> perm(n), best;
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  double best_total = 0.0;
  do {
    double total = 0.0;
    for (std::size_t s = 0; s < n; ++s) total += score[s][perm[s]];
    if (best.empty() || total > best_total) {
      best_total = total;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  UtteranceReport r;
  r.id = id;
  r.permutation = best;
  for (std::size_t s = 0; s < n; ++s) {
    // With more than two sources the interferer is the sum of the others.
    std::vector<double> others(mixture.size(), 0.0);
    for (std::size_t o = 0; o < n; ++o) {
      if (o == s) continue;
      for (std::size_t i = 0; i < others.size() && i < targets[o].size(); ++i) others[i] += targets[o][i];
    }
    SourceScores sc;
    sc.sdr = score[s][best[s]];
    sc.sdr_mixture = si_sdr(mixture, targets[s]);
    sc.sir = sir(separated[best[s]], targets[s], others);
    sc.sir_mixture = sir(mixture, targets[s], others);
    r.sources.push_back(sc);
  }
  return r;
}

double EvalReport::mean_delta_sdr() const {
  double s = 0.0;
  for (const auto& u : utterances) s += u.delta_sdr();
  return utterances.empty() ? 0.0 : s / static_cast<double>(utterances.size());
}

double EvalReport::mean_delta_sir() const {
  double s = 0.0;
  for (const auto& u : utterances) s += u.delta_sir();
  return utterances.empty() ? 0.0 : s / static_cast<double>(utterances.size());
}

std::string EvalReport::to_jsonl() const {
  using nlohmann::json;
  std::ostringstream os;
  for (const auto& u : utterances) {
    json sources = json::array();
    for (const auto& s : u.sources) {
      sources.push_back({{"si_sdr", s.sdr},
                         {"si_sdr_mixture", s.sdr_mixture},
                         {"sir", s.sir},
                         {"sir_mixture", s.sir_mixture},
                         {"delta_si_sdr", s.delta_sdr()},
                         {"delta_sir", s.delta_sir()}});
    }
    os << json{{"id", u.id},
               {"permutation", u.permutation},
               {"sources", sources},
               {"delta_si_sdr", u.delta_sdr()},
               {"delta_sir", u.delta_sir()}}
              .dump()
       << '\n';
  }
  os << json{{"aggregate", {{"utterances", utterances.size()},
                            {"delta_si_sdr", mean_delta_sdr()},
                            {"delta_sir", mean_delta_sir()}}}}
            .dump()
     << '\n';
  return os.str();
}

std::string EvalReport::to_table() const {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-24s %-8s %12s %10s\n", "utterance", "perm", "dSI-SDR[dB]", "dSIR[dB]");
  os << line;
  for (const auto& u : utterances) {
    std::string perm;
    for (std::size_t p : u.permutation) perm += std::to_string(p + 1);
    std::snprintf(line, sizeof line, "%-24s %-8s %12.2f %10.2f\n", u.id.c_str(), perm.c_str(), u.delta_sdr(),
                  u.delta_sir());
    os << line;
  }
  std::snprintf(line, sizeof line, "%-24s %-8s %12.2f %10.2f\n", "mean", "", mean_delta_sdr(), mean_delta_sir());
  os << line;
  return os.str();
}

}  // namespace trunet::metrics
