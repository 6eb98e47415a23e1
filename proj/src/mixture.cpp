#include "falter/classify.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numbers>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "falter/errors.hpp"
#include "falter/report.hpp"
#include "falter/rng.hpp"

namespace falter {

namespace {

struct Params {
  std::array<double, 2> w, mu, var;
};

double log_normal(double x, double mu, double var) {
  const double d = x - mu;
  return -0.5 * (std::log(2.0 * std::numbers::pi * var) + d * d / var);
}

struct Run {
  Params params;
  std::vector<double> trace;
  bool converged = false;
  bool collapsed = false;
  bool monotone = true;
  int iterations = 0;
};

// E-step: fills resp with P(component 0 | x) and returns the log-likelihood.
double e_step(std::span<const double> x, const Params& p, std::vector<double>& resp) {
  double ll = 0.0;
  const double lw0 = std::log(p.w[0]);
  const double lw1 = std::log(p.w[1]);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double l0 = lw0 + log_normal(x[i], p.mu[0], p.var[0]);
    const double l1 = lw1 + log_normal(x[i], p.mu[1], p.var[1]);
    const double top = std::max(l0, l1);
    const double lse = top + std::log(std::exp(l0 - top) + std::exp(l1 - top));
    ll += lse;
    resp[i] = std::exp(l0 - lse);
  }
  return ll;
}

Run run_em(std::span<const double> x, Params p, double floor, const EmOptions& opt) {
  Run run;
  const auto n = static_cast<double>(x.size());
  std::vector<double> resp(x.size());
  double prev = e_step(x, p, resp);
  run.trace.push_back(prev);
  for (int it = 0; it < opt.max_iterations; ++it) {
    double r0 = 0.0, s0 = 0.0, s1 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      r0 += resp[i];
      s0 += resp[i] * x[i];
      s1 += (1.0 - resp[i]) * x[i];
    }
    const double r1 = n - r0;
    if (r0 <= 1e-12 * n || r1 <= 1e-12 * n) {
      run.collapsed = true;
      break;
    }
    p.w = {r0 / n, r1 / n};
    p.mu = {s0 / r0, s1 / r1};
    double v0 = 0.0, v1 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      v0 += resp[i] * (x[i] - p.mu[0]) * (x[i] - p.mu[0]);
      v1 += (1.0 - resp[i]) * (x[i] - p.mu[1]) * (x[i] - p.mu[1]);
    }
    p.var = {std::max(v0 / r0, floor), std::max(v1 / r1, floor)};
    run.collapsed = p.var[0] <= floor || p.var[1] <= floor;

    const double ll = e_step(x, p, resp);
    run.trace.push_back(ll);
    ++run.iterations;
    if (ll < prev - opt.monotone_slack * std::max(1.0, std::abs(prev))) run.monotone = false;
    if (std::abs(ll - prev) < opt.tolerance) {
      run.converged = true;
      break;
    }
    prev = ll;
  }
  run.params = p;
  return run;
}

}  // namespace

MixtureEstimate fit_gmm2(std::span<const double> values, std::uint64_t seed,
                         const EmOptions& options) {
  const std::size_t n = values.size();
  if (n < 4) throw DataError("mixture fit needs at least four velocities");
  for (double v : values)
    if (!std::isfinite(v)) throw DataError("mixture fit: non-finite velocity");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  if (sorted.front() == sorted.back()) throw DataError("mixture fit: all velocities are equal");

  const double mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(n);
  double var = 0.0;
  for (double v : sorted) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  const double floor = options.variance_floor * var;
  const double sd = std::sqrt(var);

  // median split
  const std::size_t half = n / 2;
  auto moments = [&](std::size_t first, std::size_t last, double& m, double& v) {
    m = 0.0;
    for (std::size_t i = first; i < last; ++i) m += sorted[i];
    m /= static_cast<double>(last - first);
    v = 0.0;
    for (std::size_t i = first; i < last; ++i) v += (sorted[i] - m) * (sorted[i] - m);
    v = std::max(v / static_cast<double>(last - first), floor);
  };
  Params base;
  moments(0, half, base.mu[0], base.var[0]);
  moments(half, n, base.mu[1], base.var[1]);
  base.w = {static_cast<double>(half) / static_cast<double>(n),
            static_cast<double>(n - half) / static_cast<double>(n)};

  CounterRng rng(seed);
  std::normal_distribution<double> jitter(0.0, options.jitter * sd);
  Run best;
  bool have = false;
  bool all_monotone = true;
  const int restarts = std::max(1, options.restarts);
  for (int r = 0; r < restarts; ++r) {
    Params start = base;
    if (r > 0) {
      start.mu[0] += jitter(rng);
      start.mu[1] += jitter(rng);
    }
    Run run = run_em(values, start, floor, options);
    all_monotone = all_monotone && run.monotone;
    const double ll = run.trace.back();
    const bool better = !have || (best.collapsed && !run.collapsed) ||
                        (best.collapsed == run.collapsed && ll > best.trace.back());
    if (better) {
      best = std::move(run);
      have = true;
    }
  }

  Params p = best.params;
  if (p.mu[0] > p.mu[1]) {
    std::swap(p.w[0], p.w[1]);
    std::swap(p.mu[0], p.mu[1]);
    std::swap(p.var[0], p.var[1]);
  }
  MixtureEstimate out;
  out.weights = p.w;
  out.means = p.mu;
  out.sds = {std::sqrt(p.var[0]), std::sqrt(p.var[1])};
  out.posteriors.resize(n);
  out.loglik = e_step(values, p, out.posteriors);
  out.loglik_trace = std::move(best.trace);
  out.converged = best.converged;
  out.collapsed = best.collapsed;
  out.monotone = all_monotone;
  out.iterations = best.iterations;
  return out;
}

MixtureFit fit_gmm2(const VelocityTable& velocities, std::uint64_t seed, const EmOptions& options) {
  const auto values = velocities.values();
  const auto est = fit_gmm2(values, seed, options);
  MixtureFit fit;
  fit.weights = est.weights;
  fit.means = est.means;
  fit.sds = est.sds;
  fit.loglik = est.loglik;
  fit.converged = est.converged;
  fit.collapsed = est.collapsed;
  fit.monotone = est.monotone;
  fit.iterations = est.iterations;
  fit.restarts = options.restarts;
  std::size_t i = 0;
  for (const auto& [id, v] : velocities.entries) fit.posteriors[id] = est.posteriors[i++];
  return fit;
}

double MixtureFit::posterior(double x) const {
  const double l0 = std::log(weights[0]) + log_normal(x, means[0], sds[0] * sds[0]);
  const double l1 = std::log(weights[1]) + log_normal(x, means[1], sds[1] * sds[1]);
  return 1.0 / (1.0 + std::exp(l1 - l0));
}

double MixtureFit::density(double x) const {
  double f = 0.0;
  for (int k = 0; k < 2; ++k) f += weights[k] * std::exp(log_normal(x, means[k], sds[k] * sds[k]));
  return f;
}

std::string MixtureFit::to_json() const {
  nlohmann::json j;
  j["components"] = {
      {{"label", "faltering"}, {"weight", weights[0]}, {"mean", means[0]}, {"sd", sds[0]}},
      {{"label", "non-faltering"}, {"weight", weights[1]}, {"mean", means[1]}, {"sd", sds[1]}}};
  j["loglik"] = loglik;
  j["converged"] = converged;
  j["collapsed"] = collapsed;
  j["monotone"] = monotone;
  j["iterations"] = iterations;
  j["restarts"] = restarts;
  j["n"] = posteriors.size();
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// Classification
// ---------------------------------------------------------------------------

std::size_t Classification::faltering_count() const {
  return static_cast<std::size_t>(
      std::count_if(faltering.begin(), faltering.end(), [](const auto& kv) { return kv.second; }));
}

void Classification::write_csv(std::ostream& os) const {
  os << "child_id,label,posterior\n";
  for (const auto& [id, f] : faltering) {
    os << id << ',' << (f ? "faltering" : "non-faltering") << ',';
    if (const auto it = posteriors.find(id); it != posteriors.end()) os << format_double(it->second);
    os << '\n';
  }
}

Classification Classification::read_csv(std::istream& is) {
  Classification c;
  std::string line;
  if (!std::getline(is, line) || line.rfind("child_id,label,posterior", 0) != 0)
    throw DataError("labels file: expected header child_id,label,posterior");
  bool any_posterior = false;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() == 2) f.emplace_back();
    if (f.size() != 3) throw DataError("labels file line " + std::to_string(line_no) + ": expected 3 fields");
    if (f[1] != "faltering" && f[1] != "non-faltering")
      throw DataError("labels file line " + std::to_string(line_no) + ": unknown label '" + f[1] + "'");
    if (!c.faltering.emplace(f[0], f[1] == "faltering").second)
      throw DataError("labels file: duplicate child '" + f[0] + "'");
    if (!f[2].empty()) {
      any_posterior = true;
      c.posteriors[f[0]] = parse_double_or_throw(f[2], "labels file line " + std::to_string(line_no));
    }
  }
  c.method = any_posterior ? Method::MM : Method::TH;
  return c;
}

Classification mm_classify(const MixtureFit& mixture, double cutoff) {
  if (!(cutoff >= 0.0 && cutoff <= 1.0)) throw ConfigError("cutoff must lie in [0, 1]");
  Classification c;
  c.method = Method::MM;
  c.mixture = mixture;
  c.posteriors = mixture.posteriors;
  for (const auto& [id, post] : mixture.posteriors) c.faltering[id] = post >= cutoff;
  return c;
}

std::vector<bool> threshold_labels(std::span<const double> values, double proportion) {
  if (!(proportion >= 0.0 && proportion < 1.0))
    throw ConfigError("threshold proportion must lie in [0, 1)");
  const std::size_t n = values.size();
  const auto m = static_cast<std::size_t>(std::floor(proportion * static_cast<double>(n) + 1e-9));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<bool> labels(n, false);
  for (std::size_t k = 0; k < m; ++k) labels[order[k]] = true;
  return labels;
}

Classification threshold_classify(const VelocityTable& velocities, double proportion) {
  const auto values = velocities.values();
  const auto labels = threshold_labels(values, proportion);
  Classification c;
  c.method = Method::TH;
  c.proportion = proportion;
  std::size_t i = 0;
  for (const auto& [id, v] : velocities.entries) {
    const bool f = labels[i++];
    c.faltering[id] = f;
    if (f) c.threshold = std::max(c.threshold.value_or(v), v);
  }
  return c;
}

}  // namespace falter
