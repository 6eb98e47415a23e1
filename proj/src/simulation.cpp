#include "falter/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include <omp.h>

#include "falter/errors.hpp"
#include "falter/mixed_model.hpp"
#include "falter/report.hpp"
#include "falter/rng.hpp"
#include "falter/velocity.hpp"

namespace falter {

namespace {

enum StreamPurpose : std::uint64_t { kCohortStream = 1, kMixtureStream = 100 };

std::size_t subgroup_slot(Subgroup g) {
  switch (g) {
    case Subgroup::Mild: return 0;
    case Subgroup::Severe: return 1;
    case Subgroup::Level: return 2;
    case Subgroup::Catchup: return 3;
    case Subgroup::General: break;
  }
  return 4;
}

std::string child_name(std::size_t i, std::size_t n) {
  const int width = static_cast<int>(std::to_string(n).size());
  char buf[32];
  std::snprintf(buf, sizeof buf, "c%0*zu", width, i + 1);
  return buf;
}

}  // namespace

std::string_view to_string(Subgroup subgroup) {
  switch (subgroup) {
    case Subgroup::General: return "General";
    case Subgroup::Mild: return "Mild";
    case Subgroup::Severe: return "Severe";
    case Subgroup::Level: return "Level";
    case Subgroup::Catchup: return "Catchup";
  }
  return "?";
}

std::string_view to_string(Design design) { return design == Design::Dense ? "dense" : "sparse"; }

Design parse_design(std::string_view name) {
  if (name == "dense") return Design::Dense;
  if (name == "sparse") return Design::Sparse;
  throw ConfigError("design must be 'dense' or 'sparse'");
}

std::string_view to_string(Classifier classifier) {
  return classifier == Classifier::TH ? "TH" : "MM";
}

std::size_t metric_index(Metric metric) {
  for (std::size_t i = 0; i < kSimulationMetrics.size(); ++i)
    if (kSimulationMetrics[i] == metric) return i;
  throw ConfigError("metric " + std::string(to_string(metric)) + " is not scored in simulations");
}

ScenarioConfig ScenarioConfig::preset(Design design, double proportion) {
  ScenarioConfig cfg;
  cfg.proportion_faltering = proportion;
  if (design == Design::Sparse) {
    cfg.obs_min = 2;
    cfg.obs_max = 6;
  }
  return cfg;
}

std::size_t ScenarioConfig::faltering_total() const {
  return static_cast<std::size_t>(std::llround(proportion_faltering * static_cast<double>(n_children)));
}

std::array<std::size_t, 4> ScenarioConfig::subgroup_counts() const {
  constexpr std::array<std::size_t, 4> ratio{5, 2, 2, 1};
  const std::size_t total = faltering_total();
  std::array<std::size_t, 4> counts{};
  std::array<std::size_t, 4> remainder{};
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < 4; ++k) {
    counts[k] = total * ratio[k] / 10;
    remainder[k] = total * ratio[k] % 10;
    assigned += counts[k];
  }
  while (assigned < total) {
    const auto k = static_cast<std::size_t>(
        std::max_element(remainder.begin(), remainder.end()) - remainder.begin());
    ++counts[k];
    remainder[k] = 0;
    ++assigned;
  }
  return counts;
}

void ScenarioConfig::validate() const {
  if (n_children < 2) throw ConfigError("n_children must be at least 2");
  if (!(proportion_faltering >= 0.0 && proportion_faltering < 1.0))
    throw ConfigError("proportion_faltering must lie in [0, 1)");
  if (!(sigma_omega >= 0.0) || !(sigma_epsilon >= 0.0))
    throw ConfigError("standard deviations must be non-negative");
  if (obs_min < 2 || obs_max < obs_min) throw ConfigError("observation range must satisfy 2 <= min <= max");
  if (n_replications < 1) throw ConfigError("at least one replication is required");
  const auto k = knots();
  if (k.left() != 0.0 || k.right() != 1.0)
    throw ConfigError("simulation knots must span the [0, 1] window");
  if (!(kappa_break > 0.0 && kappa_break < 1.0)) throw ConfigError("break age must lie in (0, 1)");
}

Cohort generate_population(const ScenarioConfig& config, std::size_t replication) {
  config.validate();
  auto rng = CounterRng::stream(config.seed, replication, kCohortStream);
  std::normal_distribution<double> std_normal(0.0, 1.0);
  auto normal = [&](double mean, double sd) { return sd > 0.0 ? mean + sd * std_normal(rng) : mean; };
  auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };

  const std::size_t n = config.n_children;
  std::vector<Subgroup> groups(n, Subgroup::General);
  {
    const auto counts = config.subgroup_counts();
    std::size_t pos = 0;
    for (std::size_t k = 0; k < 4; ++k)
      for (std::size_t c = 0; c < counts[k]; ++c) groups[pos++] = kFalteringSubgroups[k];
    std::shuffle(groups.begin(), groups.end(), rng);
  }

  const double sw = config.sigma_omega;
  const double kb = config.kappa_break;
  std::vector<ChildSeries> children;
  children.reserve(n);
  std::map<std::string, Subgroup> truth;

  for (std::size_t i = 0; i < n; ++i) {
    const Subgroup g = groups[i];
    double slope1 = 0.0;
    double slope2 = 0.0;  // slope after the break
    bool broken = false;
    switch (g) {
      case Subgroup::General: slope1 = normal(-1.0, sw); break;
      case Subgroup::Mild: slope1 = normal(-2.5, sw); break;
      case Subgroup::Severe: slope1 = normal(-4.5, sw); break;
      case Subgroup::Level:
        slope1 = normal(-3.5, sw);
        slope2 = normal(0.0, sw);
        broken = true;
        break;
      case Subgroup::Catchup:
        slope1 = normal(-4.5, sw);
        slope2 = normal(0.75, sw);
        broken = true;
        break;
    }
    const int count = std::uniform_int_distribution<int>(config.obs_min, config.obs_max)(rng);
    std::vector<double> ages;
    ages.reserve(static_cast<std::size_t>(count));
    ages.push_back(uniform(0.0, 1.0 / 12.0));
    ages.push_back(uniform(11.0 / 12.0, 1.0));
    for (int k = 2; k < count; ++k) ages.push_back(uniform(1.0 / 12.0, 11.0 / 12.0));
    std::sort(ages.begin(), ages.end());
    ages.erase(std::unique(ages.begin(), ages.end()), ages.end());

    ChildSeries series{child_name(i, n), {}};
    for (double t : ages) {
      const double mean = (!broken || t < kb) ? slope1 * t : slope1 * kb + slope2 * (t - kb);
      series.measurements.push_back({t, mean + normal(0.0, config.sigma_epsilon)});
    }
    truth.emplace(series.child_id, g);
    children.push_back(std::move(series));
  }
  // generated cohorts are not subject to the extreme-value exclusion
  return {GrowthDataset(std::move(children), AnalysisWindow(0.0, 1.0),
                        std::numeric_limits<double>::infinity()),
          std::move(truth)};
}

std::size_t TruePositives::total() const {
  return std::accumulate(by_subgroup.begin(), by_subgroup.end(), std::size_t{0});
}

ReplicationResult run_replication(const ScenarioConfig& config, std::size_t replication) {
  const Cohort cohort = generate_population(config, replication);
  const auto& data = cohort.dataset;

  ReplicationResult result;
  result.replication = replication;
  result.subgroup_sizes = config.subgroup_counts();

  const auto rs_fit = fit_mixed_model(data, ModelSpec::random_slopes());
  const auto bs_fit = fit_mixed_model(data, ModelSpec::broken_stick(config.knots()));
  result.rs_converged = rs_fit.converged;
  result.broken_stick_converged = bs_fit.converged;
  const auto slopes = segment_slopes(bs_fit);

  const std::array<VelocityTable, 4> tables{sds(data), rs(rs_fit), ars(slopes, config.knots()),
                                            mrs(slopes)};

  for (std::size_t m = 0; m < tables.size(); ++m) {
    const auto& table = tables[m];
    std::vector<double> values;
    std::vector<Subgroup> truth;
    values.reserve(table.entries.size());
    for (const auto& [id, v] : table.entries) {
      values.push_back(v);
      truth.push_back(cohort.truth.at(id));
    }
    const auto th = threshold_labels(values, config.proportion_faltering);
    std::vector<bool> mm(values.size(), false);
    try {
      auto seed_rng = CounterRng::stream(config.seed, replication, kMixtureStream + m);
      const auto mix = fit_gmm2(values, seed_rng());
      for (std::size_t i = 0; i < values.size(); ++i) mm[i] = mix.posteriors[i] >= 0.5;
      result.mixture_collapsed[m] = mix.collapsed;
    } catch (const DataError&) {
      result.mixture_collapsed[m] = true;
    }
    for (std::size_t c = 0; c < 2; ++c) {
      const auto& labels = c == 0 ? th : mm;
      auto& tp = result.true_positives[m][c];
      for (std::size_t i = 0; i < labels.size(); ++i) {
        if (!labels[i]) continue;
        ++tp.flagged;
        const auto slot = subgroup_slot(truth[i]);
        if (slot < 4) ++tp.by_subgroup[slot];
      }
    }
    result.agreement[m] = agreement(th, mm);
  }
  return result;
}

std::vector<ReplicationResult> run_scenario(const ScenarioConfig& config, Execution execution) {
  config.validate();
  const auto reps = static_cast<std::ptrdiff_t>(config.n_replications);
  std::vector<ReplicationResult> results(config.n_replications);
  if (execution == Execution::Serial) {
    for (std::ptrdiff_t r = 0; r < reps; ++r)
      results[static_cast<std::size_t>(r)] = run_replication(config, static_cast<std::size_t>(r));
    return results;
  }
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t r = 0; r < reps; ++r) {
    try {
      results[static_cast<std::size_t>(r)] = run_replication(config, static_cast<std::size_t>(r));
    } catch (...) {
#pragma omp critical(falter_scenario_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return results;
}

// ---------------------------------------------------------------------------
// Aggregation and tables
// ---------------------------------------------------------------------------

ScenarioReport aggregate(const std::vector<ReplicationResult>& results) {
  if (results.empty()) throw ConfigError("aggregate needs at least one replication");
  ScenarioReport rep;
  rep.replications = results.size();
  rep.subgroup_sizes = results.front().subgroup_sizes;
  const double n = static_cast<double>(results.size());
  for (std::size_t m = 0; m < 4; ++m) {
    std::size_t kappa_count = 0;
    double kappa_sum = 0.0;
    for (const auto& r : results) {
      for (std::size_t c = 0; c < 2; ++c) {
        const auto& tp = r.true_positives[m][c];
        for (std::size_t g = 0; g < 4; ++g)
          rep.mean_true_positives[m][c][g] += static_cast<double>(tp.by_subgroup[g]) / n;
        rep.mean_true_positives[m][c][4] += static_cast<double>(tp.total()) / n;
      }
      const auto& a = r.agreement[m];
      rep.mean_discordance[m] += a.percent_discordance / n;
      if (a.kappa_defined) {
        kappa_sum += a.kappa;
        ++kappa_count;
      }
      if (a.significant(0.01)) rep.percent_significant[m] += 100.0 / n;
    }
    rep.mean_kappa[m] = kappa_count ? kappa_sum / static_cast<double>(kappa_count)
                                    : std::numeric_limits<double>::quiet_NaN();
  }
  for (const auto& r : results)
    rep.nonconverged_fits += (r.rs_converged ? 0 : 1) + (r.broken_stick_converged ? 0 : 1);
  return rep;
}

double ScenarioReport::total(Metric metric, Classifier classifier) const {
  return mean_true_positives[metric_index(metric)][classifier == Classifier::TH ? 0 : 1][4];
}

double ScenarioReport::subgroup(Metric metric, Classifier classifier, Subgroup g) const {
  const auto slot = subgroup_slot(g);
  if (slot >= 4) throw ConfigError("true positives are tracked for faltering subgroups only");
  return mean_true_positives[metric_index(metric)][classifier == Classifier::TH ? 0 : 1][slot];
}

double ScenarioReport::kappa(Metric metric) const { return mean_kappa[metric_index(metric)]; }
double ScenarioReport::discordance(Metric metric) const { return mean_discordance[metric_index(metric)]; }
double ScenarioReport::significant(Metric metric) const { return percent_significant[metric_index(metric)]; }

void ScenarioReport::write_true_positives_csv(std::ostream& os) const {
  os << "subgroup,N";
  for (Metric m : kSimulationMetrics)
    for (Classifier c : kClassifiers) os << ',' << to_string(m) << '_' << to_string(c);
  os << '\n';
  std::size_t total_n = 0;
  for (std::size_t g = 0; g <= 4; ++g) {
    if (g < 4) {
      os << to_string(kFalteringSubgroups[g]) << ',' << subgroup_sizes[g];
      total_n += subgroup_sizes[g];
    } else {
      os << "Total," << total_n;
    }
    for (std::size_t m = 0; m < 4; ++m)
      for (std::size_t c = 0; c < 2; ++c) os << ',' << format_fixed(mean_true_positives[m][c][g], 2);
    os << '\n';
  }
}

void ScenarioReport::write_agreement_csv(std::ostream& os) const {
  os << "metric,percent_discordance,kappa,percent_significant\n";
  for (std::size_t m = 0; m < 4; ++m)
    os << to_string(kSimulationMetrics[m]) << ',' << format_fixed(mean_discordance[m], 2) << ','
       << format_fixed(mean_kappa[m], 2) << ',' << format_fixed(percent_significant[m], 0) << '\n';
}

void write_replications_csv(std::ostream& os, const std::vector<ReplicationResult>& results) {
  os << "replication,metric,n_mild,n_severe,n_level,n_catchup,"
        "th_mild,th_severe,th_level,th_catchup,th_flagged,"
        "mm_mild,mm_severe,mm_level,mm_catchup,mm_flagged,"
        "agree_n,discordance,kappa_defined,kappa,kappa_z,kappa_p,"
        "rs_converged,bs_converged,mm_collapsed\n";
  for (const auto& r : results) {
    for (std::size_t m = 0; m < 4; ++m) {
      os << r.replication << ',' << to_string(kSimulationMetrics[m]);
      for (auto s : r.subgroup_sizes) os << ',' << s;
      for (std::size_t c = 0; c < 2; ++c) {
        for (auto v : r.true_positives[m][c].by_subgroup) os << ',' << v;
        os << ',' << r.true_positives[m][c].flagged;
      }
      const auto& a = r.agreement[m];
      os << ',' << a.n << ',' << format_double(a.percent_discordance) << ',' << (a.kappa_defined ? 1 : 0)
         << ',' << (a.kappa_defined ? format_double(a.kappa) : "") << ','
         << (a.kappa_defined ? format_double(a.kappa_z) : "") << ','
         << (a.kappa_defined ? format_double(a.kappa_p) : "") << ',' << (r.rs_converged ? 1 : 0)
         << ',' << (r.broken_stick_converged ? 1 : 0) << ',' << (r.mixture_collapsed[m] ? 1 : 0)
         << '\n';
    }
  }
}

std::vector<ReplicationResult> read_replications_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("replication,metric,", 0) != 0)
    throw DataError("replications file: unexpected header");
  std::vector<ReplicationResult> out;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    while (f.size() < 25) f.emplace_back();
    if (f.size() != 25) throw DataError("replications file line " + std::to_string(line_no) + ": expected 25 fields");
    const std::string where = "replications file line " + std::to_string(line_no);
    try {
      const auto rep = static_cast<std::size_t>(std::stoull(f[0]));
      const auto m = metric_index(parse_metric(f[1]));
      if (out.empty() || out.back().replication != rep) {
        out.emplace_back();
        out.back().replication = rep;
      }
      auto& r = out.back();
      std::size_t k = 2;
      for (auto& s : r.subgroup_sizes) s = std::stoull(f[k++]);
      for (std::size_t c = 0; c < 2; ++c) {
        for (auto& v : r.true_positives[m][c].by_subgroup) v = std::stoull(f[k++]);
        r.true_positives[m][c].flagged = std::stoull(f[k++]);
      }
      auto& a = r.agreement[m];
      a.n = std::stoull(f[k++]);
      a.percent_discordance = parse_double_or_throw(f[k++], where);
      a.kappa_defined = f[k++] == "1";
      if (a.kappa_defined) {
        a.kappa = parse_double_or_throw(f[k], where);
        a.kappa_z = parse_double_or_throw(f[k + 1], where);
        a.kappa_p = parse_double_or_throw(f[k + 2], where);
      }
      k += 3;
      r.rs_converged = f[k++] == "1";
      r.broken_stick_converged = f[k++] == "1";
      r.mixture_collapsed[m] = f[k++] == "1";
    } catch (const std::logic_error&) {
      throw DataError("replications file line " + std::to_string(line_no) + ": malformed value");
    }
  }
  if (out.empty()) throw DataError("replications file has no rows");
  return out;
}

}  // namespace falter
