#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "falter/errors.hpp"
#include "falter/simulation.hpp"

using namespace falter;

namespace {

ScenarioConfig small(Design design, double p, std::size_t n = 300) {
  auto cfg = ScenarioConfig::preset(design, p);
  cfg.n_children = n;
  cfg.n_replications = 2;
  return cfg;
}

std::string csv_of(const std::vector<ReplicationResult>& r) {
  std::ostringstream out;
  write_replications_csv(out, r);
  return out.str();
}

}  // namespace

TEST_CASE("subgroup sizes follow the table layout") {
  using A = std::array<std::size_t, 4>;
  CHECK(ScenarioConfig::preset(Design::Dense, 0.05).subgroup_counts() == A{25, 10, 10, 5});
  CHECK(ScenarioConfig::preset(Design::Dense, 0.10).subgroup_counts() == A{50, 20, 20, 10});
  CHECK(ScenarioConfig::preset(Design::Sparse, 0.20).subgroup_counts() == A{100, 40, 40, 20});
  for (std::size_t n : {7, 33, 101, 333, 999})
    for (double p : {0.05, 0.1, 0.2, 0.37}) {
      auto cfg = ScenarioConfig::preset(Design::Dense, p);
      cfg.n_children = n;
      const auto c = cfg.subgroup_counts();
      CHECK(c[0] + c[1] + c[2] + c[3] == cfg.faltering_total());
      CHECK(cfg.faltering_total() == static_cast<std::size_t>(std::llround(p * static_cast<double>(n))));
    }
}

TEST_CASE("presets and validation") {
  const auto dense = ScenarioConfig::preset(Design::Dense, 0.1);
  const auto sparse = ScenarioConfig::preset(Design::Sparse, 0.1);
  CHECK(dense.obs_min == 6);
  CHECK(dense.obs_max == 12);
  CHECK(sparse.obs_min == 2);
  CHECK(sparse.obs_max == 6);
  CHECK(dense.knots() == KnotVector({0.0, 0.25, 0.5, 0.75}, 1.0));
  auto bad = dense;
  bad.obs_min = 1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = dense;
  bad.proportion_faltering = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK(parse_design("sparse") == Design::Sparse);
  CHECK_THROWS_AS(parse_design("medium"), ConfigError);
}

TEST_CASE("generated schedules") {
  for (auto design : {Design::Dense, Design::Sparse}) {
    const auto cfg = ScenarioConfig::preset(design, 0.1);
    const auto cohort = generate_population(cfg, 0);
    CHECK(cohort.dataset.size() == cfg.n_children);
    std::array<std::size_t, 5> seen{};
    for (const auto& [id, g] : cohort.truth) ++seen[static_cast<std::size_t>(g)];
    CHECK(seen[1] == 50);
    CHECK(seen[2] == 20);
    CHECK(seen[3] == 20);
    CHECK(seen[4] == 10);
    std::array<int, 13> count_hist{};
    for (const auto& child : cohort.dataset.children()) {
      const auto& m = child.measurements;
      const int k = static_cast<int>(m.size());
      CHECK(k >= cfg.obs_min);
      CHECK(k <= cfg.obs_max);
      ++count_hist[static_cast<std::size_t>(k)];
      int early = 0, late = 0;
      for (const auto& x : m) {
        CHECK(x.age >= 0.0);
        CHECK(x.age <= 1.0);
        early += x.age <= 1.0 / 12.0;
        late += x.age >= 11.0 / 12.0;
      }
      CHECK(early == 1);
      CHECK(late == 1);
    }
    // every count in the range occurs
    for (int k = cfg.obs_min; k <= cfg.obs_max; ++k) CHECK(count_hist[static_cast<std::size_t>(k)] > 0);
  }
}

TEST_CASE("noise-free trajectories") {
  auto cfg = ScenarioConfig::preset(Design::Dense, 0.2);
  cfg.sigma_omega = 0.0;
  cfg.sigma_epsilon = 0.0;
  const auto cohort = generate_population(cfg, 3);
  const double kb = 1.0 / 3.0;
  for (const auto& child : cohort.dataset.children()) {
    const auto g = cohort.truth.at(child.child_id);
    for (const auto& m : child.measurements) {
      const double t = m.age;
      double expected = 0.0;
      switch (g) {
        case Subgroup::General: expected = -1.0 * t; break;
        case Subgroup::Mild: expected = -2.5 * t; break;
        case Subgroup::Severe: expected = -4.5 * t; break;
        case Subgroup::Level: expected = t < kb ? -3.5 * t : -3.5 * kb; break;
        case Subgroup::Catchup: expected = t < kb ? -4.5 * t : -4.5 * kb + 0.75 * (t - kb); break;
      }
      CHECK(m.zscore == doctest::Approx(expected).epsilon(1e-14));
    }
  }
  // average velocity over the year
  CHECK(-3.5 * kb == doctest::Approx(-7.0 / 6.0));
  CHECK(-4.5 * kb + 0.75 * (1.0 - kb) == doctest::Approx(-1.0));
}

TEST_CASE("cohorts are reproducible per (seed, replication)") {
  const auto cfg = small(Design::Sparse, 0.1);
  const auto a = generate_population(cfg, 5);
  const auto b = generate_population(cfg, 5);
  CHECK(a.dataset == b.dataset);
  CHECK(a.truth == b.truth);
  CHECK_FALSE(generate_population(cfg, 6).dataset == a.dataset);
  auto other = cfg;
  other.seed = 43;
  CHECK_FALSE(generate_population(other, 5).dataset == a.dataset);
}

TEST_CASE("no faltering children: nothing to find") {
  auto cfg = small(Design::Dense, 0.0);
  const auto r = run_replication(cfg, 0);
  for (const auto& per_metric : r.true_positives) {
    CHECK(per_metric[0].flagged == 0);
    for (const auto& tp : per_metric) CHECK(tp.total() == 0);
  }
}

TEST_CASE("replication scores are bounded by subgroup sizes") {
  const auto cfg = small(Design::Dense, 0.2);
  const auto r = run_replication(cfg, 1);
  CHECK(r.subgroup_sizes == cfg.subgroup_counts());
  for (const auto& per_metric : r.true_positives)
    for (const auto& tp : per_metric) {
      for (std::size_t g = 0; g < 4; ++g) CHECK(tp.by_subgroup[g] <= r.subgroup_sizes[g]);
      CHECK(tp.total() <= tp.flagged);
    }
  // TH flags exactly floor(p n) children among the defined velocities
  CHECK(r.true_positives[metric_index(Metric::MRS)][0].flagged == 60);
  CHECK(r.rs_converged);
  CHECK(r.broken_stick_converged);
}

TEST_CASE("serial and parallel scenarios are identical") {
  const auto cfg = small(Design::Sparse, 0.1, 200);
  const auto a = run_scenario(cfg, Execution::Serial);
  const auto b = run_scenario(cfg, Execution::Parallel);
  CHECK(csv_of(a) == csv_of(b));
  CHECK(csv_of(run_scenario(cfg)) == csv_of(a));
}

TEST_CASE("aggregate of one replication is that replication") {
  const auto cfg = small(Design::Dense, 0.1, 200);
  const auto r = run_replication(cfg, 0);
  const auto rep = aggregate({r});
  for (Metric m : kSimulationMetrics) {
    const auto i = metric_index(m);
    CHECK(rep.total(m, Classifier::TH) == static_cast<double>(r.true_positives[i][0].total()));
    CHECK(rep.total(m, Classifier::MM) == static_cast<double>(r.true_positives[i][1].total()));
    CHECK(rep.subgroup(m, Classifier::MM, Subgroup::Severe) == static_cast<double>(r.true_positives[i][1].by_subgroup[1]));
    CHECK(rep.kappa(m) == r.agreement[i].kappa);
    CHECK(rep.discordance(m) == r.agreement[i].percent_discordance);
    CHECK(rep.significant(m) == (r.agreement[i].significant() ? 100.0 : 0.0));
  }
  CHECK_THROWS_AS(aggregate({}), ConfigError);
  CHECK_THROWS_AS(rep.subgroup(Metric::MRS, Classifier::TH, Subgroup::General), ConfigError);
  CHECK_THROWS_AS(metric_index(Metric::cMRS), ConfigError);
}

TEST_CASE("aggregate averages") {
  ReplicationResult a, b;
  a.true_positives[0][0].by_subgroup = {10, 4, 2, 0};
  b.true_positives[0][0].by_subgroup = {11, 5, 3, 1};
  a.agreement[0] = agreement_from_counts(20, 5, 10, 15);
  b.agreement[0] = agreement_from_counts(25, 0, 0, 25);
  const auto rep = aggregate({a, b});
  CHECK(rep.total(Metric::SDS, Classifier::TH) == 18.0);
  CHECK(rep.subgroup(Metric::SDS, Classifier::TH, Subgroup::Level) == 2.5);
  CHECK(rep.kappa(Metric::SDS) == doctest::Approx(0.7));
  CHECK(rep.discordance(Metric::SDS) == doctest::Approx(15.0));
  CHECK(rep.significant(Metric::SDS) == 100.0);
}

TEST_CASE("report tables and replication files") {
  const auto cfg = small(Design::Dense, 0.1, 200);
  const auto results = run_scenario(cfg);
  const auto rep = aggregate(results);
  std::ostringstream tp, ag;
  rep.write_true_positives_csv(tp);
  rep.write_agreement_csv(ag);
  const auto tp_text = tp.str();
  CHECK(tp_text.rfind("subgroup,N,SDS_TH,SDS_MM,RS_TH,RS_MM,ARS_TH,ARS_MM,MRS_TH,MRS_MM\nMild,10,", 0) == 0);
  CHECK(std::count(tp_text.begin(), tp_text.end(), '\n') == 6);
  CHECK(ag.str().rfind("metric,percent_discordance,kappa,percent_significant\nSDS,", 0) == 0);

  const auto text = csv_of(results);
  std::istringstream in(text);
  const auto back = read_replications_csv(in);
  CHECK(csv_of(back) == text);

  ReplicationResult tiny;
  tiny.agreement[0] = agreement_from_counts(500, 0, 0, 500);
  tiny.agreement[0].kappa_p = 4.9e-320;  // subnormal
  std::istringstream sub(csv_of({tiny}));
  CHECK(read_replications_csv(sub)[0].agreement[0].kappa_p == 4.9e-320);
}
