#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "falter/classify.hpp"
#include "falter/growth_data.hpp"
#include "falter/spline_basis.hpp"

namespace falter {

enum class Subgroup { General, Mild, Severe, Level, Catchup };

inline constexpr std::array<Subgroup, 4> kFalteringSubgroups = {
    Subgroup::Mild, Subgroup::Severe, Subgroup::Level, Subgroup::Catchup};

std::string_view to_string(Subgroup subgroup);

enum class Design { Dense, Sparse };

std::string_view to_string(Design design);
Design parse_design(std::string_view name);

/// Metrics scored in the simulation study (unconditional only).
inline constexpr std::array<Metric, 4> kSimulationMetrics = {Metric::SDS, Metric::RS, Metric::ARS,
                                                             Metric::MRS};

struct ScenarioConfig {
  std::size_t n_children = 1000;
  double proportion_faltering = 0.10;
  double sigma_omega = 0.25;
  double sigma_epsilon = 0.3;
  double kappa_break = 1.0 / 3.0;
  int obs_min = 6;
  int obs_max = 12;
  std::vector<double> internal_knots{0.0, 0.25, 0.5, 0.75};
  double right_boundary = 1.0;
  std::size_t n_replications = 100;
  std::uint64_t seed = 42;

  static ScenarioConfig preset(Design design, double proportion);

  /// (mild, severe, level, catchup) in ratio 5:2:2:1 of round(p * n),
  /// distributed by largest remainder.
  std::array<std::size_t, 4> subgroup_counts() const;
  std::size_t faltering_total() const;
  KnotVector knots() const { return KnotVector(internal_knots, right_boundary); }

  /// Throws ConfigError.
  void validate() const;
};

struct Cohort {
  GrowthDataset dataset;
  std::map<std::string, Subgroup> truth;
};

/// Cohort for one replication; identical (seed, replication) give identical
/// cohorts. Ages in [0, 1] with one observation in [0, 1/12], one in
/// [11/12, 1] and the rest in between.
Cohort generate_population(const ScenarioConfig& config, std::size_t replication);

enum class Classifier { TH, MM };
inline constexpr std::array<Classifier, 2> kClassifiers = {Classifier::TH, Classifier::MM};
std::string_view to_string(Classifier classifier);

/// True positives per faltering subgroup (mild, severe, level, catchup).
struct TruePositives {
  std::array<std::size_t, 4> by_subgroup{};
  std::size_t flagged = 0;  // all children labeled faltering
  std::size_t total() const;
};

struct ReplicationResult {
  std::size_t replication = 0;
  std::array<std::size_t, 4> subgroup_sizes{};
  /// Indexed [metric][classifier] following kSimulationMetrics / kClassifiers.
  std::array<std::array<TruePositives, 2>, 4> true_positives{};
  std::array<AgreementStats, 4> agreement{};
  bool rs_converged = true;
  bool broken_stick_converged = true;
  std::array<bool, 4> mixture_collapsed{};
};

/// Generates, fits RS and broken-stick models, computes SDS/RS/ARS/MRS,
/// classifies by TH and MM, and scores against the truth.
ReplicationResult run_replication(const ScenarioConfig& config, std::size_t replication);

enum class Execution { Serial, Parallel };

/// All replications. Parallel execution distributes replications over OpenMP
/// threads; each replication is sequential, so results do not depend on the
/// thread count.
std::vector<ReplicationResult> run_scenario(const ScenarioConfig& config,
                                            Execution execution = Execution::Serial);

struct ScenarioReport {
  std::size_t replications = 0;
  std::array<std::size_t, 4> subgroup_sizes{};
  /// Mean true positives [metric][classifier][subgroup], index 4 = total.
  std::array<std::array<std::array<double, 5>, 2>, 4> mean_true_positives{};
  std::array<double, 4> mean_discordance{};
  std::array<double, 4> mean_kappa{};
  std::array<double, 4> percent_significant{};
  std::size_t nonconverged_fits = 0;

  double total(Metric metric, Classifier classifier) const;
  double subgroup(Metric metric, Classifier classifier, Subgroup subgroup) const;
  double kappa(Metric metric) const;
  double discordance(Metric metric) const;
  double significant(Metric metric) const;

  /// Rows Mild/Severe/Level/Catchup/Total; columns N then metric x {TH, MM}.
  void write_true_positives_csv(std::ostream& os) const;
  /// Rows per metric; columns %D, kappa, %Sig.
  void write_agreement_csv(std::ostream& os) const;
};

ScenarioReport aggregate(const std::vector<ReplicationResult>& results);

std::size_t metric_index(Metric metric);

/// One row per replication x metric x classifier, plus agreement columns.
void write_replications_csv(std::ostream& os, const std::vector<ReplicationResult>& results);
std::vector<ReplicationResult> read_replications_csv(std::istream& is);

}  // namespace falter
