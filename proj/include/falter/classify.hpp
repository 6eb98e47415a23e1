#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "falter/velocity.hpp"

namespace falter {

/// Two-component univariate Gaussian mixture; component 0 has the lower mean
/// and is the faltering group.
struct MixtureFit {
  std::array<double, 2> weights{};
  std::array<double, 2> means{};
  std::array<double, 2> sds{};
  std::map<std::string, double> posteriors;  // P(component 0 | velocity)
  double loglik = 0.0;
  bool converged = false;
  bool collapsed = false;     // best run had a standard deviation at the floor
  bool monotone = true;       // no restart saw the log-likelihood drop beyond roundoff
  int iterations = 0;
  int restarts = 0;

  /// Posterior of the faltering component at an arbitrary value.
  double posterior(double x) const;
  double density(double x) const;
  std::string to_json() const;
};

struct EmOptions {
  int restarts = 10;
  int max_iterations = 2000;
  double tolerance = 1e-8;
  double variance_floor = 1e-6;   // relative to the data variance
  double jitter = 0.1;            // sd of start-mean jitter, relative to data sd
  double monotone_slack = 1e-9;
};

/// Result on raw values; posteriors are returned in input order.
struct MixtureEstimate {
  std::array<double, 2> weights{};
  std::array<double, 2> means{};
  std::array<double, 2> sds{};
  std::vector<double> posteriors;
  std::vector<double> loglik_trace;  // of the selected run
  double loglik = 0.0;
  bool converged = false;
  bool collapsed = false;
  bool monotone = true;  // over every restart
  int iterations = 0;
};

/// EM with a median-split start and jittered restarts. Throws DataError with
/// fewer than four values or fewer than two distinct values.
MixtureEstimate fit_gmm2(std::span<const double> values, std::uint64_t seed,
                         const EmOptions& options = {});
MixtureFit fit_gmm2(const VelocityTable& velocities, std::uint64_t seed,
                    const EmOptions& options = {});

enum class Method { MM, TH };

struct Classification {
  Method method = Method::MM;
  std::map<std::string, bool> faltering;
  std::map<std::string, double> posteriors;  // MM only
  std::optional<double> threshold;           // TH: largest faltering velocity
  std::optional<double> proportion;          // TH
  std::optional<MixtureFit> mixture;         // MM

  std::size_t faltering_count() const;
  /// Columns: child_id,label,posterior (posterior empty for TH).
  void write_csv(std::ostream& os) const;
  static Classification read_csv(std::istream& is);
};

Classification mm_classify(const MixtureFit& mixture, double cutoff = 0.5);

/// Lowest floor(proportion * n) velocities are faltering; ties by child id.
Classification threshold_classify(const VelocityTable& velocities, double proportion);

/// Indices of the floor(proportion * n) smallest values, ties by position.
std::vector<bool> threshold_labels(std::span<const double> values, double proportion);

struct AgreementStats {
  std::size_t n = 0;
  std::size_t only_in_a = 0;
  std::size_t only_in_b = 0;
  double percent_discordance = 0.0;
  bool kappa_defined = true;
  double kappa = 0.0;
  double kappa_z = 0.0;
  double kappa_p = 1.0;  // one-sided, H1: kappa > 0

  bool significant(double alpha = 0.01) const { return kappa_defined && kappa_p < alpha; }
  std::string to_json() const;
};

/// Cohen's kappa from a 2x2 table: a = both faltering, b = faltering only in
/// the first rater, c = only in the second, d = neither.
AgreementStats agreement_from_counts(std::size_t a, std::size_t b, std::size_t c, std::size_t d);

AgreementStats agreement(const std::vector<bool>& a, const std::vector<bool>& b);

/// Compares labels on the intersection of the two child sets. Throws
/// DataError when the sets are disjoint.
AgreementStats agreement(const Classification& a, const Classification& b);

}  // namespace falter
