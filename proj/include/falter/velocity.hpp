#pragma once

#include <array>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "falter/growth_data.hpp"
#include "falter/mixed_model.hpp"
#include "falter/spline_basis.hpp"

namespace falter {

enum class Metric { SDS, cSDS, RS, cRS, ARS, cARS, MRS, cMRS };

inline constexpr std::array<Metric, 8> kAllMetrics = {
    Metric::SDS, Metric::cSDS, Metric::RS,  Metric::cRS,
    Metric::ARS, Metric::cARS, Metric::MRS, Metric::cMRS};

std::string_view to_string(Metric metric);
/// Case-insensitive; throws ConfigError on unknown names.
Metric parse_metric(std::string_view name);

/// Per-child velocities for one metric. A child is either in `entries` or in
/// `undefined`, never both.
struct VelocityTable {
  Metric metric = Metric::SDS;
  std::map<std::string, double> entries;
  std::vector<std::string> undefined;

  std::vector<double> values() const;
  /// Columns: child_id,metric,velocity,defined
  void write_csv(std::ostream& os) const;
  static VelocityTable read_csv(std::istream& is);
};

/// Slopes between consecutive knots, per child.
struct SegmentSlopes {
  KnotVector knots;
  std::map<std::string, std::vector<double>> slopes;
};

VelocityTable sds(const GrowthDataset& dataset);

/// Throws DataError with fewer than three complete pairs or |r| = 1.
VelocityTable csds(const GrowthDataset& dataset);

/// Child slope beta_1 + b_i1. Throws ConfigError unless the fit kind is RS.
VelocityTable rs(const MixedModelFit& fit);

/// (pred(end) - pred(start)) / (end - start) for a cRS fit.
VelocityTable crs(const MixedModelFit& fit, const std::map<std::string, double>& baselines,
                  const AnalysisWindow& window);

/// Conditional fits use `baselines` when given, otherwise the fit's own.
SegmentSlopes segment_slopes(const MixedModelFit& fit,
                             const std::map<std::string, double>* baselines = nullptr);

VelocityTable ars(const SegmentSlopes& slopes, const KnotVector& knots);
VelocityTable mrs(const SegmentSlopes& slopes);

struct VelocityConfig {
  AnalysisWindow window{};
  KnotVector knots = KnotVector::evenly_spaced(0.0, 1.0, 4);
  FitOptions fit{};
};

/// Fits each model kind at most once and derives any of the eight metrics.
class VelocityEngine {
 public:
  VelocityEngine(const GrowthDataset& dataset, VelocityConfig config);

  VelocityTable table(Metric metric);
  const MixedModelFit& model(ModelKind kind);
  std::map<std::string, double> baselines() const;

  const GrowthDataset& dataset() const { return *dataset_; }
  const VelocityConfig& config() const { return config_; }

 private:
  const GrowthDataset* dataset_;
  VelocityConfig config_;
  std::map<ModelKind, MixedModelFit> fits_;
};

VelocityTable compute(Metric metric, const GrowthDataset& dataset, const VelocityConfig& config);

/// Tags the table as the given metric; unconditional slopes feed ARS/MRS and
/// the conditional ones cARS/cMRS.
VelocityTable relabel(VelocityTable table, Metric metric);

}  // namespace falter
