#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace falter {

/// One standardized anthropometric observation. Age in years.
struct Measurement {
  double age = 0.0;
  double zscore = 0.0;

  friend bool operator==(const Measurement&, const Measurement&) = default;
};

/// Measurements of one child, strictly ascending in age.
struct ChildSeries {
  std::string child_id;
  std::vector<Measurement> measurements;

  friend bool operator==(const ChildSeries&, const ChildSeries&) = default;
};

struct AnalysisWindow {
  double start = 0.0;
  double end = 1.0;

  AnalysisWindow() = default;
  AnalysisWindow(double start, double end);

  bool contains(double age) const { return age >= start && age <= end; }
  double length() const { return end - start; }

  friend bool operator==(const AnalysisWindow&, const AnalysisWindow&) = default;
};

enum class AgeUnit { Days, Years };

inline constexpr double kDaysPerYear = 365.25;
inline constexpr double kDefaultExclusionBound = 6.0;

/// Immutable cohort restricted to an analysis window. Children are kept
/// sorted by id; every measurement satisfies the window and exclusion bound.
class GrowthDataset {
 public:
  /// Validates all invariants; throws DataError on violation.
  GrowthDataset(std::vector<ChildSeries> children, AnalysisWindow window,
                double exclusion_bound = kDefaultExclusionBound);

  const std::vector<ChildSeries>& children() const { return children_; }
  const AnalysisWindow& window() const { return window_; }
  double exclusion_bound() const { return exclusion_bound_; }

  std::size_t size() const { return children_.size(); }
  std::size_t total_measurements() const;

  /// nullptr when the id is unknown.
  const ChildSeries* find(const std::string& child_id) const;

  /// Canonical form: header `child_id,age,zscore`, rows sorted by (child, age),
  /// ages in years, round-trip exact number formatting.
  void write_csv(std::ostream& os) const;

  friend bool operator==(const GrowthDataset&, const GrowthDataset&) = default;

 private:
  std::vector<ChildSeries> children_;
  AnalysisWindow window_;
  double exclusion_bound_;
};

struct IngestReport {
  std::size_t rows_read = 0;
  std::size_t excluded_out_of_window = 0;
  std::size_t excluded_extreme = 0;
  std::size_t rows_retained = 0;
  std::vector<std::string> children_dropped;

  std::string to_json() const;
};

struct IngestResult {
  GrowthDataset dataset;
  IngestReport report;
};

/// Parses a delimited table with header `child_id,age,zscore` (comma or tab,
/// detected from the header line). Drops out-of-window and extreme rows and
/// children left empty. Throws DataError with the 1-based line number on a
/// malformed row, on duplicate (child_id, age), and on an empty result.
IngestResult ingest(std::istream& in, AgeUnit unit, const AnalysisWindow& window,
                    double exclusion_bound = kDefaultExclusionBound);

/// Earliest in-window measurement. Throws DataError if there is none.
Measurement baseline(const ChildSeries& series, const AnalysisWindow& window);

/// Latest in-window measurement, or nullopt with fewer than two in-window
/// measurements.
std::optional<Measurement> followup(const ChildSeries& series, const AnalysisWindow& window);

}  // namespace falter
