#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace falter {

/// Knots of a degree-1 B-spline basis. The left boundary coincides with the
/// first internal knot, so the basis is described by the strictly increasing
/// sequence {internal knots..., right boundary}. One basis function per
/// breakpoint; one linear segment between consecutive breakpoints.
class KnotVector {
 public:
  /// Throws ConfigError unless internal_knots is non-empty, strictly increasing
  /// and below right_boundary.
  KnotVector(std::vector<double> internal_knots, double right_boundary);

  /// `count` evenly spaced internal knots starting at `start`, boundary at `end`.
  static KnotVector evenly_spaced(double start, double end, std::size_t count);

  double left() const { return breaks_.front(); }
  double right() const { return breaks_.back(); }
  std::size_t internal_count() const { return breaks_.size() - 1; }
  std::size_t basis_size() const { return breaks_.size(); }
  std::size_t segment_count() const { return breaks_.size() - 1; }

  /// Internal knots followed by the right boundary.
  std::span<const double> breaks() const { return breaks_; }
  std::vector<double> internal_knots() const;

  bool contains(double t) const { return t >= left() && t <= right(); }

  friend bool operator==(const KnotVector&, const KnotVector&) = default;

 private:
  std::vector<double> breaks_;
};

/// Tent-function basis at age t. Throws std::out_of_range outside the
/// boundary knots. At the right boundary the left-limit is used.
Eigen::RowVectorXd basis_row(double t, const KnotVector& knots);

/// Row i equals basis_row(ages[i]).
Eigen::MatrixXd design_matrix(std::span<const double> ages, const KnotVector& knots);

}  // namespace falter
