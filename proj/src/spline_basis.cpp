#include "falter/spline_basis.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "falter/errors.hpp"

namespace falter {

KnotVector::KnotVector(std::vector<double> internal_knots, double right_boundary)
    : breaks_(std::move(internal_knots)) {
  if (breaks_.empty()) throw ConfigError("at least one internal knot is required");
  breaks_.push_back(right_boundary);
  for (std::size_t i = 0; i < breaks_.size(); ++i) {
    if (!std::isfinite(breaks_[i])) throw ConfigError("knots must be finite");
    if (i > 0 && !(breaks_[i - 1] < breaks_[i]))
      throw ConfigError("knots must be strictly increasing and below the right boundary");
  }
}

KnotVector KnotVector::evenly_spaced(double start, double end, std::size_t count) {
  if (count == 0 || !(start < end)) throw ConfigError("invalid evenly spaced knot request");
  std::vector<double> internal(count);
  const double step = (end - start) / static_cast<double>(count);
  for (std::size_t k = 0; k < count; ++k) internal[k] = start + step * static_cast<double>(k);
  return KnotVector(std::move(internal), end);
}

std::vector<double> KnotVector::internal_knots() const {
  return {breaks_.begin(), breaks_.end() - 1};
}

Eigen::RowVectorXd basis_row(double t, const KnotVector& knots) {
  if (!knots.contains(t))
    throw std::out_of_range("age " + std::to_string(t) + " outside the knot boundary");
  const auto b = knots.breaks();
  Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(b.size()));
  // segment j spans [b[j], b[j+1]); the right boundary belongs to the last one
  auto upper = std::upper_bound(b.begin(), b.end(), t);
  std::size_t j = static_cast<std::size_t>(upper - b.begin());
  j = std::clamp<std::size_t>(j, 1, b.size() - 1) - 1;
  const double w = (t - b[j]) / (b[j + 1] - b[j]);
  row(static_cast<Eigen::Index>(j)) = 1.0 - w;
  row(static_cast<Eigen::Index>(j + 1)) = w;
  return row;
}

Eigen::MatrixXd design_matrix(std::span<const double> ages, const KnotVector& knots) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(ages.size()),
                    static_cast<Eigen::Index>(knots.basis_size()));
  for (std::size_t i = 0; i < ages.size(); ++i)
    m.row(static_cast<Eigen::Index>(i)) = basis_row(ages[i], knots);
  return m;
}

}  // namespace falter
