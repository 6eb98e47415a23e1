#include <doctest.h>

#include <random>
#include <vector>

#include "falter/errors.hpp"
#include "falter/spline_basis.hpp"

using namespace falter;

namespace {

const KnotVector quarter = KnotVector({0.0, 0.25, 0.5, 0.75}, 1.0);

// Hand-rolled tent: 1 at b[k], linear to 0 at the neighbours.
double tent(std::span<const double> b, std::size_t k, double t) {
  if (k > 0 && t >= b[k - 1] && t <= b[k]) return (t - b[k - 1]) / (b[k] - b[k - 1]);
  if (k + 1 < b.size() && t >= b[k] && t <= b[k + 1]) return (b[k + 1] - t) / (b[k + 1] - b[k]);
  return t == b[k] ? 1.0 : 0.0;
}

}  // namespace

TEST_CASE("knot vector shape") {
  CHECK(quarter.basis_size() == 5);
  CHECK(quarter.segment_count() == 4);
  CHECK(quarter.left() == 0.0);
  CHECK(quarter.right() == 1.0);
  CHECK(KnotVector::evenly_spaced(0.0, 1.0, 4) == quarter);
  CHECK_THROWS_AS(KnotVector({0.5, 0.25}, 1.0), ConfigError);
  CHECK_THROWS_AS(KnotVector({0.0, 1.0}, 1.0), ConfigError);
  CHECK_THROWS_AS(KnotVector({}, 1.0), ConfigError);
}

TEST_CASE("basis is a unit vector at every knot") {
  const auto b = quarter.breaks();
  for (std::size_t k = 0; k < b.size(); ++k) {
    const auto row = basis_row(b[k], quarter);
    for (Eigen::Index j = 0; j < row.size(); ++j) CHECK(row(j) == (static_cast<std::size_t>(j) == k ? 1.0 : 0.0));
  }
}

TEST_CASE("basis values between knots") {
  const auto mid = basis_row(0.125, quarter);
  CHECK(mid(0) == doctest::Approx(0.5));
  CHECK(mid(1) == doctest::Approx(0.5));
  CHECK(mid.tail(3).isZero());

  const auto r = basis_row(0.6, quarter);
  CHECK(r(0) == 0.0);
  CHECK(r(1) == 0.0);
  CHECK(r(2) == doctest::Approx(0.6).epsilon(1e-14));
  CHECK(r(3) == doctest::Approx(0.4).epsilon(1e-14));
  CHECK(r(4) == 0.0);
}

TEST_CASE("evaluation outside the boundary throws") {
  CHECK_THROWS_AS(basis_row(-1e-9, quarter), std::out_of_range);
  CHECK_THROWS_AS(basis_row(1.0 + 1e-9, quarter), std::out_of_range);
  CHECK_NOTHROW(basis_row(1.0, quarter));
  CHECK(basis_row(1.0, quarter)(4) == 1.0);
}

TEST_CASE("design matrix stacks rows") {
  const std::vector<double> ages{0.125, 0.6};
  const auto X = design_matrix(ages, quarter);
  REQUIRE(X.rows() == 2);
  REQUIRE(X.cols() == 5);
  CHECK(X.row(0) == basis_row(0.125, quarter));
  CHECK(X.row(1) == basis_row(0.6, quarter));

  const auto b = quarter.breaks();
  const std::vector<double> at_knots(b.begin(), b.end());
  CHECK(design_matrix(at_knots, quarter).isIdentity());

  const auto empty = design_matrix(std::vector<double>{}, quarter);
  CHECK(empty.rows() == 0);
  CHECK(empty.cols() == 5);
  CHECK_THROWS_AS(design_matrix(std::vector<double>{0.5, 2.0}, quarter), std::out_of_range);
}

TEST_CASE("basis agrees with an explicit tent evaluation") {
  const KnotVector uneven({0.1, 0.2, 0.45, 0.9}, 1.3);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> U(uneven.left(), uneven.right());
  const auto b = uneven.breaks();
  for (int i = 0; i < 2000; ++i) {
    const double t = U(rng);
    const auto row = basis_row(t, uneven);
    int nonzero = 0;
    for (std::size_t k = 0; k < b.size(); ++k) {
      CHECK(row(static_cast<Eigen::Index>(k)) == doctest::Approx(tent(b, k, t)).epsilon(1e-13));
      CHECK(row(static_cast<Eigen::Index>(k)) >= 0.0);
      CHECK(row(static_cast<Eigen::Index>(k)) <= 1.0);
      nonzero += row(static_cast<Eigen::Index>(k)) != 0.0;
    }
    CHECK(nonzero >= 1);
    CHECK(nonzero <= 2);
  }
}

TEST_CASE("partition of unity on 10000 points") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) worst = std::max(worst, std::abs(basis_row(U(rng), quarter).sum() - 1.0));
  CHECK(worst <= 1e-12);
}

TEST_CASE("linear within a segment") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  const auto b = quarter.breaks();
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const std::size_t k = static_cast<std::size_t>(U(rng) * 4.0) % 4;
    const double t = b[k] + U(rng) * (b[k + 1] - b[k]);
    const double u = b[k] + U(rng) * (b[k + 1] - b[k]);
    const double lam = U(rng);
    const Eigen::RowVectorXd lhs = basis_row(lam * t + (1 - lam) * u, quarter);
    const Eigen::RowVectorXd rhs = lam * basis_row(t, quarter) + (1 - lam) * basis_row(u, quarter);
    worst = std::max(worst, (lhs - rhs).cwiseAbs().maxCoeff());
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("same function space as the truncated-line basis") {
  // Truncated basis {1, t, (t - k2)+, (t - k3)+, ...}. Change of coordinates:
  // the B-spline coefficient of tent k is the function value at knot k.
  const KnotVector knots({0.0, 0.2, 0.55, 0.7}, 1.0);
  const auto b = knots.breaks();
  std::mt19937_64 rng(17);
  std::normal_distribution<double> N(0.0, 2.0);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  double worst = 0.0;
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<double> gamma(b.size());
    for (auto& g : gamma) g = N(rng);
    auto truncated = [&](double t) {
      double v = gamma[0] + gamma[1] * t;
      for (std::size_t j = 1; j + 1 < b.size(); ++j) v += gamma[j + 1] * std::max(0.0, t - b[j]);
      return v;
    };
    Eigen::VectorXd omega(static_cast<Eigen::Index>(b.size()));
    for (std::size_t k = 0; k < b.size(); ++k) omega(static_cast<Eigen::Index>(k)) = truncated(b[k]);
    for (int i = 0; i < 50; ++i) {
      const double t = U(rng);
      worst = std::max(worst, std::abs(basis_row(t, knots).dot(omega) - truncated(t)));
    }
  }
  CHECK(worst <= 1e-10);
}
