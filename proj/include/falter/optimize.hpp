#pragma once

#include <functional>
#include <limits>

#include <Eigen/Dense>

namespace falter {

struct NelderMeadOptions {
  double ftol_rel = 1e-8;     // relative spread of simplex values
  double xtol_abs = 1e-7;     // max coordinate deviation from centroid
  int max_evaluations = 10000;
  int restarts = 2;           // fresh simplex around the best point after convergence
};

struct NelderMeadResult {
  Eigen::VectorXd x;
  double value = std::numeric_limits<double>::infinity();
  int evaluations = 0;
  bool converged = false;
};

/// Bound-constrained Nelder-Mead. Trial points are projected onto the box
/// [lower, upper]; infinite bounds are allowed. Non-finite objective values
/// are treated as +infinity.
NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& objective,
                             const Eigen::VectorXd& start, const Eigen::VectorXd& step,
                             const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                             const NelderMeadOptions& options = {});

struct QuasiNewtonOptions {
  double function_tolerance = 1e-12;   // relative change in value
  double gradient_tolerance = 1e-10;
  double parameter_tolerance = 1e-10;
  int max_iterations = 1000;
};

struct QuasiNewtonResult {
  Eigen::VectorXd x;
  double value = std::numeric_limits<double>::infinity();
  int evaluations = 0;
  int iterations = 0;
  bool converged = false;
};

/// Value and gradient at x. Return a non-finite value for infeasible points.
using ValueGradient = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& gradient)>;

/// Unconstrained BFGS with a Wolfe line search (Ceres gradient solver).
QuasiNewtonResult minimize_bfgs(const ValueGradient& objective, const Eigen::VectorXd& start,
                                const QuasiNewtonOptions& options = {});

}  // namespace falter
