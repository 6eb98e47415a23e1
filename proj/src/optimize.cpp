#include "falter/optimize.hpp"

#include <ceres/ceres.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "falter/errors.hpp"

namespace falter {

namespace {

class BoundedObjective {
 public:
  BoundedObjective(const std::function<double(const Eigen::VectorXd&)>& f,
                   const Eigen::VectorXd& lower, const Eigen::VectorXd& upper, int budget)
      : f_(f), lower_(lower), upper_(upper), budget_(budget) {}

  Eigen::VectorXd project(const Eigen::VectorXd& x) const {
    return x.cwiseMax(lower_).cwiseMin(upper_);
  }

  double operator()(const Eigen::VectorXd& x) {
    ++evaluations_;
    const double v = f_(x);
    const double value = std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
    if (value < best_value_) {
      best_value_ = value;
      best_ = x;
    }
    return value;
  }

  bool exhausted() const { return evaluations_ >= budget_; }
  int evaluations() const { return evaluations_; }
  const Eigen::VectorXd& best() const { return best_; }
  double best_value() const { return best_value_; }

 private:
  const std::function<double(const Eigen::VectorXd&)>& f_;
  Eigen::VectorXd lower_, upper_;
  int budget_;
  int evaluations_ = 0;
  Eigen::VectorXd best_;
  double best_value_ = std::numeric_limits<double>::infinity();
};

// One Nelder-Mead descent with adaptive coefficients (Gao & Han). Returns
// true on convergence, false when the budget ran out.
bool descend(BoundedObjective& obj, const Eigen::VectorXd& start, const Eigen::VectorXd& step,
             const NelderMeadOptions& opt) {
  const Eigen::Index n = start.size();
  const double dn = static_cast<double>(n);
  const double alpha = 1.0;
  const double gamma = 1.0 + 2.0 / dn;
  const double rho = 0.75 - 1.0 / (2.0 * dn);
  const double sigma = 1.0 - 1.0 / dn;

  std::vector<Eigen::VectorXd> pts(static_cast<std::size_t>(n) + 1, start);
  std::vector<double> vals(pts.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd& p = pts[static_cast<std::size_t>(i) + 1];
    p(i) += step(i);
    p = obj.project(p);
    if (std::abs(p(i) - start(i)) < 1e-3 * std::abs(step(i))) {
      p(i) = start(i) - step(i);
      p = obj.project(p);
    }
  }
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (obj.exhausted()) return false;
    vals[i] = obj(pts[i]);
  }

  std::vector<std::size_t> order(pts.size());
  while (true) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
    const std::size_t best = order.front();
    const std::size_t worst = order.back();
    const std::size_t second = order[order.size() - 2];

    const double spread = vals[worst] - vals[best];
    double size = 0.0;
    for (const auto& p : pts) size = std::max(size, (p - pts[best]).cwiseAbs().maxCoeff());
    if (std::isfinite(vals[worst]) &&
        spread <= opt.ftol_rel * std::max(std::abs(vals[best]), 1e-300) && size <= opt.xtol_abs)
      return true;
    if (size <= 1e-14) return true;
    if (obj.exhausted()) return false;

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (std::size_t i = 0; i < pts.size(); ++i)
      if (i != worst) centroid += pts[i];
    centroid /= dn;

    const Eigen::VectorXd xr = obj.project(centroid + alpha * (centroid - pts[worst]));
    const double fr = obj(xr);
    if (fr < vals[best]) {
      if (obj.exhausted()) {
        pts[worst] = xr;
        vals[worst] = fr;
        return false;
      }
      const Eigen::VectorXd xe = obj.project(centroid + gamma * (xr - centroid));
      const double fe = obj(xe);
      if (fe < fr) {
        pts[worst] = xe;
        vals[worst] = fe;
      } else {
        pts[worst] = xr;
        vals[worst] = fr;
      }
      continue;
    }
    if (fr < vals[second]) {
      pts[worst] = xr;
      vals[worst] = fr;
      continue;
    }
    if (obj.exhausted()) return false;
    // contraction: outside if the reflection improved on the worst point
    const bool outside = fr < vals[worst];
    const Eigen::VectorXd xc = outside ? obj.project(centroid + rho * (xr - centroid))
                                       : obj.project(centroid - rho * (centroid - pts[worst]));
    const double fc = obj(xc);
    if (fc < (outside ? fr : vals[worst])) {
      pts[worst] = xc;
      vals[worst] = fc;
      continue;
    }
    // shrink toward the best vertex
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (i == best) continue;
      if (obj.exhausted()) return false;
      pts[i] = obj.project(pts[best] + sigma * (pts[i] - pts[best]));
      vals[i] = obj(pts[i]);
    }
  }
}

}  // namespace

NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& objective,
                             const Eigen::VectorXd& start, const Eigen::VectorXd& step,
                             const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                             const NelderMeadOptions& options) {
  const auto n = start.size();
  if (n == 0 || step.size() != n || lower.size() != n || upper.size() != n)
    throw ConfigError("nelder_mead: dimension mismatch");
  if ((start.array() < lower.array()).any() || (start.array() > upper.array()).any())
    throw ConfigError("nelder_mead: start outside bounds");
  if ((step.array() == 0.0).any()) throw ConfigError("nelder_mead: zero initial step");

  BoundedObjective obj(objective, lower, upper, options.max_evaluations);
  bool converged = descend(obj, start, step, options);
  Eigen::VectorXd restart_step = step;
  for (int r = 0; converged && r < options.restarts; ++r) {
    // a converged simplex may have collapsed onto a non-stationary point
    const double before = obj.best_value();
    restart_step *= 0.5;
    const Eigen::VectorXd from = obj.best();
    converged = descend(obj, from, restart_step, options);
    if (converged && before - obj.best_value() <= options.ftol_rel * std::abs(before)) break;
  }
  return {obj.best(), obj.best_value(), obj.evaluations(), converged};
}

}  // namespace falter

namespace falter {

namespace {

class CeresObjective final : public ceres::FirstOrderFunction {
 public:
  CeresObjective(const ValueGradient& f, int n, int& evaluations)
      : f_(f), n_(n), evaluations_(evaluations) {}

  bool Evaluate(const double* parameters, double* cost, double* gradient) const override {
    ++evaluations_;
    const Eigen::Map<const Eigen::VectorXd> x(parameters, n_);
    Eigen::VectorXd g(n_);
    const double value = f_(x, g);
    if (!std::isfinite(value) || !g.allFinite()) return false;
    *cost = value;
    if (gradient) Eigen::Map<Eigen::VectorXd>(gradient, n_) = g;
    return true;
  }
  int NumParameters() const override { return n_; }

 private:
  const ValueGradient& f_;
  int n_;
  int& evaluations_;
};

}  // namespace

QuasiNewtonResult minimize_bfgs(const ValueGradient& objective, const Eigen::VectorXd& start,
                                const QuasiNewtonOptions& options) {
  QuasiNewtonResult res;
  res.x = start;
  const int n = static_cast<int>(start.size());
  if (n == 0) throw ConfigError("minimize_bfgs: empty parameter vector");

  // GradientProblem takes ownership of the function.
  ceres::GradientProblem problem(new CeresObjective(objective, n, res.evaluations));
  ceres::GradientProblemSolver::Options opts;
  opts.line_search_direction_type = ceres::BFGS;
  opts.max_num_iterations = options.max_iterations;
  opts.function_tolerance = options.function_tolerance;
  opts.gradient_tolerance = options.gradient_tolerance;
  opts.parameter_tolerance = options.parameter_tolerance;
  opts.logging_type = ceres::SILENT;
  ceres::GradientProblemSolver::Summary summary;
  ceres::Solve(opts, problem, res.x.data(), &summary);

  res.iterations = static_cast<int>(summary.iterations.size());
  res.converged = summary.termination_type == ceres::CONVERGENCE;
  Eigen::VectorXd g(n);
  res.value = summary.IsSolutionUsable() ? objective(res.x, g) : std::numeric_limits<double>::infinity();
  return res;
}

}  // namespace falter
