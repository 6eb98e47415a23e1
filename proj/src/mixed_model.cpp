#include "falter/mixed_model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <json.hpp>
#include <omp.h>

#include "falter/errors.hpp"

namespace falter {

namespace {

constexpr int kCap = static_cast<int>(kMaxRandomEffects) + 1;
using SmallMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, kCap, kCap>;
using SmallVec = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, kCap, 1>;
using ConstMap = Eigen::Map<const Eigen::MatrixXd>;

constexpr double kSingularTheta = 1e-4;

// Random-effect design row at age t.
void random_row(const ModelSpec& spec, double t, Eigen::Ref<Eigen::RowVectorXd> row) {
  if (spec.is_broken_stick()) {
    row = basis_row(t, *spec.knots);
  } else {
    row(0) = 1.0;
    row(1) = t;
  }
}

}  // namespace

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::RS: return "RS";
    case ModelKind::cRS: return "cRS";
    case ModelKind::BrokenStick: return "BrokenStick";
    case ModelKind::cBrokenStick: return "cBrokenStick";
  }
  return "?";
}

ModelSpec ModelSpec::random_slopes(bool conditional) {
  return {conditional ? ModelKind::cRS : ModelKind::RS, std::nullopt};
}

ModelSpec ModelSpec::broken_stick(KnotVector knots, bool conditional) {
  return {conditional ? ModelKind::cBrokenStick : ModelKind::BrokenStick, std::move(knots)};
}

std::size_t ModelSpec::random_effects() const {
  return is_broken_stick() ? (knots ? knots->basis_size() : 0) : 2;
}

void ModelSpec::validate() const {
  if (is_broken_stick() != knots.has_value())
    throw ConfigError("knots must be given exactly for broken-stick kinds");
  if (random_effects() > kMaxRandomEffects)
    throw ConfigError("too many knots: at most " + std::to_string(kMaxRandomEffects) +
                      " basis functions are supported");
}

Eigen::VectorXd pack_lower(const Eigen::MatrixXd& lower) {
  const auto q = lower.rows();
  Eigen::VectorXd v(q * (q + 1) / 2);
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < q; ++j)
    for (Eigen::Index i = j; i < q; ++i) v(k++) = lower(i, j);
  return v;
}

Eigen::MatrixXd unpack_lower(const Eigen::VectorXd& packed, std::size_t q) {
  const auto n = static_cast<Eigen::Index>(q);
  if (packed.size() != n * (n + 1) / 2) throw ConfigError("packed theta has the wrong length");
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = j; i < n; ++i) m(i, j) = packed(k++);
  return m;
}

// ---------------------------------------------------------------------------
// Sufficient statistics and the profiled deviance
// ---------------------------------------------------------------------------

struct DevianceEvaluator::Impl {
  ModelSpec spec;
  FitOptions options;
  Eigen::Index q = 0;
  Eigen::Index p = 0;
  std::size_t n_obs = 0;
  // Conditional kind whose t*z0 column is identically zero: the column is
  // dropped and its coefficient reported as 0.
  bool interaction_dropped = false;

  std::vector<std::string> ids;
  std::vector<double> baselines;
  std::vector<std::string> excluded;
  std::vector<std::vector<Measurement>> rows;  // response rows per child

  // Per child, packed: ZtZ (q*q) | ZtX (q*p) | Zty (q)
  std::vector<double> blocks;
  Eigen::Index stride = 0;
  Eigen::MatrixXd XtX;
  Eigen::VectorXd Xty;
  double yty = 0.0;

  struct Partial {
    double logdet = 0.0;
    Eigen::MatrixXd A;
    Eigen::VectorXd b;
    double c = 0.0;
    bool ok = true;
  };

  struct Profile {
    double logdet_L = 0.0;
    double logdet_A = 0.0;
    double pwrss = 0.0;
    Eigen::VectorXd beta;
    Eigen::MatrixXd A;  // X' V0^-1 X
    bool ok = false;
  };

  Impl(const GrowthDataset& dataset, const ModelSpec& s, const FitOptions& opts)
      : spec(s), options(opts) {
    spec.validate();
    q = static_cast<Eigen::Index>(spec.random_effects());
    p = static_cast<Eigen::Index>(spec.fixed_effects());
    const auto& window = dataset.window();

    for (const auto& child : dataset.children()) {
      std::vector<Measurement> in_window;
      for (const auto& m : child.measurements)
        if (window.contains(m.age)) in_window.push_back(m);
      if (in_window.empty()) continue;
      double z0 = 0.0;
      if (spec.conditional()) {
        if (in_window.size() < 2) {
          excluded.push_back(child.child_id);
          continue;
        }
        z0 = in_window.front().zscore;
        if (options.drop_baseline_row) in_window.erase(in_window.begin());
      }
      if (spec.is_broken_stick())
        for (const auto& m : in_window)
          if (!spec.knots->contains(m.age))
            throw DataError("child '" + child.child_id + "': age " + std::to_string(m.age) +
                            " outside the knot boundary");
      ids.push_back(child.child_id);
      baselines.push_back(z0);
      rows.push_back(std::move(in_window));
    }
    if (spec.conditional()) {
      interaction_dropped = true;
      for (std::size_t i = 0; i < rows.size() && interaction_dropped; ++i)
        for (const auto& m : rows[i])
          if (m.age * baselines[i] != 0.0) interaction_dropped = false;
      if (interaction_dropped) p = q;
    }
    stride = q * q + q * p + q;

    XtX = Eigen::MatrixXd::Zero(p, p);
    Xty = Eigen::VectorXd::Zero(p);
    blocks.assign(ids.size() * static_cast<std::size_t>(stride), 0.0);
    Eigen::RowVectorXd x(p);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      double* base = blocks.data() + i * static_cast<std::size_t>(stride);
      Eigen::Map<Eigen::MatrixXd> ZtZ(base, q, q);
      Eigen::Map<Eigen::MatrixXd> ZtX(base + q * q, q, p);
      Eigen::Map<Eigen::VectorXd> Zty(base + q * q + q * p, q);
      for (const auto& m : rows[i]) {
        fixed_row(m.age, baselines[i], x);
        const auto z = x.head(q);
        ZtZ.noalias() += z.transpose() * z;
        ZtX.noalias() += z.transpose() * x;
        Zty += z.transpose() * m.zscore;
        XtX.noalias() += x.transpose() * x;
        Xty += x.transpose() * m.zscore;
        yty += m.zscore * m.zscore;
        ++n_obs;
      }
    }
  }

  void fixed_row(double t, double z0, Eigen::RowVectorXd& x) const {
    random_row(spec, t, x.head(q));
    if (spec.conditional() && !interaction_dropped) x(q) = t * z0;
  }

  Eigen::Map<const Eigen::MatrixXd> ZtZ(std::size_t i) const {
    return {blocks.data() + i * static_cast<std::size_t>(stride), q, q};
  }
  Eigen::Map<const Eigen::MatrixXd> ZtX(std::size_t i) const {
    return {blocks.data() + i * static_cast<std::size_t>(stride) + q * q, q, p};
  }
  Eigen::Map<const Eigen::VectorXd> Zty(std::size_t i) const {
    return {blocks.data() + i * static_cast<std::size_t>(stride) + q * q + q * p, q};
  }

  // Woodbury reduction of children [first, last) into the partial sums.
  template <int Q, int P>
  void accumulate_fixed(const Eigen::MatrixXd& theta, std::size_t first, std::size_t last,
                        Partial& out) const {
    using MatQ = Eigen::Matrix<double, Q, Q>;
    using MatQP = Eigen::Matrix<double, Q, P>;
    using VecQ = Eigen::Matrix<double, Q, 1>;
    const MatQ lambda = theta;
    const MatQ lambda_t = lambda.transpose();
    Eigen::Matrix<double, P, P> A = Eigen::Matrix<double, P, P>::Zero();
    Eigen::Matrix<double, P, 1> b = Eigen::Matrix<double, P, 1>::Zero();
    double c = 0.0;
    double logdet = 0.0;
    MatQ M;
    MatQP W;
    VecQ w;
    Eigen::LLT<MatQ> llt;
    for (std::size_t i = first; i < last; ++i) {
      const double* base = blocks.data() + i * static_cast<std::size_t>(stride);
      const Eigen::Map<const MatQ> ZtZ_i(base);
      const Eigen::Map<const MatQP> ZtX_i(base + Q * Q);
      const Eigen::Map<const VecQ> Zty_i(base + Q * Q + Q * P);
      M.noalias() = lambda_t * ZtZ_i * lambda;
      M.diagonal().array() += 1.0;
      llt.compute(M);
      if (llt.info() != Eigen::Success) {
        out.ok = false;
        return;
      }
      logdet += std::log(llt.matrixLLT().diagonal().prod());
      W.noalias() = lambda_t * ZtX_i;
      w.noalias() = lambda_t * Zty_i;
      llt.matrixL().solveInPlace(W);
      llt.matrixL().solveInPlace(w);
      A.noalias() -= W.transpose() * W;
      b.noalias() -= W.transpose() * w;
      c -= w.squaredNorm();
    }
    out.logdet += 2.0 * logdet;
    out.A += A;
    out.b += b;
    out.c += c;
  }

  void accumulate_dynamic(const Eigen::MatrixXd& theta, std::size_t first, std::size_t last,
                          Partial& out) const {
    const SmallMat lambda = theta;
    SmallMat M(q, q), W(q, p);
    SmallVec w(q);
    Eigen::LLT<SmallMat> llt(q);
    for (std::size_t i = first; i < last; ++i) {
      M.noalias() = lambda.transpose() * ZtZ(i) * lambda;
      M.diagonal().array() += 1.0;
      llt.compute(M);
      if (llt.info() != Eigen::Success) {
        out.ok = false;
        return;
      }
      const auto& L = llt.matrixL();
      for (Eigen::Index k = 0; k < q; ++k) out.logdet += 2.0 * std::log(llt.matrixLLT()(k, k));
      W.noalias() = lambda.transpose() * ZtX(i);
      w.noalias() = lambda.transpose() * Zty(i);
      L.solveInPlace(W);
      L.solveInPlace(w);
      out.A.noalias() -= W.transpose() * W;
      out.b.noalias() -= W.transpose() * w;
      out.c -= w.squaredNorm();
    }
  }

  void accumulate(const Eigen::MatrixXd& theta, std::size_t first, std::size_t last,
                  Partial& out) const {
    if (q == 2 && p == 2) return accumulate_fixed<2, 2>(theta, first, last, out);
    if (q == 2 && p == 3) return accumulate_fixed<2, 3>(theta, first, last, out);
    if (q == 5 && p == 5) return accumulate_fixed<5, 5>(theta, first, last, out);
    if (q == 5 && p == 6) return accumulate_fixed<5, 6>(theta, first, last, out);
    accumulate_dynamic(theta, first, last, out);
  }

  Profile profile(const Eigen::MatrixXd& theta, KernelMode mode) const {
    Partial total{0.0, XtX, Xty, yty, true};
    const std::size_t n = ids.size();

    if (mode == KernelMode::Serial || omp_get_max_threads() == 1) {
      accumulate(theta, 0, n, total);
    } else {
      std::vector<Partial> parts;
#pragma omp parallel
      {
#pragma omp single
        parts.assign(static_cast<std::size_t>(omp_get_num_threads()),
                     Partial{0.0, Eigen::MatrixXd::Zero(p, p), Eigen::VectorXd::Zero(p), 0.0, true});
        const auto t = static_cast<std::size_t>(omp_get_thread_num());
        const std::size_t chunk = (n + parts.size() - 1) / parts.size();
        const std::size_t first = std::min(n, t * chunk);
        const std::size_t last = std::min(n, first + chunk);
        accumulate(theta, first, last, parts[t]);
      }
      for (const auto& part : parts) {
        total.ok = total.ok && part.ok;
        total.logdet += part.logdet;
        total.A += part.A;
        total.b += part.b;
        total.c += part.c;
      }
    }

    Profile out;
    if (!total.ok) return out;
    Eigen::LLT<Eigen::MatrixXd> chol(total.A);
    if (chol.info() != Eigen::Success) return out;
    out.beta = chol.solve(total.b);
    out.pwrss = total.c - total.b.dot(out.beta);
    out.logdet_L = total.logdet;
    out.logdet_A = 0.0;
    for (Eigen::Index k = 0; k < p; ++k) out.logdet_A += 2.0 * std::log(chol.matrixLLT()(k, k));
    out.A = std::move(total.A);
    out.ok = std::isfinite(out.pwrss) && out.pwrss > 0.0;
    return out;
  }

  // Profiled deviance and its gradient with respect to the packed factor.
  // With S = theta theta', dD/dS = sum_i [Z'V0^-1 Z - Z'V0^-1 X A^-1 X'V0^-1 Z
  // - (df / pwrss) u u'], u = Z'V0^-1 (y - X beta), and dD/dtheta = 2 dD/dS theta.
  double value_and_gradient(const Eigen::MatrixXd& theta, Eigen::VectorXd& gradient) const {
    const auto pr = profile(theta, options.kernel);
    const double value = profiled(pr);
    gradient = Eigen::VectorXd::Zero(q * (q + 1) / 2);
    if (!std::isfinite(value)) return value;
    const bool reml = options.estimator == Estimator::REML;
    const double scale = residual_df() / pr.pwrss;
    const Eigen::MatrixXd A_inv = pr.A.llt().solve(Eigen::MatrixXd::Identity(p, p));

    const SmallMat lambda = theta;
    SmallMat M(q, q), K(q, q), GT(q, q), Qm(q, q), R(q, p);
    SmallVec e(q), u(q);
    Eigen::LLT<SmallMat> llt(q);
    Eigen::MatrixXd dS = Eigen::MatrixXd::Zero(q, q);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const auto G = ZtZ(i);
      const auto F = ZtX(i);
      M.noalias() = lambda.transpose() * G * lambda;
      M.diagonal().array() += 1.0;
      llt.compute(M);
      K = lambda.transpose();
      llt.matrixL().solveInPlace(K);
      GT.noalias() = G * (K.transpose() * K);
      Qm.noalias() = G - GT * G;
      e.noalias() = Zty(i) - F * pr.beta;
      u.noalias() = e - GT * e;
      dS += Qm;
      if (reml) {
        R.noalias() = F - GT * F;
        dS.noalias() -= R * A_inv * R.transpose();
      }
      dS.noalias() -= scale * (u * u.transpose());
    }
    gradient = pack_lower(2.0 * dS * theta);
    return value;
  }

  double residual_df() const {
    return options.estimator == Estimator::REML ? static_cast<double>(n_obs) - static_cast<double>(p)
                                                : static_cast<double>(n_obs);
  }

  double profiled(const Profile& pr) const {
    if (!pr.ok) return std::numeric_limits<double>::infinity();
    const double df = residual_df();
    double dev = pr.logdet_L + df * (1.0 + std::log(2.0 * std::numbers::pi * pr.pwrss / df));
    if (options.estimator == Estimator::REML) dev += pr.logdet_A;
    return dev;
  }

  double at_sigma2(const Profile& pr, double sigma2) const {
    if (!pr.ok) return std::numeric_limits<double>::infinity();
    const double df = residual_df();
    double dev = pr.logdet_L + df * std::log(2.0 * std::numbers::pi * sigma2) + pr.pwrss / sigma2;
    if (options.estimator == Estimator::REML) dev += pr.logdet_A;
    return dev;
  }

  void check_estimable() const {
    if (ids.size() < 2) throw DataError("at least two children are required to fit a mixed model");
    if (n_obs <= static_cast<std::size_t>(p))
      throw DataError("too few observations for the number of fixed effects");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(XtX, Eigen::EigenvaluesOnly);
    const double top = eig.eigenvalues().maxCoeff();
    if (!(eig.eigenvalues().minCoeff() > 1e-10 * top))
      throw NumericalError("singular fixed-effect design (rank-deficient)");
  }

  // Ratio of between-child variance of OLS slopes to pooled within-child
  // residual variance, as a standard-deviation scale.
  double start_scale() const {
    std::vector<double> slopes;
    double rss = 0.0;
    double df = 0.0;
    for (const auto& r : rows) {
      if (r.size() < 2) continue;
      double mt = 0.0, mz = 0.0;
      for (const auto& m : r) {
        mt += m.age;
        mz += m.zscore;
      }
      mt /= static_cast<double>(r.size());
      mz /= static_cast<double>(r.size());
      double sxx = 0.0, sxy = 0.0, syy = 0.0;
      for (const auto& m : r) {
        sxx += (m.age - mt) * (m.age - mt);
        sxy += (m.age - mt) * (m.zscore - mz);
        syy += (m.zscore - mz) * (m.zscore - mz);
      }
      if (sxx <= 0.0) continue;
      slopes.push_back(sxy / sxx);
      if (r.size() > 2) {
        rss += std::max(0.0, syy - sxy * sxy / sxx);
        df += static_cast<double>(r.size()) - 2.0;
      }
    }
    if (slopes.size() < 2 || df <= 0.0 || rss <= 0.0) return 1.0;
    double mean = 0.0;
    for (double s : slopes) mean += s;
    mean /= static_cast<double>(slopes.size());
    double between = 0.0;
    for (double s : slopes) between += (s - mean) * (s - mean);
    between /= static_cast<double>(slopes.size() - 1);
    const double ratio = between / (rss / df);
    return std::clamp(std::sqrt(ratio), 0.1, 10.0);
  }
};

DevianceEvaluator::DevianceEvaluator(const GrowthDataset& dataset, const ModelSpec& spec,
                                     const FitOptions& options)
    : impl_(std::make_unique<Impl>(dataset, spec, options)) {}
DevianceEvaluator::~DevianceEvaluator() = default;
DevianceEvaluator::DevianceEvaluator(DevianceEvaluator&&) noexcept = default;
DevianceEvaluator& DevianceEvaluator::operator=(DevianceEvaluator&&) noexcept = default;

double DevianceEvaluator::operator()(const Eigen::VectorXd& packed_theta) const {
  return (*this)(packed_theta, impl_->options.kernel);
}

double DevianceEvaluator::operator()(const Eigen::VectorXd& packed_theta, KernelMode mode) const {
  const auto theta = unpack_lower(packed_theta, static_cast<std::size_t>(impl_->q));
  return impl_->profiled(impl_->profile(theta, mode));
}

double DevianceEvaluator::value_and_gradient(const Eigen::VectorXd& packed_theta,
                                             Eigen::VectorXd& gradient) const {
  return impl_->value_and_gradient(unpack_lower(packed_theta, static_cast<std::size_t>(impl_->q)),
                                   gradient);
}

std::size_t DevianceEvaluator::random_effects() const { return static_cast<std::size_t>(impl_->q); }
std::size_t DevianceEvaluator::fixed_effects() const { return static_cast<std::size_t>(impl_->p); }
std::size_t DevianceEvaluator::observations() const { return impl_->n_obs; }
std::size_t DevianceEvaluator::children() const { return impl_->ids.size(); }

// ---------------------------------------------------------------------------
// Fitting
// ---------------------------------------------------------------------------

MixedModelFit fit_mixed_model(const GrowthDataset& dataset, const ModelSpec& spec,
                              const FitOptions& options) {
  DevianceEvaluator eval(dataset, spec, options);
  const auto& impl = *eval.impl_;
  impl.check_estimable();
  const auto q = impl.q;

  MixedModelFit fit;
  fit.spec = spec;
  fit.estimator = options.estimator;
  fit.observations = impl.n_obs;

  Eigen::MatrixXd theta;
  if (options.fixed_theta) {
    if (options.fixed_theta->rows() != q || options.fixed_theta->cols() != q)
      throw ConfigError("fixed theta has the wrong dimension");
    theta = options.fixed_theta->triangularView<Eigen::Lower>();
    fit.converged = true;
    fit.evaluations = 1;
  } else {
    Eigen::VectorXd start = pack_lower(impl.start_scale() * Eigen::MatrixXd::Identity(q, q));
    const auto m = start.size();
    Eigen::VectorXd lower = Eigen::VectorXd::Constant(m, -std::numeric_limits<double>::infinity());
    const Eigen::VectorXd upper = Eigen::VectorXd::Constant(m, std::numeric_limits<double>::infinity());
    Eigen::Index k = 0;
    for (Eigen::Index j = 0; j < q; ++j)
      for (Eigen::Index i = j; i < q; ++i, ++k)
        if (i == j) lower(k) = 0.0;

    int evaluations = 0;
    double step_scale = 0.2;
    if (options.optimizer_kind == OptimizerKind::Bfgs) {
      const ValueGradient vg = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
        return impl.value_and_gradient(unpack_lower(x, static_cast<std::size_t>(q)), g);
      };
      const auto qn = minimize_bfgs(vg, start, options.quasi_newton);
      evaluations = qn.evaluations;
      if (std::isfinite(qn.value)) {
        theta = unpack_lower(qn.x, static_cast<std::size_t>(q));
        for (Eigen::Index j = 0; j < q; ++j)
          if (theta(j, j) < 0.0) theta.col(j) = -theta.col(j);
        theta.array() += 0.0;  // no negative zeros in output
        if (qn.converged) {
          fit.converged = true;
          fit.evaluations = evaluations;
        } else {
          start = pack_lower(theta);
          step_scale = 0.02;
        }
      }
    }

    if (!fit.converged) {
      Eigen::VectorXd step(m);
      for (Eigen::Index i = 0; i < m; ++i)
        step(i) = std::max(step_scale * std::abs(start(i)), step_scale * 0.5);
      const auto objective = [&](const Eigen::VectorXd& x) { return eval(x); };
      NelderMeadOptions nm = options.optimizer;
      nm.max_evaluations = std::max(1, nm.max_evaluations - evaluations);
      const auto result = nelder_mead(objective, start, step, lower, upper, nm);
      if (!std::isfinite(result.value))
        throw NumericalError("mixed model fit failed: deviance is not finite anywhere visited");
      theta = unpack_lower(result.x, static_cast<std::size_t>(q));
      fit.converged = result.converged;
      fit.evaluations = evaluations + result.evaluations;
    }
  }

  const auto pr = impl.profile(theta, KernelMode::Serial);
  if (!pr.ok) throw NumericalError("mixed model fit failed: singular marginal covariance");
  fit.theta = theta;
  fit.beta = pr.beta;
  if (impl.interaction_dropped) {
    fit.beta.conservativeResize(q + 1);
    fit.beta(q) = 0.0;
  }
  fit.sigma2 = pr.pwrss / impl.residual_df();
  fit.Sigma = fit.sigma2 * theta * theta.transpose();
  fit.deviance = impl.profiled(pr);
  fit.singular = (theta.diagonal().array() < kSingularTheta).any();
  fit.child_ids = impl.ids;
  fit.baselines = impl.baselines;
  fit.excluded_children = impl.excluded;

  fit.blups.reserve(impl.ids.size());
  const SmallMat lambda = theta;
  SmallMat M(q, q);
  for (std::size_t i = 0; i < impl.ids.size(); ++i) {
    M.noalias() = lambda.transpose() * impl.ZtZ(i) * lambda;
    M.diagonal().array() += 1.0;
    const SmallVec r = lambda.transpose() * (impl.Zty(i) - impl.ZtX(i) * fit.beta);
    const SmallVec u = M.llt().solve(r);
    fit.blups.emplace_back(lambda * u);
  }
  return fit;
}

std::optional<std::size_t> MixedModelFit::index_of(const std::string& child_id) const {
  const auto it = std::lower_bound(child_ids.begin(), child_ids.end(), child_id);
  if (it == child_ids.end() || *it != child_id) return std::nullopt;
  return static_cast<std::size_t>(it - child_ids.begin());
}

Eigen::VectorXd MixedModelFit::child_coefficients(std::size_t index) const {
  const auto q = static_cast<Eigen::Index>(spec.random_effects());
  return beta.head(q) + blups.at(index);
}

std::string MixedModelFit::to_json() const {
  using nlohmann::json;
  auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  json j;
  j["kind"] = std::string(to_string(spec.kind));
  j["estimator"] = estimator == Estimator::REML ? "REML" : "ML";
  if (spec.knots) j["knots"] = std::vector<double>(spec.knots->breaks().begin(), spec.knots->breaks().end());
  j["beta"] = vec(beta);
  json sig = json::array();
  for (Eigen::Index r = 0; r < Sigma.rows(); ++r) sig.push_back(vec(Sigma.row(r).transpose()));
  j["Sigma"] = sig;
  j["sigma2"] = sigma2;
  j["deviance"] = deviance;
  j["converged"] = converged;
  j["singular"] = singular;
  j["evaluations"] = evaluations;
  j["observations"] = observations;
  j["excluded_children"] = excluded_children;
  json children = json::array();
  for (std::size_t i = 0; i < child_ids.size(); ++i) {
    json c{{"child_id", child_ids[i]}, {"blup", vec(blups[i])}};
    if (spec.conditional()) c["baseline_z"] = baselines[i];
    children.push_back(std::move(c));
  }
  j["children"] = std::move(children);
  return j.dump(2);
}

std::vector<double> predict(const MixedModelFit& fit, const std::string& child_id,
                            std::span<const double> times, std::optional<double> baseline_z) {
  const auto index = fit.index_of(child_id);
  if (!index) throw DataError("unknown child '" + child_id + "'");
  if (fit.spec.conditional() != baseline_z.has_value())
    throw ConfigError(fit.spec.conditional() ? "conditional model requires a baseline z-score"
                                             : "baseline z-score given for an unconditional model");
  const auto q = static_cast<Eigen::Index>(fit.spec.random_effects());
  const Eigen::VectorXd coef = fit.child_coefficients(*index);
  Eigen::RowVectorXd z(q);
  std::vector<double> out;
  out.reserve(times.size());
  for (double t : times) {
    if (fit.spec.is_broken_stick() && !fit.spec.knots->contains(t))
      throw DataError("prediction age " + std::to_string(t) + " outside the knot boundary");
    random_row(fit.spec, t, z);
    double value = z.dot(coef);
    if (fit.spec.conditional()) value += fit.beta(q) * t * *baseline_z;
    out.push_back(value);
  }
  return out;
}

double reml_deviance(const GrowthDataset& dataset, const ModelSpec& spec,
                     const Eigen::MatrixXd& theta, const FitOptions& options) {
  DevianceEvaluator eval(dataset, spec, options);
  return eval(pack_lower(theta));
}

double reml_deviance(const GrowthDataset& dataset, const ModelSpec& spec,
                     const VarianceParams& params, const FitOptions& options) {
  if (!(params.sigma2 > 0.0)) throw ConfigError("sigma2 must be positive");
  DevianceEvaluator eval(dataset, spec, options);
  const auto& impl = *eval.impl_;
  return impl.at_sigma2(impl.profile(params.theta, options.kernel), params.sigma2);
}

}  // namespace falter
