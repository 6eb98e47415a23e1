#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "falter/growth_data.hpp"
#include "falter/optimize.hpp"
#include "falter/spline_basis.hpp"

namespace falter {

enum class ModelKind { RS, cRS, BrokenStick, cBrokenStick };

std::string_view to_string(ModelKind kind);

/// Largest supported number of random effects (B-spline basis functions).
inline constexpr std::size_t kMaxRandomEffects = 15;

/// Fixed and random design of a Gaussian mixed model on z-scores.
///   RS            X = Z = [1, t]
///   cRS           X = [1, t, t*z0],     Z = [1, t]
///   BrokenStick   X = Z = B(t)
///   cBrokenStick  X = [B(t), t*z0],     Z = B(t)
/// z0 is the child's baseline z-score. Random effects are the leading
/// columns of X, so child coefficients are beta.head(q) + blup.
struct ModelSpec {
  ModelKind kind = ModelKind::RS;
  std::optional<KnotVector> knots;

  static ModelSpec random_slopes(bool conditional = false);
  static ModelSpec broken_stick(KnotVector knots, bool conditional = false);

  bool conditional() const { return kind == ModelKind::cRS || kind == ModelKind::cBrokenStick; }
  bool is_broken_stick() const {
    return kind == ModelKind::BrokenStick || kind == ModelKind::cBrokenStick;
  }
  std::size_t random_effects() const;
  std::size_t fixed_effects() const { return random_effects() + (conditional() ? 1 : 0); }

  /// Throws ConfigError when knots are present iff the kind is not broken-stick.
  void validate() const;
};

enum class Estimator { REML, ML };

/// Serial evaluates children in order; Parallel splits children across OpenMP
/// threads and sums per-thread partials in thread order, so results are
/// reproducible for a fixed thread count.
enum class KernelMode { Serial, Parallel };

/// Bfgs minimizes the profiled deviance over the unconstrained factor using
/// its analytic gradient; the deviance only sees theta theta', so column signs
/// are normalized afterwards. If it fails to converge, bounded Nelder-Mead
/// continues from its best point. NelderMead is derivative free throughout.
enum class OptimizerKind { Bfgs, NelderMead };

struct FitOptions {
  Estimator estimator = Estimator::REML;
  bool drop_baseline_row = false;
  KernelMode kernel = KernelMode::Serial;
  OptimizerKind optimizer_kind = OptimizerKind::Bfgs;
  QuasiNewtonOptions quasi_newton{};
  NelderMeadOptions optimizer{};
  /// Skip optimization and evaluate at this relative covariance factor.
  std::optional<Eigen::MatrixXd> fixed_theta;
};

/// theta: lower-triangular factor with Sigma = sigma2 * theta * theta^T.
struct VarianceParams {
  Eigen::MatrixXd theta;
  double sigma2 = 1.0;
};

struct MixedModelFit {
  ModelSpec spec;
  Estimator estimator = Estimator::REML;
  Eigen::VectorXd beta;
  Eigen::MatrixXd theta;
  Eigen::MatrixXd Sigma;
  double sigma2 = 0.0;
  std::vector<std::string> child_ids;     // sorted, as in the dataset
  std::vector<Eigen::VectorXd> blups;     // random-effect deviations per child
  std::vector<double> baselines;          // z0 per child (conditional kinds)
  std::vector<std::string> excluded_children;
  std::size_t observations = 0;
  double deviance = 0.0;
  bool converged = false;
  bool singular = false;
  int evaluations = 0;

  std::optional<std::size_t> index_of(const std::string& child_id) const;

  /// beta.head(q) + blup: the child's own random-coefficient vector.
  Eigen::VectorXd child_coefficients(std::size_t index) const;

  std::string to_json() const;
};

/// REML (or ML) fit by BFGS over the Cholesky factor of the relative
/// random-effect covariance, with bounded Nelder-Mead as a fallback. Conditional kinds use children with at
/// least two in-window measurements; others are listed in excluded_children.
/// Throws NumericalError on a rank-deficient fixed design and DataError on
/// too few children or observations.
MixedModelFit fit_mixed_model(const GrowthDataset& dataset, const ModelSpec& spec,
                              const FitOptions& options = {});

/// Population prediction plus the child's BLUP contribution at each time.
/// baseline_z must be supplied iff the model is conditional.
std::vector<double> predict(const MixedModelFit& fit, const std::string& child_id,
                            std::span<const double> times, std::optional<double> baseline_z);

/// -2 x restricted (or full) log-likelihood with beta and sigma2 profiled out.
/// Returns +infinity when the marginal covariance is numerically singular.
double reml_deviance(const GrowthDataset& dataset, const ModelSpec& spec,
                     const Eigen::MatrixXd& theta, const FitOptions& options = {});

/// Same criterion with beta profiled out but sigma2 held at params.sigma2.
double reml_deviance(const GrowthDataset& dataset, const ModelSpec& spec,
                     const VarianceParams& params, const FitOptions& options = {});

/// Packs the lower triangle column by column, and back.
Eigen::VectorXd pack_lower(const Eigen::MatrixXd& lower);
Eigen::MatrixXd unpack_lower(const Eigen::VectorXd& packed, std::size_t q);

/// Per-child sufficient statistics of a model design with a reusable deviance
/// evaluator. Exposed for benchmarking the serial and parallel kernels.
class DevianceEvaluator {
 public:
  DevianceEvaluator(const GrowthDataset& dataset, const ModelSpec& spec,
                    const FitOptions& options = {});
  ~DevianceEvaluator();
  DevianceEvaluator(DevianceEvaluator&&) noexcept;
  DevianceEvaluator& operator=(DevianceEvaluator&&) noexcept;

  /// Profiled deviance at packed theta.
  double operator()(const Eigen::VectorXd& packed_theta) const;
  /// Profiled deviance and its gradient with respect to packed theta.
  double value_and_gradient(const Eigen::VectorXd& packed_theta, Eigen::VectorXd& gradient) const;
  double operator()(const Eigen::VectorXd& packed_theta, KernelMode mode) const;

  std::size_t random_effects() const;
  std::size_t fixed_effects() const;
  std::size_t observations() const;
  std::size_t children() const;

 private:
  friend MixedModelFit fit_mixed_model(const GrowthDataset&, const ModelSpec&,
                                       const FitOptions&);
  friend double reml_deviance(const GrowthDataset&, const ModelSpec&, const VarianceParams&,
                              const FitOptions&);
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace falter
