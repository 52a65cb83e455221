#pragma once

// L1-regularised least squares by cyclic coordinate descent.
//
// Problem form (row regression, no intercept - all signals are deviation
// variables):
//
//     f(beta) = (1/2N) ||y - X^T beta||^2 + lambda ||beta||_1,
//
// with X a features x N design whose columns are samples and y a length-N
// target.  The solver runs on precomputed second moments ("covariance
// method"),
//
//     G = X X^T / N,   c = X y / N,
//
// so a coordinate visit costs O(1) plus O(p) when the coefficient actually
// moves, independent of N; the moments are shared across target rows and
// across a whole regularisation path.
//
// With standardize on, predictors are rescaled to unit root-mean-square
// internally (no centering, matching the no-intercept convention) so the
// penalty acts on comparable coordinates; returned coefficients are always
// mapped back to the original scale.  objective_value and kkt_residual then
// refer to the optimisation actually performed, i.e. the scaled problem.
//
// Convergence is certified by the KKT residual of the full problem:
//   |g_j| <= lambda + tol where beta_j = 0, and
//   |g_j + lambda sign(beta_j)| <= tol where beta_j != 0,
// with g the gradient of the smooth part.  Exhausting max_sweeps raises
// LassoNonConvergence carrying the best iterate found.

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace mle {

/// sign(z) * max(|z| - gamma, 0)
inline double soft_threshold(double z, double gamma) {
  if (z > gamma) return z - gamma;
  if (z < -gamma) return z + gamma;
  return 0.0;
}

struct LassoProblem {
  Eigen::MatrixXd predictors;  ///< features x N, columns are samples
  Eigen::VectorXd targets;     ///< length N
  double lambda = 0.0;
  bool standardize = true;
  double tolerance = 1e-7;  ///< KKT residual bound
  long max_sweeps = 100000;
};

struct LassoSolution {
  Eigen::VectorXd coefficients;  ///< original (unscaled) coordinates
  double objective_value = 0.0;  ///< objective of the solved (possibly scaled) problem
  double kkt_residual = 0.0;
  long sweeps_used = 0;
  bool rank_deficient = false;  ///< lambda = 0 only: minimum-norm fallback engaged
};

/// Raised when max_sweeps is exhausted; carries the best iterate so callers
/// can inspect how far the solve got.
class LassoNonConvergence : public std::runtime_error {
 public:
  LassoNonConvergence(const std::string& message, LassoSolution best_iterate)
      : std::runtime_error(message), best(std::move(best_iterate)) {}
  LassoSolution best;
};

namespace detail {

/// Second moments of one design matrix, optionally in unit-RMS scaled
/// coordinates, shared by every target row and every lambda of a path.
struct LassoGram {
  Eigen::MatrixXd gram;            // G (scaled when standardized)
  Eigen::MatrixXd corr;            // c, one column per target row (scaled likewise)
  Eigen::VectorXd scale;           // per-feature RMS divisor (1 where degenerate)
  Eigen::VectorXd target_sq_mean;  // y.y/N per target row
  bool standardized = false;

  /// targets_rows: one target per row (r x N).
  static LassoGram build(const Eigen::Ref<const Eigen::MatrixXd>& x,
                         const Eigen::Ref<const Eigen::MatrixXd>& targets_rows,
                         bool standardize) {
    if (x.cols() != targets_rows.cols())
      throw std::invalid_argument("lasso: predictors and targets disagree on sample count");
    if (x.cols() < 1 || x.rows() < 1)
      throw std::invalid_argument("lasso: need at least one feature and one sample");
    const double n = static_cast<double>(x.cols());
    LassoGram g;
    g.gram.noalias() = x * x.transpose();
    g.gram /= n;
    g.corr.noalias() = x * targets_rows.transpose();
    g.corr /= n;
    g.target_sq_mean = targets_rows.rowwise().squaredNorm() / n;
    g.standardized = standardize;
    if (standardize) {
      g.scale = g.gram.diagonal().cwiseMax(0.0).cwiseSqrt();
      // A feature that is identically zero keeps scale 1; its gram row and
      // correlation are zero, so coordinate descent will pin it at zero.
      for (Eigen::Index j = 0; j < g.scale.size(); ++j)
        if (g.scale[j] <= 0.0) g.scale[j] = 1.0;
      const Eigen::VectorXd inv = g.scale.cwiseInverse();
      g.gram = inv.asDiagonal() * g.gram * inv.asDiagonal();
      g.corr = inv.asDiagonal() * g.corr;
    } else {
      g.scale = Eigen::VectorXd::Ones(x.rows());
    }
    return g;
  }
};

struct CdResult {
  Eigen::VectorXd beta;  // in the gram's (possibly scaled) coordinates
  double kkt = 0.0;
  double objective = 0.0;
  long sweeps = 0;
  bool converged = false;
  bool rank_deficient = false;
};

inline double kkt_from_gradient(const Eigen::VectorXd& beta, const Eigen::VectorXd& grad,
                                double lambda) {
  double worst = 0.0;
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    const double v = beta[j] == 0.0
                         ? std::max(std::abs(grad[j]) - lambda, 0.0)
                         : std::abs(grad[j] + lambda * (beta[j] > 0.0 ? 1.0 : -1.0));
    worst = std::max(worst, v);
  }
  return worst;
}

inline double moment_objective(const LassoGram& g, int target, const Eigen::VectorXd& beta,
                               const Eigen::VectorXd& q, double lambda) {
  return 0.5 * g.target_sq_mean[target] - g.corr.col(target).dot(beta) + 0.5 * beta.dot(q) +
         lambda * beta.lpNorm<1>();
}

/// Cyclic coordinate descent on precomputed moments.  After the first full
/// cycle, sweeps run over the active set until it stabilises, then a full
/// sweep re-checks every coordinate; convergence is certified with a freshly
/// recomputed gradient.
inline CdResult coordinate_descent(const LassoGram& g, int target, double lambda, double tol,
                                   long max_sweeps, Eigen::VectorXd beta) {
  const Eigen::Index p = g.gram.rows();
  const Eigen::VectorXd& c = g.corr.col(target);
  if (beta.size() != p) beta = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd q = g.gram * beta;  // running G beta

  // One pass over `index_count` coordinates (all of them, or the active set);
  // returns the largest KKT violation seen at visit time.
  std::vector<Eigen::Index> active;
  auto sweep = [&](bool active_only) {
    double worst = 0.0;
    const Eigen::Index count = active_only ? static_cast<Eigen::Index>(active.size()) : p;
    for (Eigen::Index k = 0; k < count; ++k) {
      const Eigen::Index j = active_only ? active[static_cast<std::size_t>(k)] : k;
      const double gjj = g.gram(j, j);
      if (gjj <= 0.0) continue;  // degenerate (zero-variance) feature stays at zero
      const double grad = q[j] - c[j];
      const double viol = beta[j] == 0.0
                              ? std::max(std::abs(grad) - lambda, 0.0)
                              : std::abs(grad + lambda * (beta[j] > 0.0 ? 1.0 : -1.0));
      worst = std::max(worst, viol);
      const double next = soft_threshold(c[j] - q[j] + gjj * beta[j], lambda) / gjj;
      const double diff = next - beta[j];
      if (diff != 0.0) {
        q.noalias() += diff * g.gram.col(j);
        beta[j] = next;
      }
    }
    return worst;
  };

  CdResult out;
  while (out.sweeps < max_sweeps) {
    q.noalias() = g.gram * beta;  // refresh: keeps incremental drift bounded
    const double full_viol = sweep(false);
    ++out.sweeps;
    if (full_viol <= tol) {
      q.noalias() = g.gram * beta;
      const double kkt = kkt_from_gradient(beta, q - c, lambda);
      if (kkt <= tol) {
        out.beta = beta;
        out.kkt = kkt;
        out.objective = moment_objective(g, target, beta, q, lambda);
        out.converged = true;
        return out;
      }
    }
    active.clear();
    for (Eigen::Index j = 0; j < p; ++j)
      if (beta[j] != 0.0) active.push_back(j);
    while (out.sweeps < max_sweeps) {
      const double viol = sweep(true);
      ++out.sweeps;
      if (viol <= tol) break;
    }
  }

  q.noalias() = g.gram * beta;
  out.beta = beta;
  out.kkt = kkt_from_gradient(beta, q - c, lambda);
  out.objective = moment_objective(g, target, beta, q, lambda);
  out.converged = false;
  return out;
}

/// lambda = 0: plain least squares on the moments.  Uses the spectral
/// pseudo-inverse, which returns the unique solution when G is positive
/// definite and the minimum-norm solution otherwise (flagged).
inline CdResult least_squares_gram(const LassoGram& g, int target) {
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g.gram);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("lasso: eigendecomposition of the gram matrix failed");
  const Eigen::VectorXd& eig = es.eigenvalues();
  const double threshold = eig.cwiseAbs().maxCoeff() * 1e-12;
  const Eigen::VectorXd proj = es.eigenvectors().transpose() * g.corr.col(target);

  CdResult out;
  Eigen::VectorXd coeff = Eigen::VectorXd::Zero(eig.size());
  for (Eigen::Index i = 0; i < eig.size(); ++i) {
    if (eig[i] > threshold)
      coeff[i] = proj[i] / eig[i];
    else
      out.rank_deficient = true;
  }
  out.beta = es.eigenvectors() * coeff;
  const Eigen::VectorXd q = g.gram * out.beta;
  out.kkt = kkt_from_gradient(out.beta, q - g.corr.col(target), 0.0);
  out.objective = moment_objective(g, target, out.beta, q, 0.0);
  out.converged = true;
  return out;
}

inline LassoSolution to_solution(const CdResult& r, const LassoGram& g) {
  LassoSolution s;
  s.coefficients = r.beta.cwiseQuotient(g.scale);
  s.objective_value = r.objective;
  s.kkt_residual = r.kkt;
  s.sweeps_used = r.sweeps;
  s.rank_deficient = r.rank_deficient;
  return s;
}

}  // namespace detail

/// Smallest lambda that zeroes every coefficient, for the (optionally
/// standardized) problem: the largest absolute entry of c = X y / N.
inline double lambda_max(const Eigen::Ref<const Eigen::MatrixXd>& predictors,
                         const Eigen::Ref<const Eigen::VectorXd>& targets,
                         bool standardize = true) {
  const auto g = detail::LassoGram::build(predictors, targets.transpose(), standardize);
  return g.corr.col(0).cwiseAbs().maxCoeff();
}

/// KKT residual of `coefficients` for the plain (unscaled) problem; an
/// independent certificate computed straight from the data.
inline double kkt_residual(const Eigen::Ref<const Eigen::MatrixXd>& predictors,
                           const Eigen::Ref<const Eigen::VectorXd>& targets, double lambda,
                           const Eigen::Ref<const Eigen::VectorXd>& coefficients) {
  if (predictors.cols() != targets.size() || predictors.rows() != coefficients.size())
    throw std::invalid_argument("kkt_residual: dimension mismatch");
  const double n = static_cast<double>(predictors.cols());
  const Eigen::VectorXd residual = targets - predictors.transpose() * coefficients;
  const Eigen::VectorXd grad = -(predictors * residual) / n;
  return detail::kkt_from_gradient(coefficients, grad, lambda);
}

inline LassoSolution lasso_fit(const LassoProblem& problem) {
  if (!(problem.lambda >= 0.0) || !std::isfinite(problem.lambda))
    throw std::invalid_argument("lasso_fit: lambda must be finite and >= 0");
  if (!(problem.tolerance > 0.0))
    throw std::invalid_argument("lasso_fit: tolerance must be positive");
  if (problem.max_sweeps < 1) throw std::invalid_argument("lasso_fit: max_sweeps must be >= 1");

  const auto gram =
      detail::LassoGram::build(problem.predictors, problem.targets.transpose(),
                               problem.standardize);
  detail::CdResult r;
  if (problem.lambda == 0.0) {
    r = detail::least_squares_gram(gram, 0);
  } else {
    r = detail::coordinate_descent(gram, 0, problem.lambda, problem.tolerance,
                                   problem.max_sweeps, Eigen::VectorXd());
  }
  LassoSolution s = detail::to_solution(r, gram);
  if (!r.converged)
    throw LassoNonConvergence(
        "lasso_fit: no convergence after " + std::to_string(r.sweeps) +
            " sweeps (kkt residual " + std::to_string(r.kkt) + ", tolerance " +
            std::to_string(problem.tolerance) + ")",
        std::move(s));
  return s;
}

struct LassoPathOptions {
  bool standardize = true;
  double tolerance = 1e-7;
  long max_sweeps = 100000;
};

/// Warm-started solutions along a descending lambda grid (a trailing 0 is
/// allowed and handled as plain least squares).
inline std::vector<LassoSolution> lasso_path(const Eigen::Ref<const Eigen::MatrixXd>& predictors,
                                             const Eigen::Ref<const Eigen::VectorXd>& targets,
                                             const std::vector<double>& lambda_grid,
                                             const LassoPathOptions& options = {}) {
  if (lambda_grid.empty()) throw std::invalid_argument("lasso_path: empty lambda grid");
  for (std::size_t i = 0; i < lambda_grid.size(); ++i) {
    if (!(lambda_grid[i] >= 0.0) || !std::isfinite(lambda_grid[i]))
      throw std::invalid_argument("lasso_path: lambdas must be finite and >= 0");
    if (i > 0 && lambda_grid[i] >= lambda_grid[i - 1])
      throw std::invalid_argument("lasso_path: lambda grid must be strictly descending");
  }

  const auto gram =
      detail::LassoGram::build(predictors, targets.transpose(), options.standardize);
  std::vector<LassoSolution> out;
  out.reserve(lambda_grid.size());
  Eigen::VectorXd warm;
  for (const double lambda : lambda_grid) {
    detail::CdResult r;
    if (lambda == 0.0) {
      r = detail::least_squares_gram(gram, 0);
    } else {
      r = detail::coordinate_descent(gram, 0, lambda, options.tolerance, options.max_sweeps,
                                     warm);
      warm = r.beta;
    }
    LassoSolution s = detail::to_solution(r, gram);
    if (!r.converged)
      throw LassoNonConvergence("lasso_path: no convergence at lambda = " +
                                    std::to_string(lambda),
                                std::move(s));
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace mle
