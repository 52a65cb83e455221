#pragma once

// Mismatch estimation from routine closed-loop data.
//
// Around each reference excitation a window of the record becomes a lagged
// regression dataset (same stacked-history layout as the ARX predictor).  The
// mismatch is the sparse residual correction DR minimizing
//
//     (1/2N) ||Y - (R + DR) X||_F^2 + lambda ||DR||_1,
//
// fit row-wise with the lasso solver on the measured (noisy) signals; lambda
// is chosen by two-fold cross-validation across two excitation windows, ties
// broken toward the stronger penalty, with a final refit on the merged data.

#include <mle/arx.hpp>
#include <mle/lasso.hpp>
#include <mle/record.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace mle {

/// Contiguous run of record sample indices.
struct SampleRange {
  Eigen::Index first = 0;
  Eigen::Index count = 0;
};

/// Lagged regression data: column k of x holds the stacked newest-first
/// history [y_{k-1}; u_{k-1}; ...; y_{k-d}; u_{k-d}] and y.col(k) the target.
struct RegressionDataset {
  Eigen::MatrixXd x;                  ///< d(m+p) x N
  Eigen::MatrixXd y;                  ///< p x N
  std::vector<Eigen::Index> indices;  ///< source sample index per column
  int order = 0;                      ///< lag depth d

  Eigen::Index size() const { return x.cols(); }
};

/// Window [center - half_width, center + half_width] on the record's grid.
inline SampleRange extract_window(const SimulationRecord& record, double center,
                                  double half_width) {
  detail::check_record_shape(record);
  if (!std::isfinite(center) || !(half_width >= 0.0))
    throw std::invalid_argument("extract_window: need a finite center and half_width >= 0");
  const double dt = record.sample_period;
  const auto first = std::llround((center - half_width) / dt);
  const auto last = std::llround((center + half_width) / dt);
  if (std::abs(static_cast<double>(first) * dt - (center - half_width)) > 1e-9 ||
      std::abs(static_cast<double>(last) * dt - (center + half_width)) > 1e-9)
    throw std::invalid_argument("extract_window: window edges must lie on the sample grid");
  if (first < 0 || last >= record.samples())
    throw std::invalid_argument("extract_window: window [" + std::to_string(center - half_width) +
                                ", " + std::to_string(center + half_width) +
                                "] min does not fit inside the record");
  return SampleRange{first, last - first + 1};
}

/// Assembles the lagged dataset over `range`; every target sample needs
/// `order` preceding samples of history inside the record.
inline RegressionDataset build_dataset(const SimulationRecord& record, const SampleRange& range,
                                       int order) {
  detail::check_record_shape(record);
  if (order < 1) throw std::invalid_argument("build_dataset: order must be >= 1");
  if (range.count < 1) throw std::invalid_argument("build_dataset: empty sample range");
  if (range.first + range.count > record.samples())
    throw std::invalid_argument("build_dataset: range reaches past the record");
  if (range.first < order)
    throw std::invalid_argument("build_dataset: insufficient history before sample " +
                                std::to_string(range.first) + " (need " + std::to_string(order) +
                                " preceding samples)");
  const int p = record.outputs(), m = record.inputs();
  RegressionDataset dataset;
  dataset.order = order;
  dataset.x.resize(static_cast<Eigen::Index>(order) * (p + m), range.count);
  dataset.y.resize(p, range.count);
  dataset.indices.reserve(static_cast<std::size_t>(range.count));
  for (Eigen::Index j = 0; j < range.count; ++j) {
    const Eigen::Index k = range.first + j;
    detail::fill_history_column(dataset.x.col(j), record.y_measured, record.u, k, order);
    dataset.y.col(j) = record.y_measured.col(k);
    dataset.indices.push_back(k);
  }
  return dataset;
}

/// Column-wise concatenation; each column keeps the history it was built with.
inline RegressionDataset merge(const RegressionDataset& a, const RegressionDataset& b) {
  if (a.x.rows() != b.x.rows() || a.y.rows() != b.y.rows() || a.order != b.order)
    throw std::invalid_argument("merge: datasets disagree on layout");
  RegressionDataset merged;
  merged.order = a.order;
  merged.x.resize(a.x.rows(), a.size() + b.size());
  merged.x << a.x, b.x;
  merged.y.resize(a.y.rows(), a.size() + b.size());
  merged.y << a.y, b.y;
  merged.indices = a.indices;
  merged.indices.insert(merged.indices.end(), b.indices.begin(), b.indices.end());
  return merged;
}

/// A fitted mismatch: the residual correction and the corrected predictor.
struct MpmEstimate {
  Eigen::MatrixXd delta_r;  ///< p x d(m+p)
  double lambda = 0.0;
  ArxModel corrected;       ///< coefficients are exactly base + delta_r
  bool rank_deficient = false;  ///< lambda = 0 fell back to the minimum-norm solution
};

struct EstimateOptions {
  bool standardize = true;
  double tolerance = 1e-7;
  long max_sweeps = 2000000;
};

namespace detail {

inline void check_dataset_against(const RegressionDataset& dataset, const ArxModel& base,
                                  const char* who) {
  if (dataset.size() < 1) throw std::invalid_argument(std::string(who) + ": empty dataset");
  if (dataset.x.rows() != base.history_size() || dataset.y.rows() != base.outputs() ||
      dataset.order != base.order())
    throw std::invalid_argument(std::string(who) +
                                ": dataset layout does not match the base model");
}

inline void check_lambda_grid(const std::vector<double>& grid, const char* who) {
  if (grid.empty()) throw std::invalid_argument(std::string(who) + ": empty lambda grid");
  for (const double lambda : grid)
    if (!(lambda >= 0.0) || !std::isfinite(lambda))
      throw std::invalid_argument(std::string(who) + ": lambdas must be finite and >= 0");
}

/// Active-set polish.  Coordinate descent identifies the support of the
/// solution quickly but, on ill-conditioned closed-loop grams, crawls along
/// near-flat directions for hundreds of thousands of sweeps.  This step fixes
/// the support and sign pattern suggested by a few descent sweeps, solves the
/// resulting equality-constrained quadratic directly, and walks sign changes
/// with a line search (Osborne-style), adding the worst gradient violator
/// between solves.  It only produces a seed: every returned vector is fed back
/// into coordinate_descent, whose full-gradient check remains the sole
/// convergence certificate.  Returns the best (by penalized objective) point
/// encountered.
inline Eigen::VectorXd polish_seed(const LassoGram& g, int target, double lambda, double tol,
                                   Eigen::VectorXd beta, int max_rounds = 50) {
  const Eigen::Index p = g.gram.rows();
  const Eigen::VectorXd& c = g.corr.col(target);

  // Cheap support identification; descent sweeps never increase the objective.
  beta = coordinate_descent(g, target, lambda, tol, 3, std::move(beta)).beta;

  std::vector<Eigen::Index> active;
  Eigen::VectorXd sign = Eigen::VectorXd::Zero(p);
  for (Eigen::Index j = 0; j < p; ++j)
    if (beta[j] != 0.0) {
      active.push_back(j);
      sign[j] = beta[j] > 0.0 ? 1.0 : -1.0;
    }

  Eigen::VectorXd q = g.gram * beta;
  Eigen::VectorXd best = beta;
  double best_obj = moment_objective(g, target, beta, q, lambda);

  for (int round = 0; round < max_rounds; ++round) {
    if (!active.empty()) {
      const auto n = static_cast<Eigen::Index>(active.size());
      Eigen::MatrixXd block(n, n);
      Eigen::VectorXd rhs(n);
      for (Eigen::Index a = 0; a < n; ++a) {
        for (Eigen::Index b = 0; b < n; ++b) block(a, b) = g.gram(active[a], active[b]);
        rhs[a] = c[active[a]] - lambda * sign[active[a]];
      }
      const Eigen::LDLT<Eigen::MatrixXd> ldlt(block);
      const Eigen::VectorXd z = ldlt.solve(rhs);
      if (ldlt.info() != Eigen::Success || !z.allFinite() ||
          (block * z - rhs).cwiseAbs().maxCoeff() > 1e-8 * (1.0 + rhs.cwiseAbs().maxCoeff()))
        break;  // singular active block: leave the rest to coordinate descent

      // Step length: full step if z keeps every sign, else stop at the first
      // zero crossing and retire the coordinates that hit it.
      double step = 1.0;
      for (Eigen::Index a = 0; a < n; ++a)
        if (z[a] * sign[active[a]] <= 0.0)
          step = std::min(step, beta[active[a]] / (beta[active[a]] - z[a]));
      if (!(step > 0.0)) break;  // a just-added coordinate refused to move

      std::vector<Eigen::Index> kept;
      for (Eigen::Index a = 0; a < n; ++a) {
        const Eigen::Index j = active[a];
        const double value = step == 1.0 ? z[a] : beta[j] + step * (z[a] - beta[j]);
        if (value * sign[j] > 0.0) {
          beta[j] = value;
          kept.push_back(j);
        } else {
          beta[j] = 0.0;
          sign[j] = 0.0;
        }
      }
      active.swap(kept);
      q.noalias() = g.gram * beta;
      const double obj = moment_objective(g, target, beta, q, lambda);
      if (obj < best_obj) {
        best_obj = obj;
        best = beta;
      }
      if (step < 1.0) continue;  // support shrank: re-solve before growing it
    }

    // Sign-feasible stationary point on the current support: certify or grow.
    double worst = tol;
    Eigen::Index worst_j = -1;
    for (Eigen::Index j = 0; j < p; ++j) {
      if (sign[j] != 0.0) continue;
      const double viol = std::abs(q[j] - c[j]) - lambda;
      if (viol > worst) {
        worst = viol;
        worst_j = j;
      }
    }
    if (worst_j < 0) break;  // interior KKT holds; descent certifies in one sweep
    active.push_back(worst_j);
    sign[worst_j] = q[worst_j] - c[worst_j] > 0.0 ? -1.0 : 1.0;
  }
  return best;
}

/// Solves one output row of the residual problem across lambdas.  The row's
/// least-squares solution is computed once: it answers lambda = 0 directly and
/// doubles as a coordinate-descent seed, which matters on closed-loop data
/// where the gram is ill-conditioned and small-lambda solves converge slowly
/// from a cold start.  Each positive lambda starts from the best (by penalized
/// objective) of zero, that seed, and the previous path point — zero wins near
/// the top of the path where the solution is sparse and a dense ill-conditioned
/// start would crawl — sharpened by an active-set polish before the certified
/// descent run.
class RowSolver {
 public:
  RowSolver(const LassoGram& gram, int row)
      : gram_(gram), row_(row), ls_(least_squares_gram(gram, row)),
        q_ls_(gram.gram * ls_.beta) {}

  CdResult solve(double lambda, const Eigen::VectorXd& warm, double tolerance,
                 long max_sweeps) const {
    if (lambda == 0.0) return ls_;
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(gram_.gram.rows());
    const Eigen::VectorXd* seed = &zero;
    double seed_obj = 0.5 * gram_.target_sq_mean[row_];
    const double via_ls = moment_objective(gram_, row_, ls_.beta, q_ls_, lambda);
    if (via_ls < seed_obj) {
      seed = &ls_.beta;
      seed_obj = via_ls;
    }
    if (warm.size() > 0) {
      const Eigen::VectorXd q_warm = gram_.gram * warm;
      if (moment_objective(gram_, row_, warm, q_warm, lambda) <= seed_obj) seed = &warm;
    }
    return coordinate_descent(gram_, row_, lambda, tolerance, max_sweeps,
                              polish_seed(gram_, row_, lambda, tolerance, *seed));
  }

 private:
  const LassoGram& gram_;
  int row_;
  CdResult ls_;
  Eigen::VectorXd q_ls_;
};

/// Residual-correction fits over the whole grid on one dataset, solved in
/// descending lambda order so each solve warm-starts the next.  Returns one
/// delta matrix per grid entry, in grid order and original units.
inline std::vector<Eigen::MatrixXd> mismatch_path(const RegressionDataset& train,
                                                  const ArxModel& base,
                                                  const std::vector<double>& grid,
                                                  const EstimateOptions& options,
                                                  const std::string& who) {
  std::vector<std::size_t> order(grid.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return grid[a] > grid[b]; });

  const Eigen::MatrixXd residuals = train.y - base.coefficients() * train.x;
  const auto gram = LassoGram::build(train.x, residuals, options.standardize);
  std::vector<Eigen::MatrixXd> deltas(grid.size(),
                                      Eigen::MatrixXd(base.outputs(), train.x.rows()));
  for (int row = 0; row < base.outputs(); ++row) {
    const RowSolver solver(gram, row);
    Eigen::VectorXd warm;
    for (const std::size_t idx : order) {
      const double lambda = grid[idx];
      const CdResult r = solver.solve(lambda, warm, options.tolerance, options.max_sweeps);
      if (!r.converged)
        throw LassoNonConvergence(who + ": output row " + std::to_string(row + 1) +
                                      " did not converge at lambda = " + std::to_string(lambda),
                                  to_solution(r, gram));
      if (lambda > 0.0) warm = r.beta;
      deltas[idx].row(row) = r.beta.cwiseQuotient(gram.scale).transpose();
    }
  }
  return deltas;
}

}  // namespace detail

/// Fits the residual correction at one lambda.  Throws LassoNonConvergence
/// naming the output row if a row fails to certify.
inline MpmEstimate estimate_mpm(const RegressionDataset& dataset, const ArxModel& base,
                                double lambda, const EstimateOptions& options = {}) {
  detail::check_dataset_against(dataset, base, "estimate_mpm");
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    throw std::invalid_argument("estimate_mpm: lambda must be finite and >= 0");

  const Eigen::MatrixXd residuals = dataset.y - base.coefficients() * dataset.x;
  const auto gram = detail::LassoGram::build(dataset.x, residuals, options.standardize);
  Eigen::MatrixXd delta(base.outputs(), dataset.x.rows());
  bool rank_deficient = false;
  for (int row = 0; row < base.outputs(); ++row) {
    const detail::CdResult r = detail::RowSolver(gram, row).solve(
        lambda, Eigen::VectorXd(), options.tolerance, options.max_sweeps);
    if (!r.converged)
      throw LassoNonConvergence("estimate_mpm: output row " + std::to_string(row + 1) +
                                    " did not converge at lambda = " + std::to_string(lambda),
                                detail::to_solution(r, gram));
    rank_deficient = rank_deficient || r.rank_deficient;
    delta.row(row) = r.beta.cwiseQuotient(gram.scale).transpose();
  }
  ArxModel corrected(base.outputs(), base.inputs(), base.order(), base.sample_period(),
                     base.coefficients() + delta);
  return MpmEstimate{std::move(delta), lambda, std::move(corrected), rank_deficient};
}

/// (1/2N) ||Y - (R + DR) X||_F^2 on `dataset`, plus lambda ||DR||_1 when
/// include_penalty is set.
inline double validation_loss(const RegressionDataset& dataset, const ArxModel& base,
                              const MpmEstimate& estimate, bool include_penalty = false) {
  detail::check_dataset_against(dataset, base, "validation_loss");
  const Eigen::MatrixXd residuals = dataset.y - estimate.corrected.coefficients() * dataset.x;
  double loss = residuals.squaredNorm() / (2.0 * static_cast<double>(dataset.size()));
  if (include_penalty) loss += estimate.lambda * estimate.delta_r.lpNorm<1>();
  return loss;
}

struct CvOptions {
  bool standardize = true;
  bool include_penalty = false;
  double tolerance = 1e-7;
  long max_sweeps = 2000000;
};

struct CvReport {
  std::vector<double> lambda_grid;
  std::vector<double> loss_fold1;  ///< fit on D1, validated on D2
  std::vector<double> loss_fold2;  ///< fit on D2, validated on D1
  std::vector<double> l1_fold1;    ///< ||DR||_1 of the fit on D1, per lambda
  std::vector<double> l1_fold2;    ///< ||DR||_1 of the fit on D2, per lambda
  bool penalty_in_loss = false;    ///< whether loss_fold* include lambda ||DR||_1
  double lambda_star = 0.0;
  MpmEstimate final_estimate;      ///< refit on the merged dataset at lambda_star
  std::vector<std::string> warnings;
};

/// Two-fold cross-validation over the lambda grid: fit each fold, score on
/// the other, sum, pick the minimizer (ties toward larger lambda), and refit
/// on the merged data.
inline CvReport cross_validate(const RegressionDataset& d1, const RegressionDataset& d2,
                               const ArxModel& base, const std::vector<double>& grid,
                               const CvOptions& options = {}) {
  detail::check_dataset_against(d1, base, "cross_validate");
  detail::check_dataset_against(d2, base, "cross_validate");
  detail::check_lambda_grid(grid, "cross_validate");

  const EstimateOptions fit{options.standardize, options.tolerance, options.max_sweeps};
  std::vector<double> losses[2];
  std::vector<double> l1_norms[2];
  for (int fold = 0; fold < 2; ++fold) {
    const RegressionDataset& train = fold == 0 ? d1 : d2;
    const RegressionDataset& valid = fold == 0 ? d2 : d1;
    const std::vector<Eigen::MatrixXd> deltas = detail::mismatch_path(
        train, base, grid, fit, "cross_validate: fold " + std::to_string(fold + 1));

    const Eigen::MatrixXd valid_residuals = valid.y - base.coefficients() * valid.x;
    losses[fold].resize(grid.size());
    l1_norms[fold].resize(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
      double loss = (valid_residuals - deltas[i] * valid.x).squaredNorm() /
                    (2.0 * static_cast<double>(valid.size()));
      l1_norms[fold][i] = deltas[i].lpNorm<1>();
      if (options.include_penalty) loss += grid[i] * l1_norms[fold][i];
      losses[fold][i] = loss;
    }
  }

  std::size_t best = 0;
  double best_sum = losses[0][0] + losses[1][0];
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double sum = losses[0][i] + losses[1][i];
    if (sum < best_sum || (sum == best_sum && grid[i] > grid[best])) {
      best = i;
      best_sum = sum;
    }
  }

  std::vector<std::string> warnings;
  if (d1.x.rows() == d2.x.rows() && d1.x.cols() == d2.x.cols() && d1.x == d2.x && d1.y == d2.y)
    warnings.push_back(
        "fold datasets are identical; cross-validation degenerates to training loss");

  MpmEstimate final_estimate = estimate_mpm(merge(d1, d2), base, grid[best], fit);
  return CvReport{grid,
                  losses[0],
                  losses[1],
                  l1_norms[0],
                  l1_norms[1],
                  options.include_penalty,
                  grid[best],
                  std::move(final_estimate),
                  std::move(warnings)};
}

/// {0} followed by 61 log-spaced points in [1e-6, 1e-2]: the default grid.
inline std::vector<double> default_lambda_grid() {
  std::vector<double> grid{0.0};
  for (int i = 0; i <= 60; ++i)
    grid.push_back(std::pow(10.0, -6.0 + 4.0 * static_cast<double>(i) / 60.0));
  return grid;
}

/// {0, 1e-6, 2e-6, ..., 1e-2}: the arithmetic grid (10001 points).
inline std::vector<double> arithmetic_lambda_grid() {
  std::vector<double> grid{0.0};
  grid.reserve(10001);
  for (int k = 1; k <= 10000; ++k) grid.push_back(1e-6 * static_cast<double>(k));
  return grid;
}

/// End-to-end: windows around t_r from both records, two-fold CV, merged refit.
inline CvReport run_mle_pipeline(const SimulationRecord& record1,
                                 const SimulationRecord& record2, double t_r,
                                 double half_width, const ArxModel& base,
                                 const std::vector<double>& grid, const CvOptions& options = {}) {
  const RegressionDataset d1 =
      build_dataset(record1, extract_window(record1, t_r, half_width), base.order());
  const RegressionDataset d2 =
      build_dataset(record2, extract_window(record2, t_r, half_width), base.order());
  return cross_validate(d1, d2, base, grid, options);
}

}  // namespace mle
