#pragma once

// Independent reference solver for small lasso instances:
//
//     min over beta of  (1/2N) ||y - X^T beta||^2 + lambda ||beta||_1,
//
// X being features x N.  Enumerates all 3^p sign patterns (zero / + / -);
// for each pattern it solves the smooth stationarity system on the support,
// then evaluates the true objective at that point.  The global minimiser's
// own sign pattern reproduces the minimiser exactly, so the minimum over all
// candidate points equals the global minimum.  Exponential in p: keep p <= 8.
//
// This file deliberately shares no code with the library solver.

#include <Eigen/Dense>

#include <limits>
#include <vector>

namespace test_support {

inline double lasso_objective(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda,
                              const Eigen::VectorXd& beta) {
  const double n = static_cast<double>(x.cols());
  const Eigen::VectorXd residual = y - x.transpose() * beta;
  return residual.squaredNorm() / (2.0 * n) + lambda * beta.lpNorm<1>();
}

struct OracleResult {
  Eigen::VectorXd beta;
  double objective = std::numeric_limits<double>::infinity();
};

inline OracleResult lasso_oracle(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                 double lambda) {
  const int p = static_cast<int>(x.rows());
  const double n = static_cast<double>(x.cols());
  const Eigen::MatrixXd gram = x * x.transpose() / n;
  const Eigen::VectorXd corr = x * y / n;

  OracleResult best;
  best.beta = Eigen::VectorXd::Zero(p);
  best.objective = lasso_objective(x, y, lambda, best.beta);

  long patterns = 1;
  for (int j = 0; j < p; ++j) patterns *= 3;

  for (long code = 1; code < patterns; ++code) {
    // decode base-3 digits: 0 -> zero, 1 -> positive, 2 -> negative
    std::vector<int> support;
    std::vector<double> sign;
    long rest = code;
    for (int j = 0; j < p; ++j) {
      const int digit = static_cast<int>(rest % 3);
      rest /= 3;
      if (digit == 1) {
        support.push_back(j);
        sign.push_back(1.0);
      } else if (digit == 2) {
        support.push_back(j);
        sign.push_back(-1.0);
      }
    }
    const int s = static_cast<int>(support.size());
    Eigen::MatrixXd gss(s, s);
    Eigen::VectorXd rhs(s);
    for (int a = 0; a < s; ++a) {
      rhs[a] = corr[support[a]] - lambda * sign[a];
      for (int b = 0; b < s; ++b) gss(a, b) = gram(support[a], support[b]);
    }
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(gss);
    if (!lu.isInvertible()) continue;  // degenerate pattern; the true one is generic
    const Eigen::VectorXd beta_s = lu.solve(rhs);

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    for (int a = 0; a < s; ++a) beta[support[a]] = beta_s[a];
    const double objective = lasso_objective(x, y, lambda, beta);
    if (objective < best.objective) {
      best.objective = objective;
      best.beta = beta;
    }
  }
  return best;
}

}  // namespace test_support
