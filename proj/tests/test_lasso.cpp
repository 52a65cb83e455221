#include <catch2/catch_amalgamated.hpp>

#include <mle/lasso.hpp>
#include <mle/rng.hpp>

#include "support/lasso_oracle.hpp"

#include <cmath>
#include <vector>

namespace {

Eigen::MatrixXd random_matrix(int rows, int cols, mle::GaussianStream& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = rng.next();
  return m;
}

mle::LassoProblem single_predictor_problem(double lambda) {
  mle::LassoProblem p;
  p.predictors = Eigen::MatrixXd{{1.0, 2.0, -1.0, 3.0}};
  p.targets = Eigen::VectorXd{{2.0, 1.0, 0.0, 5.0}};
  p.lambda = lambda;
  p.standardize = false;
  return p;
}

}  // namespace

TEST_CASE("soft threshold", "[lasso]") {
  CHECK(mle::soft_threshold(3.0, 1.0) == 2.0);
  CHECK(mle::soft_threshold(-3.0, 1.0) == -2.0);
  CHECK(mle::soft_threshold(0.5, 1.0) == 0.0);
  CHECK(mle::soft_threshold(-0.5, 1.0) == 0.0);
  CHECK(mle::soft_threshold(1.0, 1.0) == 0.0);
  CHECK(mle::soft_threshold(2.0, 0.0) == 2.0);
}

TEST_CASE("single predictor has the closed-form solution", "[lasso]") {
  // x = [1 2 -1 3], y = [2 1 0 5]: x.x/N = 3.75, x.y/N = 4.75,
  // so beta = soft_threshold(4.75, lambda) / 3.75.
  SECTION("lambda = 1") {
    const auto s = mle::lasso_fit(single_predictor_problem(1.0));
    REQUIRE_THAT(s.coefficients[0], Catch::Matchers::WithinAbs(1.0, 1e-12));
    CHECK(s.kkt_residual <= 1e-7);

    // brute-force sanity: no grid point does better than the closed form
    const auto& prob = single_predictor_problem(1.0);
    const double f_star =
        test_support::lasso_objective(prob.predictors, prob.targets, 1.0, s.coefficients);
    for (double b = -0.5; b <= 2.0; b += 1e-4) {
      const Eigen::VectorXd beta{{b}};
      REQUIRE(f_star <=
              test_support::lasso_objective(prob.predictors, prob.targets, 1.0, beta) + 1e-9);
    }
  }
  SECTION("lambda = 0 is the least-squares slope") {
    const auto s = mle::lasso_fit(single_predictor_problem(0.0));
    REQUIRE_THAT(s.coefficients[0], Catch::Matchers::WithinAbs(19.0 / 15.0, 1e-12));
  }
  SECTION("lambda at lambda_max zeroes the fit") {
    const auto prob = single_predictor_problem(4.75);
    REQUIRE(mle::lambda_max(prob.predictors, prob.targets, false) ==
            Catch::Approx(4.75).margin(1e-12));
    const auto s = mle::lasso_fit(prob);
    REQUIRE(s.coefficients[0] == 0.0);
  }
}

TEST_CASE("lambda at or above lambda_max gives an exactly zero fit", "[lasso]") {
  mle::GaussianStream rng(31);
  const Eigen::MatrixXd x = random_matrix(8, 60, rng);
  const Eigen::VectorXd y = random_matrix(1, 60, rng).transpose();

  for (const bool standardize : {false, true}) {
    mle::LassoProblem p;
    p.predictors = x;
    p.targets = y;
    p.standardize = standardize;
    p.lambda = mle::lambda_max(x, y, standardize);
    auto s = mle::lasso_fit(p);
    REQUIRE(s.coefficients.isZero(0.0));
    REQUIRE(s.kkt_residual == 0.0);

    p.lambda *= 0.98;  // just below: something must activate
    s = mle::lasso_fit(p);
    REQUIRE(s.coefficients.cwiseAbs().maxCoeff() > 0.0);
  }
}

TEST_CASE("lambda = 0 matches the normal equations", "[lasso]") {
  mle::GaussianStream rng(77);
  const Eigen::MatrixXd x = random_matrix(8, 100, rng);
  const Eigen::VectorXd y = random_matrix(1, 100, rng).transpose();

  const Eigen::MatrixXd gram = x * x.transpose() / 100.0;
  const Eigen::VectorXd corr = x * y / 100.0;
  const Eigen::VectorXd beta_ls = gram.ldlt().solve(corr);

  for (const bool standardize : {false, true}) {
    mle::LassoProblem p;
    p.predictors = x;
    p.targets = y;
    p.lambda = 0.0;
    p.standardize = standardize;
    const auto s = mle::lasso_fit(p);
    REQUIRE_THAT((s.coefficients - beta_ls).cwiseAbs().maxCoeff(),
                 Catch::Matchers::WithinAbs(0.0, 1e-6));
    REQUIRE_FALSE(s.rank_deficient);
  }
}

TEST_CASE("rank-deficient least squares falls back to the minimum-norm fit", "[lasso]") {
  mle::GaussianStream rng(13);
  Eigen::MatrixXd x = random_matrix(6, 40, rng);
  x.row(5) = x.row(2);  // exact collinearity
  const Eigen::VectorXd y = (x.row(2) * 2.0).transpose();

  mle::LassoProblem p;
  p.predictors = x;
  p.targets = y;
  p.lambda = 0.0;
  p.standardize = false;
  const auto s = mle::lasso_fit(p);
  REQUIRE(s.rank_deficient);
  // fit is exact and the duplicated rows share the weight equally (min norm)
  REQUIRE_THAT((x.transpose() * s.coefficients - y).cwiseAbs().maxCoeff(),
               Catch::Matchers::WithinAbs(0.0, 1e-8));
  REQUIRE_THAT(s.coefficients[2] - s.coefficients[5], Catch::Matchers::WithinAbs(0.0, 1e-8));
}

TEST_CASE("three-feature instance satisfies KKT at lambda_max/2", "[lasso]") {
  mle::GaussianStream rng(5);
  const Eigen::MatrixXd x = random_matrix(3, 40, rng);
  Eigen::VectorXd y(40);
  for (int k = 0; k < 40; ++k) y[k] = 1.5 * x(0, k) - 0.7 * x(2, k) + 0.1 * rng.next();

  mle::LassoProblem p;
  p.predictors = x;
  p.targets = y;
  p.standardize = false;
  p.lambda = mle::lambda_max(x, y, false) / 2.0;
  const auto s = mle::lasso_fit(p);
  REQUIRE(s.kkt_residual <= 1e-7);
  REQUIRE(mle::kkt_residual(x, y, p.lambda, s.coefficients) <= 1e-7);
}

TEST_CASE("solver agrees with the sign-enumeration oracle", "[lasso][oracle]") {
  const double fractions[] = {0.0, 0.05, 0.25, 0.6, 1.1};
  for (int i = 0; i < 50; ++i) {
    mle::GaussianStream rng(1000 + i);
    const int p = 1 + i % 6;
    const int n = 8 + 2 * (i % 12);
    const Eigen::MatrixXd x = random_matrix(p, n, rng);
    Eigen::VectorXd beta_true = Eigen::VectorXd::Zero(p);
    for (int j = 0; j < p; j += 2) beta_true[j] = rng.next();
    Eigen::VectorXd y = x.transpose() * beta_true;
    for (int k = 0; k < n; ++k) y[k] += 0.3 * rng.next();

    const double lambda = fractions[i % 5] * mle::lambda_max(x, y, false);

    mle::LassoProblem prob;
    prob.predictors = x;
    prob.targets = y;
    prob.lambda = lambda;
    prob.standardize = false;
    const auto fit = mle::lasso_fit(prob);
    const auto oracle = test_support::lasso_oracle(x, y, lambda);

    const double f_fit = test_support::lasso_objective(x, y, lambda, fit.coefficients);
    INFO("instance " << i << ": p=" << p << " n=" << n << " lambda=" << lambda);
    REQUIRE_THAT(f_fit - oracle.objective, Catch::Matchers::WithinAbs(0.0, 1e-6));
    REQUIRE(mle::kkt_residual(x, y, lambda, fit.coefficients) <= 1e-7);
  }
}

TEST_CASE("standardized fits solve the rescaled problem", "[lasso]") {
  mle::GaussianStream rng(21);
  Eigen::MatrixXd x = random_matrix(6, 80, rng);
  x.row(0) *= 40.0;  // wildly different feature scales
  x.row(3) *= 0.01;
  const Eigen::VectorXd y = (x.row(0) * 0.02 + x.row(3) * 30.0).transpose();

  const double lambda = 0.05;
  mle::LassoProblem p;
  p.predictors = x;
  p.targets = y;
  p.lambda = lambda;
  p.standardize = true;
  const auto fit = mle::lasso_fit(p);

  // reference: scale the rows to unit RMS by hand and fit unstandardized
  const Eigen::VectorXd rms = (x.rowwise().squaredNorm() / 80.0).cwiseSqrt();
  mle::LassoProblem q;
  q.predictors = rms.cwiseInverse().asDiagonal() * x;
  q.targets = y;
  q.lambda = lambda;
  q.standardize = false;
  const auto ref = mle::lasso_fit(q);

  REQUIRE_THAT((fit.coefficients - rms.cwiseInverse().cwiseProduct(ref.coefficients))
                   .cwiseAbs()
                   .maxCoeff(),
               Catch::Matchers::WithinAbs(0.0, 1e-9));
}

TEST_CASE("zero-variance predictors are pinned at zero", "[lasso]") {
  mle::GaussianStream rng(42);
  Eigen::MatrixXd x = random_matrix(5, 50, rng);
  x.row(2).setZero();
  const Eigen::VectorXd y = (x.row(0) - x.row(4)).transpose();

  for (const bool standardize : {false, true}) {
    mle::LassoProblem p;
    p.predictors = x;
    p.targets = y;
    p.lambda = 0.01;
    p.standardize = standardize;
    const auto s = mle::lasso_fit(p);
    REQUIRE(s.coefficients[2] == 0.0);
    REQUIRE(s.kkt_residual <= 1e-7);
    // the data-level certificate applies to the problem as solved, i.e. unscaled fits
    if (!standardize) REQUIRE(mle::kkt_residual(x, y, p.lambda, s.coefficients) <= 1e-7);
  }
}

TEST_CASE("warm-started paths match cold fits", "[lasso]") {
  mle::GaussianStream rng(8);
  const Eigen::MatrixXd x = random_matrix(12, 80, rng);
  Eigen::VectorXd y = (x.row(1) * 2.0 - x.row(7)).transpose();
  for (int k = 0; k < 80; ++k) y[k] += 0.2 * rng.next();

  const double lmax = mle::lambda_max(x, y, true);
  std::vector<double> grid;
  for (int i = 0; i < 20; ++i) grid.push_back(lmax * std::pow(10.0, -3.0 * i / 19.0));
  grid.push_back(0.0);

  const auto path = mle::lasso_path(x, y, grid);
  REQUIRE(path.size() == grid.size());

  double previous_l1 = 0.0;
  double previous_objective = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    mle::LassoProblem p;
    p.predictors = x;
    p.targets = y;
    p.lambda = grid[i];
    const auto cold = mle::lasso_fit(p);
    CHECK_THAT(path[i].objective_value - cold.objective_value,
               Catch::Matchers::WithinAbs(0.0, 1e-8));

    // descending lambda: the optimal objective shrinks, the l1 norm grows
    const double l1 = path[i].coefficients.lpNorm<1>();
    CHECK(l1 >= previous_l1 - 1e-9);
    CHECK(path[i].objective_value <= previous_objective + 1e-12);
    previous_l1 = l1;
    previous_objective = path[i].objective_value;
  }
}

TEST_CASE("path grids must descend", "[lasso]") {
  mle::GaussianStream rng(3);
  const Eigen::MatrixXd x = random_matrix(3, 20, rng);
  const Eigen::VectorXd y = x.row(0).transpose();
  CHECK_THROWS_AS(mle::lasso_path(x, y, {0.1, 0.2}), std::invalid_argument);
  CHECK_THROWS_AS(mle::lasso_path(x, y, {0.1, 0.1}), std::invalid_argument);
  CHECK_THROWS_AS(mle::lasso_path(x, y, {0.1, -0.1}), std::invalid_argument);
  CHECK_THROWS_AS(mle::lasso_path(x, y, {}), std::invalid_argument);
}

TEST_CASE("exhausted sweep budget raises with the best iterate", "[lasso]") {
  // strongly correlated design and a tiny tolerance: hopeless in few sweeps
  mle::GaussianStream rng(17);
  const Eigen::MatrixXd base = random_matrix(1, 60, rng);
  Eigen::MatrixXd x(30, 60);
  for (int j = 0; j < 30; ++j) x.row(j) = base + 0.01 * random_matrix(1, 60, rng);
  Eigen::VectorXd y = (2.0 * base).transpose();
  for (int k = 0; k < 60; ++k) y[k] += 0.05 * rng.next();

  mle::LassoProblem p;
  p.predictors = x;
  p.targets = y;
  p.lambda = 1e-6 * mle::lambda_max(x, y, true);
  p.tolerance = 1e-16;

  double previous_objective = std::numeric_limits<double>::infinity();
  for (const long sweeps : {1L, 2L, 4L, 8L, 16L}) {
    p.max_sweeps = sweeps;
    try {
      mle::lasso_fit(p);
      FAIL("expected LassoNonConvergence at max_sweeps=" << sweeps);
    } catch (const mle::LassoNonConvergence& e) {
      REQUIRE(e.best.sweeps_used == sweeps);
      REQUIRE(e.best.kkt_residual > p.tolerance);
      // coordinate descent never increases the objective
      REQUIRE(e.best.objective_value <= previous_objective + 1e-12);
      previous_objective = e.best.objective_value;
    }
  }
}

TEST_CASE("fits are deterministic", "[lasso]") {
  mle::GaussianStream rng(4);
  const Eigen::MatrixXd x = random_matrix(10, 70, rng);
  const Eigen::VectorXd y = (x.row(0) - 3.0 * x.row(9)).transpose();
  mle::LassoProblem p;
  p.predictors = x;
  p.targets = y;
  p.lambda = 0.02;
  const auto a = mle::lasso_fit(p);
  const auto b = mle::lasso_fit(p);
  REQUIRE(a.coefficients == b.coefficients);
  REQUIRE(a.objective_value == b.objective_value);
  REQUIRE(a.sweeps_used == b.sweeps_used);
}
