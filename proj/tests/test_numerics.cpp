#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "hgp/errors.hpp"
#include "hgp/numerics.hpp"
#include "hgp/rng.hpp"

using namespace hgp;

namespace {

Eigen::MatrixXd random_psd(Rng& rng, int n) {
  Eigen::MatrixXd a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = rng.normal();
  return a * a.transpose() + 0.5 * Eigen::MatrixXd::Identity(n, n);
}

}  // namespace

TEST_CASE("cholesky of the identity is the identity with zero log-det") {
  const PsdChol c = cholesky_jittered(Eigen::MatrixXd::Identity(3, 3));
  CHECK(c.jitter() == 0.0);
  CHECK(c.log_det() == 0.0);
  CHECK((c.factor() - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("cholesky of diag(4,9)") {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2, 2);
  m(0, 0) = 4.0;
  m(1, 1) = 9.0;
  const PsdChol c = cholesky_jittered(m);
  CHECK(c.jitter() == 0.0);
  CHECK(c.factor()(0, 0) == doctest::Approx(2.0));
  CHECK(c.factor()(1, 1) == doctest::Approx(3.0));
  CHECK(c.log_det() == doctest::Approx(std::log(36.0)).epsilon(1e-12));
}

TEST_CASE("rank-deficient matrix succeeds only through jitter") {
  Eigen::MatrixXd m(2, 2);
  m << 1.0, 1.0, 1.0, 1.0;
  const PsdChol c = cholesky_jittered(m);
  CHECK(c.jitter() > 0.0);
  Eigen::MatrixXd jittered = m;
  jittered.diagonal().array() += c.jitter();
  const Eigen::MatrixXd recon = c.factor() * c.factor().transpose();
  CHECK((recon - jittered).cwiseAbs().maxCoeff() / jittered.norm() < 1e-8);
}

TEST_CASE("hopeless matrices raise a numerical error") {
  Eigen::MatrixXd m(2, 2);
  m << 1.0, 0.0, 0.0, -5.0;
  CHECK_THROWS_AS(cholesky_jittered(m), NumericalError);
}

TEST_CASE("solve against identity and diagonal systems") {
  const PsdChol id = cholesky_jittered(Eigen::MatrixXd::Identity(3, 3));
  Eigen::VectorXd b(3);
  b << 1.0, -2.0, 0.5;
  CHECK((id.solve(b) - b).cwiseAbs().maxCoeff() == 0.0);

  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2, 2);
  m(0, 0) = 4.0;
  m(1, 1) = 9.0;
  const PsdChol c = cholesky_jittered(m);
  Eigen::VectorXd rhs(2);
  rhs << 4.0, 9.0;
  const Eigen::VectorXd x = c.solve(rhs);
  CHECK(x[0] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(x[1] == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("solve residuals stay below 1e-8 on random PSD systems") {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::MatrixXd m = random_psd(rng, 20);
    const PsdChol c = cholesky_jittered(m);
    Eigen::VectorXd b(20);
    for (int i = 0; i < 20; ++i) b[i] = rng.normal();
    const Eigen::VectorXd x = c.solve(b);
    Eigen::MatrixXd jittered = m;
    jittered.diagonal().array() += c.jitter();
    CHECK((jittered * x - b).norm() / b.norm() < 1e-8);
  }
}

TEST_CASE("solve rejects mismatched dimensions") {
  const PsdChol c = cholesky_jittered(Eigen::MatrixXd::Identity(3, 3));
  const Eigen::VectorXd wrong = Eigen::VectorXd::Zero(4);
  CHECK_THROWS_AS(c.solve(wrong), ConfigError);
}

TEST_CASE("maximize finds the vertex of a 1-d quadratic") {
  auto objective = [](const Eigen::VectorXd& theta, Eigen::VectorXd& grad) {
    grad.resize(1);
    grad[0] = -2.0 * (theta[0] - 3.0);
    return -(theta[0] - 3.0) * (theta[0] - 3.0);
  };
  const OptimizerResult result = maximize(objective, Eigen::VectorXd::Zero(1));
  CHECK(result.converged);
  CHECK(result.arg[0] == doctest::Approx(3.0).epsilon(1e-6));
}

TEST_CASE("maximize finds the center of a 5-d quadratic") {
  Eigen::VectorXd center(5);
  center << 1.0, -2.0, 0.5, 4.0, -0.25;
  auto objective = [&center](const Eigen::VectorXd& theta, Eigen::VectorXd& grad) {
    grad = -2.0 * (theta - center);
    return -(theta - center).squaredNorm();
  };
  const OptimizerResult result = maximize(objective, Eigen::VectorXd::Zero(5));
  CHECK(result.converged);
  CHECK((result.arg - center).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("maximize climbs the negated Rosenbrock to (1,1)") {
  auto objective = [](const Eigen::VectorXd& theta, Eigen::VectorXd& grad) {
    const double x = theta[0], y = theta[1];
    grad.resize(2);
    grad[0] = 2.0 * (1.0 - x) + 400.0 * x * (y - x * x);
    grad[1] = -200.0 * (y - x * x);
    return -((1.0 - x) * (1.0 - x) + 100.0 * (y - x * x) * (y - x * x));
  };
  Eigen::VectorXd theta0(2);
  theta0 << -1.2, 1.0;
  OptimizerOptions opts;
  opts.max_iters = 500;
  opts.tol = 1e-12;
  const OptimizerResult result = maximize(objective, theta0, opts);
  CHECK(result.arg[0] == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(result.arg[1] == doctest::Approx(1.0).epsilon(1e-3));

  // The accepted-objective trace never decreases and never dips below the
  // starting value.
  for (std::size_t i = 1; i < result.trace.size(); ++i)
    CHECK(result.trace[i] >= result.trace[i - 1] - 1e-9);
  Eigen::VectorXd g(2);
  CHECK(result.value >= objective(theta0, g));
}

TEST_CASE("maximize aborts on a non-finite start") {
  auto objective = [](const Eigen::VectorXd& theta, Eigen::VectorXd& grad) {
    grad.resize(1);
    grad[0] = 1.0;
    return theta[0] > 0.5 ? std::numeric_limits<double>::quiet_NaN() : theta[0];
  };
  const OptimizerResult bad = maximize(objective, Eigen::VectorXd::Constant(1, 1.0));
  CHECK(bad.aborted);
}

TEST_CASE("finite differences recover simple derivatives") {
  auto square = [](const Eigen::VectorXd& t) { return t[0] * t[0]; };
  CHECK(finite_difference_gradient(square, Eigen::VectorXd::Constant(1, 1.0))[0] ==
        doctest::Approx(2.0).epsilon(1e-8));

  auto sine = [](const Eigen::VectorXd& t) { return std::sin(t[0]); };
  CHECK(finite_difference_gradient(sine, Eigen::VectorXd::Zero(1))[0] ==
        doctest::Approx(1.0).epsilon(1e-8));

  auto linear = [](const Eigen::VectorXd& t) { return 3.0 * t[0] - 2.0 * t[1]; };
  const Eigen::VectorXd g = finite_difference_gradient(linear, Eigen::VectorXd::Zero(2));
  CHECK(g[0] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(g[1] == doctest::Approx(-2.0).epsilon(1e-12));
}

TEST_CASE("KL of identical Gaussians is zero") {
  Rng rng(7);
  const Eigen::MatrixXd cov = random_psd(rng, 4);
  Eigen::VectorXd mean(4);
  for (int i = 0; i < 4; ++i) mean[i] = rng.normal();
  CHECK(gaussian_kl(mean, cov, mean, cov) == doctest::Approx(0.0).epsilon(1e-10));
}

TEST_CASE("KL matches the hand formula for 1-d Gaussians") {
  Eigen::VectorXd m1(1), m0(1);
  m1 << 1.0;
  m0 << 0.0;
  Eigen::MatrixXd s1(1, 1), s0(1, 1);
  s1 << 2.0;
  s0 << 3.0;
  const double expected = 0.5 * (2.0 / 3.0 + 1.0 / 3.0 - 1.0 + std::log(3.0 / 2.0));
  CHECK(gaussian_kl(m1, s1, m0, s0) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("Gauss-Hermite rules integrate low-order polynomials") {
  for (int n : {1, 5, 20, 30, 50}) {
    const GaussHermite gh = gauss_hermite(n);
    CHECK(gh.weights.sum() == doctest::Approx(std::sqrt(M_PI)).epsilon(1e-12));
    if (n >= 2) {
      // int x^2 e^{-x^2} dx = sqrt(pi)/2
      const double second = (gh.weights.array() * gh.nodes.array().square()).sum();
      CHECK(second == doctest::Approx(std::sqrt(M_PI) / 2.0).epsilon(1e-10));
    }
  }
}

TEST_CASE("normal quantile hits reference values") {
  CHECK(normal_quantile(0.5) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959963985).epsilon(1e-8));
  CHECK(normal_quantile(0.025) == doctest::Approx(-1.959963985).epsilon(1e-8));
  CHECK(normal_quantile(0.841344746) == doctest::Approx(1.0).epsilon(1e-7));
}

TEST_CASE("sliding Cholesky tracks a moving window") {
  Rng rng(13);
  const int total = 40;
  Eigen::MatrixXd big = random_psd(rng, total);

  SlidingChol chol;
  int lo = 0, hi = 12;
  chol.reset(big.block(lo, lo, hi - lo, hi - lo));
  for (int step = 0; step < 20; ++step) {
    // Append one point, then drop one, as the rolling window does.
    const int n = hi - lo;
    const Eigen::VectorXd cross = big.block(lo, hi, n, 1);
    chol.append(cross, big(hi, hi));
    ++hi;
    chol.drop_first();
    ++lo;

    const Eigen::MatrixXd ref = big.block(lo, lo, hi - lo, hi - lo);
    const PsdChol fresh = cholesky_jittered(ref);
    CHECK((chol.factor() - fresh.factor()).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(chol.log_det() == doctest::Approx(fresh.log_det()).epsilon(1e-8));

    Eigen::VectorXd b(hi - lo);
    for (int i = 0; i < hi - lo; ++i) b[i] = rng.normal();
    CHECK((chol.solve(b) - fresh.solve(b)).cwiseAbs().maxCoeff() < 1e-7);
  }
}

TEST_CASE("sliding Cholesky shrinks to empty and grows back") {
  SlidingChol chol;
  chol.reset(Eigen::MatrixXd::Identity(2, 2));
  chol.drop_first();
  chol.drop_first();
  CHECK(chol.size() == 0);
  chol.append(Eigen::VectorXd(), 4.0);
  CHECK(chol.size() == 1);
  CHECK(chol.factor()(0, 0) == doctest::Approx(2.0));
}
