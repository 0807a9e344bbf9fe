#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "hgp/errors.hpp"
#include "hgp/kernels.hpp"
#include "hgp/numerics.hpp"
#include "hgp/rng.hpp"

using namespace hgp;

namespace {

Eigen::VectorXd vec1(double v) {
  Eigen::VectorXd x(1);
  x << v;
  return x;
}

// Random sum kernel over d-dimensional inputs, for property tests.
KernelSpec random_spec(Rng& rng, int dim) {
  KernelSpec spec = KernelSpec::squared_exp(
      0.3 + rng.uniform(), Eigen::VectorXd::Constant(dim, 0.2 + rng.uniform()).eval());
  if (dim == 1 && rng.uniform() < 0.5)
    spec = spec + KernelSpec::periodic(0.3 + rng.uniform(), 0.3 + rng.uniform(),
                                       0.5 + 2.0 * rng.uniform());
  if (rng.uniform() < 0.8) spec = spec + KernelSpec::white_noise(0.01 + 0.2 * rng.uniform());
  return spec;
}

Eigen::MatrixXd random_inputs(Rng& rng, int n, int dim) {
  Eigen::MatrixXd x(n, dim);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < dim; ++j) x(i, j) = 3.0 * (2.0 * rng.uniform() - 1.0);
  return x;
}

}  // namespace

TEST_CASE("squared exponential point evaluations") {
  CHECK(eval_squared_exp(1.0, vec1(1.0), vec1(0.0), vec1(0.0)) == doctest::Approx(1.0));
  CHECK(eval_squared_exp(1.0, vec1(1.0), vec1(1.0), vec1(0.0)) ==
        doctest::Approx(0.606531).epsilon(1e-5));
  CHECK(eval_squared_exp(2.0, vec1(2.0), vec1(2.0), vec1(0.0)) ==
        doctest::Approx(2.426123).epsilon(1e-5));
  // ARD form: squared distance sums over dimensions with per-dimension scales.
  Eigen::VectorXd ls(2);
  ls << 1.0, 2.0;
  Eigen::VectorXd u(2), v(2);
  u << 1.0, 2.0;
  v << 0.0, 0.0;
  CHECK(eval_squared_exp(1.0, ls, u, v) == doctest::Approx(std::exp(-0.5 * (1.0 + 1.0))));
}

TEST_CASE("periodic point evaluations") {
  CHECK(eval_periodic(3.0, 0.7, 5.0, 2.25, 2.25) == doctest::Approx(9.0));
  CHECK(eval_periodic(1.0, 1.0, 2.0, 2.0, 0.0) == doctest::Approx(1.0));
  CHECK(eval_periodic(1.0, 1.0, 2.0, 1.0, 0.0) == doctest::Approx(0.606531).epsilon(1e-5));
}

TEST_CASE("white noise point evaluations") {
  CHECK(eval_white_noise(0.5, 3, 3) == 0.5);
  CHECK(eval_white_noise(0.5, 3, 4) == 0.0);
  CHECK(eval_white_noise(0.0, 2, 2) == 0.0);
}

TEST_CASE("gram of SE plus WN on two points") {
  const KernelSpec spec = KernelSpec::squared_exp(1.0, 1.0) + KernelSpec::white_noise(0.1);
  Eigen::MatrixXd x(2, 1);
  x << 0.0, 1.0;
  const Eigen::MatrixXd k = gram(spec, x);
  CHECK(k(0, 0) == doctest::Approx(1.1).epsilon(1e-12));
  CHECK(k(1, 1) == doctest::Approx(1.1).epsilon(1e-12));
  CHECK(k(0, 1) == doctest::Approx(0.606531).epsilon(1e-5));
  CHECK(k(1, 0) == k(0, 1));
}

TEST_CASE("gram of a single input is the self covariance") {
  const KernelSpec spec = KernelSpec::squared_exp(2.0, 0.5) + KernelSpec::white_noise(0.3);
  Eigen::MatrixXd x(1, 1);
  x << 1.7;
  const Eigen::MatrixXd k = gram(spec, x);
  CHECK(k.rows() == 1);
  CHECK(k(0, 0) == doctest::Approx(4.0 + 0.3));
}

TEST_CASE("permuting inputs permutes the gram consistently") {
  Rng rng(11);
  const KernelSpec spec = random_spec(rng, 1);
  const Eigen::MatrixXd x = random_inputs(rng, 6, 1);
  Eigen::MatrixXd xp(6, 1);
  const int perm[6] = {3, 1, 5, 0, 2, 4};
  for (int i = 0; i < 6; ++i) xp.row(i) = x.row(perm[i]);
  const Eigen::MatrixXd k = gram(spec, x);
  const Eigen::MatrixXd kp = gram(spec, xp);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j)
      CHECK(kp(i, j) == doctest::Approx(k(perm[i], perm[j])).epsilon(1e-12));
}

TEST_CASE("dimension mismatch raises a configuration error") {
  const KernelSpec spec = KernelSpec::squared_exp(1.0, 1.0);
  CHECK_THROWS_AS(gram(spec, Eigen::MatrixXd::Zero(3, 2)), ConfigError);
  CHECK_THROWS_AS(gram_gradient(spec, Eigen::MatrixXd::Zero(3, 1), 5), ConfigError);
}

TEST_CASE("analytic gradient identities") {
  Rng rng(5);
  const Eigen::MatrixXd x = random_inputs(rng, 5, 1);

  const KernelSpec se = KernelSpec::squared_exp(1.3, 0.8);
  const Eigen::MatrixXd k = gram(se, x);
  const Eigen::MatrixXd damp = gram_gradient(se, x, 0);
  CHECK((damp - 2.0 * k).cwiseAbs().maxCoeff() < 1e-12);

  const KernelSpec wn = KernelSpec::white_noise(0.35);
  const Eigen::MatrixXd dwn = gram_gradient(wn, x, 0);
  CHECK((dwn - 0.35 * Eigen::MatrixXd::Identity(5, 5)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("gram gradients match central finite differences") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const int dim = trial % 3 == 0 ? 2 : 1;
    KernelSpec spec = random_spec(rng, dim);
    const Eigen::MatrixXd x = random_inputs(rng, 6, dim);
    const Eigen::VectorXd theta = spec.params();
    for (int j = 0; j < spec.param_count(); ++j) {
      const double step = 1e-5;
      Eigen::VectorXd up = theta, down = theta;
      up[j] += step;
      down[j] -= step;
      KernelSpec s_up = spec, s_down = spec;
      s_up.set_params(up);
      s_down.set_params(down);
      const Eigen::MatrixXd fd = (gram(s_up, x) - gram(s_down, x)) / (2.0 * step);
      const Eigen::MatrixXd an = gram_gradient(spec, x, j);
      const double scale = std::max(1.0, an.cwiseAbs().maxCoeff());
      CHECK((an - fd).cwiseAbs().maxCoeff() / scale < 1e-5);
    }
  }
}

TEST_CASE("sum kernels factor into elementwise sums, exactly") {
  Rng rng(23);
  const KernelSpec a = KernelSpec::squared_exp(1.1, 0.6);
  const KernelSpec b = KernelSpec::periodic(0.7, 0.9, 2.0);
  const Eigen::MatrixXd x = random_inputs(rng, 8, 1);
  const Eigen::MatrixXd k_sum = gram(a + b, x);
  const Eigen::MatrixXd k_parts = gram(a, x) + gram(b, x);
  CHECK((k_sum - k_parts).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("stationarity under a common time shift") {
  Rng rng(29);
  for (int trial = 0; trial < 5; ++trial) {
    const KernelSpec spec = random_spec(rng, 1);
    const Eigen::MatrixXd x = random_inputs(rng, 7, 1);
    const Eigen::MatrixXd shifted = x.array() + 13.25;
    CHECK((gram(spec, x) - gram(spec, shifted)).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("jittered Cholesky succeeds on 100 random sum-kernel grams") {
  Rng rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    const int dim = 1 + static_cast<int>(rng.uniform_index(3));
    const KernelSpec spec = random_spec(rng, dim);
    const int n = 2 + static_cast<int>(rng.uniform_index(20));
    const Eigen::MatrixXd x = random_inputs(rng, n, dim);
    CHECK_NOTHROW(cholesky_jittered(gram(spec, x)));
  }
}

TEST_CASE("hyperparameter vector round-trips exactly") {
  Rng rng(37);
  for (int trial = 0; trial < 10; ++trial) {
    KernelSpec spec = random_spec(rng, 1 + static_cast<int>(rng.uniform_index(2)));
    const Eigen::VectorXd theta = spec.params();
    spec.set_params(theta);
    const Eigen::VectorXd back = spec.params();
    REQUIRE(back.size() == theta.size());
    CHECK((back - theta).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("periodic covariance is exact at integer multiples of the period") {
  const KernelSpec spec = KernelSpec::periodic(1.4, 0.8, 7.0);
  Eigen::MatrixXd x(2, 1);
  x << 0.25, 0.25 + 21.0;
  const Eigen::MatrixXd k = gram(spec, x);
  CHECK(k(0, 1) == doctest::Approx(1.4 * 1.4).epsilon(1e-9));
}
