#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "hgp/errors.hpp"
#include "hgp/gp_exact.hpp"
#include "hgp/rng.hpp"

using namespace hgp;

namespace {

Eigen::MatrixXd col(const Eigen::VectorXd& v) { return v; }

KernelSpec default_kernel() {
  return KernelSpec::squared_exp(1.0, 0.5) + KernelSpec::white_noise(0.1);
}

// Data drawn from a known generator for recovery and calibration checks.
struct Synthetic {
  Eigen::VectorXd t;
  Eigen::VectorXd y;
};

Synthetic draw(const KernelSpec& spec, int n, double t_span, std::uint64_t seed) {
  Synthetic s;
  s.t.resize(n);
  for (int i = 0; i < n; ++i) s.t[i] = t_span * static_cast<double>(i) / n;
  s.y = sample_prior(spec, col(s.t), derive_seed(seed, 1));
  return s;
}

}  // namespace

TEST_CASE("log marginal likelihood on single-point models") {
  // V = [1]: -0.5 y^2 - 0.5 log 1 - 0.5 log 2pi
  const KernelSpec unit = KernelSpec::white_noise(1.0);
  Eigen::VectorXd t(1), y0(1), y1(1);
  t << 0.0;
  y0 << 0.0;
  y1 << 1.0;
  CHECK(ExactGp(unit, col(t), y0).log_marginal_likelihood() ==
        doctest::Approx(-0.918939).epsilon(1e-6));
  CHECK(ExactGp(unit, col(t), y1).log_marginal_likelihood() ==
        doctest::Approx(-1.418939).epsilon(1e-6));
}

TEST_CASE("marginal likelihood gradient matches finite differences") {
  const KernelSpec spec = KernelSpec::squared_exp(1.0, 0.3) +
                          KernelSpec::periodic(0.8, 1.0, 0.7) + KernelSpec::white_noise(0.2);
  const Synthetic s = draw(spec, 50, 3.0, 99);
  ExactGp gp(spec, col(s.t), s.y);

  Rng rng(123);
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::VectorXd theta = spec.params();
    for (Eigen::Index i = 0; i < theta.size(); ++i) theta[i] += 0.3 * rng.normal();
    gp.set_params(theta);
    Eigen::VectorXd grad;
    gp.log_marginal_likelihood(grad);
    auto value_only = [&gp](const Eigen::VectorXd& th) {
      ExactGp copy = gp;
      copy.set_params(th);
      return copy.log_marginal_likelihood();
    };
    const Eigen::VectorXd fd = finite_difference_gradient(value_only, theta);
    const double scale = std::max(1.0, fd.cwiseAbs().maxCoeff());
    CHECK((grad - fd).cwiseAbs().maxCoeff() / scale < 1e-5);
  }
}

TEST_CASE("prior prediction on an empty model") {
  const KernelSpec spec = default_kernel();
  ExactGp gp(spec, Eigen::MatrixXd(0, 1), Eigen::VectorXd(0));
  const PredictiveGaussian p = gp.predict(Eigen::VectorXd::Constant(1, 2.0));
  CHECK(p.mean == 0.0);
  CHECK(p.variance == doctest::Approx(1.1));
}

TEST_CASE("noiseless interpolation and far-field reversion") {
  const KernelSpec spec = KernelSpec::squared_exp(1.0, 1.0) + KernelSpec::white_noise(0.0);
  Eigen::VectorXd t(1), y(1);
  t << 0.0;
  y << 2.0;
  ExactGp gp(spec, col(t), y);

  const PredictiveGaussian at_zero = gp.predict(Eigen::VectorXd::Zero(1));
  CHECK(at_zero.mean == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(at_zero.variance < 1e-5);  // only jitter-scale variance remains

  const PredictiveGaussian far = gp.predict(Eigen::VectorXd::Constant(1, 100.0));
  CHECK(std::abs(far.mean) < 1e-10);
  CHECK(far.variance == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("posterior variance never exceeds the prior variance") {
  const KernelSpec spec = default_kernel();
  const Synthetic s = draw(spec, 40, 2.0, 5);
  ExactGp gp(spec, col(s.t), s.y);
  const double prior_var = 1.0 + 0.1;
  Rng rng(6);
  for (int i = 0; i < 50; ++i) {
    const double t_star = 4.0 * rng.uniform() - 1.0;
    const PredictiveGaussian p = gp.predict(Eigen::VectorXd::Constant(1, t_star));
    CHECK(p.variance <= prior_var + 1e-9);
    CHECK(p.variance > 0.0);
  }
}

TEST_CASE("predictions are invariant under training permutation") {
  const KernelSpec spec = default_kernel();
  const Synthetic s = draw(spec, 20, 2.0, 7);
  ExactGp gp(spec, col(s.t), s.y);

  Rng rng(8);
  std::vector<int> perm(20);
  for (int i = 0; i < 20; ++i) perm[i] = i;
  for (int i = 19; i > 0; --i)
    std::swap(perm[i], perm[rng.uniform_index(static_cast<std::uint64_t>(i) + 1)]);
  Eigen::VectorXd tp(20), yp(20);
  for (int i = 0; i < 20; ++i) {
    tp[i] = s.t[perm[i]];
    yp[i] = s.y[perm[i]];
  }
  ExactGp gp_perm(spec, col(tp), yp);
  for (double t_star : {-0.3, 0.4, 1.1, 2.5}) {
    const auto a = gp.predict(Eigen::VectorXd::Constant(1, t_star));
    const auto b = gp_perm.predict(Eigen::VectorXd::Constant(1, t_star));
    CHECK(a.mean == doctest::Approx(b.mean).epsilon(1e-10));
    CHECK(a.variance == doctest::Approx(b.variance).epsilon(1e-10));
  }
}

TEST_CASE("predictions are invariant under a common time shift") {
  const KernelSpec spec = KernelSpec::squared_exp(1.0, 0.5) +
                          KernelSpec::periodic(0.6, 1.2, 0.9) + KernelSpec::white_noise(0.05);
  const Synthetic s = draw(spec, 25, 2.0, 9);
  ExactGp gp(spec, col(s.t), s.y);
  const Eigen::VectorXd t_shifted = s.t.array() + 37.5;
  ExactGp gp_shifted(spec, col(t_shifted), s.y);
  for (double t_star : {0.2, 0.9, 1.7}) {
    const auto a = gp.predict(Eigen::VectorXd::Constant(1, t_star));
    const auto b = gp_shifted.predict(Eigen::VectorXd::Constant(1, t_star + 37.5));
    CHECK(a.mean == doctest::Approx(b.mean).epsilon(1e-9));
    CHECK(a.variance == doctest::Approx(b.variance).epsilon(1e-9));
  }
}

TEST_CASE("fit recovers generating hyperparameters within 0.3 in log space") {
  const KernelSpec truth = KernelSpec::squared_exp(1.0, 0.5) + KernelSpec::white_noise(0.01);
  const Synthetic s = draw(truth, 200, 6.0, 11);
  Eigen::VectorXd y = s.y;
  Rng rng(12);
  for (int i = 0; i < 200; ++i) y[i] += 0.1 * rng.normal();

  ExactGp gp(truth, col(s.t), y);  // start from perturbed values
  Eigen::VectorXd start = truth.params();
  start[0] += 0.4;
  start[1] -= 0.4;
  start[2] = std::log(0.05);
  gp.set_params(start);
  gp.fit();
  const Eigen::VectorXd fitted = gp.params();
  const Eigen::VectorXd expected = truth.params();
  CHECK(std::abs(fitted[0] - expected[0]) < 0.3);
  CHECK(std::abs(fitted[1] - expected[1]) < 0.3);
}

TEST_CASE("constant-zero targets shrink the signal amplitude") {
  Eigen::VectorXd t(60), y = Eigen::VectorXd::Zero(60);
  for (int i = 0; i < 60; ++i) t[i] = i / 10.0;
  ExactGp gp(default_kernel(), col(t), y);
  const double h2_before = std::exp(2.0 * gp.params()[0]);
  gp.fit();
  const double h2_after = std::exp(2.0 * gp.params()[0]);
  CHECK(h2_after < h2_before);
}

TEST_CASE("refitting from the fitted point is a fixed point") {
  const Synthetic s = draw(default_kernel(), 60, 3.0, 13);
  ExactGp gp(default_kernel(), col(s.t), s.y);
  const OptimizerResult first = gp.fit();
  const OptimizerResult second = gp.fit();
  CHECK(std::abs(second.value - first.value) <=
        1e-6 * std::max(1.0, std::abs(first.value)));
}

TEST_CASE("fit raises on an empty model") {
  ExactGp gp(default_kernel(), Eigen::MatrixXd(0, 1), Eigen::VectorXd(0));
  CHECK_THROWS_AS(gp.fit(), ConfigError);
}

TEST_CASE("prior samples: determinism and white-noise decorrelation") {
  const KernelSpec wn = KernelSpec::white_noise(1.0);
  Eigen::MatrixXd x(2, 1);
  x << 0.0, 1.0;

  const Eigen::VectorXd a = sample_prior(wn, x, 42);
  const Eigen::VectorXd b = sample_prior(wn, x, 42);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);

  double sum0 = 0.0, sum1 = 0.0, sum00 = 0.0, sum11 = 0.0, sum01 = 0.0;
  const int draws = 10000;
  for (int k = 0; k < draws; ++k) {
    const Eigen::VectorXd d = sample_prior(wn, x, 1000 + k);
    sum0 += d[0];
    sum1 += d[1];
    sum00 += d[0] * d[0];
    sum11 += d[1] * d[1];
    sum01 += d[0] * d[1];
  }
  const double m0 = sum0 / draws, m1 = sum1 / draws;
  const double v0 = sum00 / draws - m0 * m0, v1 = sum11 / draws - m1 * m1;
  const double cov = sum01 / draws - m0 * m1;
  CHECK(std::abs(cov / std::sqrt(v0 * v1)) < 0.1);
}

TEST_CASE("prior sample covariance matches the kernel entrywise") {
  const KernelSpec spec = KernelSpec::squared_exp(1.0, 0.8) + KernelSpec::white_noise(0.2);
  Eigen::MatrixXd x(4, 1);
  x << 0.0, 0.4, 1.0, 2.0;
  const Eigen::MatrixXd k = gram(spec, x);

  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(4, 4);
  const int draws = 10000;
  for (int d = 0; d < draws; ++d) {
    const Eigen::VectorXd f = sample_prior(spec, x, 5000 + d);
    acc += f * f.transpose();
  }
  acc /= draws;
  CHECK((acc - k).cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("held-out NLPD matches the generator's own predictive entropy") {
  // Well-specified model: fit on half of n=2000 points, score the rest, and
  // compare against an oracle carrying the true hyperparameters.
  const KernelSpec truth = KernelSpec::squared_exp(1.0, 0.1) + KernelSpec::white_noise(0.05);
  const Synthetic s = draw(truth, 2000, 7.0, 21);

  Eigen::VectorXd t_train(1000), y_train(1000), t_test(1000), y_test(1000);
  for (int i = 0; i < 2000; ++i) {
    if (i % 2 == 0) {
      t_train[i / 2] = s.t[i];
      y_train[i / 2] = s.y[i];
    } else {
      t_test[i / 2] = s.t[i];
      y_test[i / 2] = s.y[i];
    }
  }

  ExactGp oracle(truth, col(t_train), y_train);
  ExactGp fitted(truth, col(t_train), y_train);
  Eigen::VectorXd start = truth.params();
  start[0] += 0.3;
  start[1] += 0.3;
  start[2] -= 0.5;
  fitted.set_params(start);
  OptimizerOptions opts;
  opts.tol = 1e-5;
  opts.max_iters = 120;
  fitted.fit(opts);

  auto nlpd_of = [&](const ExactGp& gp) {
    const auto [mean, var] = gp.predict_batch(col(t_test));
    double acc = 0.0;
    for (int i = 0; i < 1000; ++i)
      acc += -PredictiveGaussian{mean[i], var[i]}.log_density(y_test[i]);
    return acc / 1000.0;
  };
  CHECK(std::abs(nlpd_of(fitted) - nlpd_of(oracle)) < 0.05);
}
