#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <utility>
#include <vector>

#include "hgp/kernels.hpp"
#include "hgp/numerics.hpp"

namespace hgp {

// Marginalized variational bound, split into its three summands.
// kl_term stores -KL(q(g) || p(g)) and is therefore non-positive.
struct ElboTerms {
  double data_term = 0.0;
  double trace_term = 0.0;
  double kl_term = 0.0;
  double total = 0.0;
};

// Posterior moments of the two latent processes at one prediction point.
struct LatentPredictive {
  double mean_f = 0.0;
  double var_f = 1.0;
  double mean_g = 0.0;
  double var_g = 0.0;
};

struct Moments {
  double mean = 0.0;
  double variance = 1.0;
};

// Heteroscedastic GP with variational inference. The mean process f has a
// time kernel without white noise; the log-noise process g has its own
// kernel (squared exponential plus white noise) over arbitrary inputs: time
// for the plain heteroscedastic model, lagged sample-size/speed vectors for
// the sample-size-conditioned variant.
//
// Variational state: one unconstrained rho per training point with
// Lambda_ii = logistic(rho_i) / 2, which keeps Lambda_ii in (0, 1/2), plus
// the noise-scale mu0. The bound is
//   F = log N(y | 0, K_f + R) - tr(Sigma)/4 - KL(N(mu, Sigma) || N(mu0 1, K_g))
// with Sigma = (K_g^{-1} + Lambda)^{-1}, mu = mu0 1 + K_g (Lambda - I/2) 1 and
// R_ii = exp(mu_i - Sigma_ii / 2).
class VhgpModel {
 public:
  VhgpModel(KernelSpec kernel_f, KernelSpec kernel_g, Eigen::MatrixXd time_inputs,
            Eigen::MatrixXd noise_inputs, Eigen::VectorXd y, double mu0 = 0.0);

  Eigen::Index train_size() const { return y_.size(); }
  const KernelSpec& kernel_f() const { return kernel_f_; }
  const KernelSpec& kernel_g() const { return kernel_g_; }
  double mu0() const { return mu0_; }
  const Eigen::VectorXd& rho() const { return rho_; }
  const Eigen::VectorXd& targets() const { return y_; }

  // Parameter layout: [theta_f, theta_g, mu0, rho(n)].
  Eigen::Index param_count() const;
  Eigen::VectorXd params() const;
  void set_params(const Eigen::Ref<const Eigen::VectorXd>& theta);

  ElboTerms elbo() const;
  ElboTerms elbo(Eigen::VectorXd& grad) const;

  // Jointly maximizes the bound over all parameters. Warm starts work by
  // constructing the model with the previous solution's parameters.
  OptimizerResult fit(const OptimizerOptions& opts = {});

  LatentPredictive predict_latent(double t_star,
                                  const Eigen::Ref<const Eigen::VectorXd>& z_star) const;
  // Batched variant over rows of t_star / z_star.
  std::vector<LatentPredictive> predict_latent(
      const Eigen::Ref<const Eigen::VectorXd>& t_star,
      const Eigen::Ref<const Eigen::MatrixXd>& z_star) const;

  // Per-point observation variances R_ii implied by the variational state.
  Eigen::VectorXd noise_variances() const;
  // Lambda diagonal (lambda_i in (0, 1/2)).
  Eigen::VectorXd lambda() const;

 private:
  struct Cache;
  const Cache& cache() const;
  void invalidate();

  KernelSpec kernel_f_;
  KernelSpec kernel_g_;
  Eigen::MatrixXd t_;
  Eigen::MatrixXd z_;
  Eigen::VectorXd y_;
  double mu0_ = 0.0;
  Eigen::VectorXd rho_;

  mutable std::shared_ptr<Cache> cache_;
};

// Predictive mean and variance: the noise contribution is the log-normal
// mean of e^{g*}.
Moments predict_moments(const LatentPredictive& lp);

// log q(y*) via Gauss-Hermite quadrature over the latent g*; exact Gaussian
// log-density when var_g is zero.
double predictive_log_density(const LatentPredictive& lp, double y_star, int nodes = 30);

// Monte-Carlo central interval of the predictive distribution.
std::pair<double, double> predictive_interval(const LatentPredictive& lp, double level,
                                              int samples, std::uint64_t seed);

}  // namespace hgp
