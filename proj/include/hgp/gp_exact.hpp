#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <utility>

#include "hgp/kernels.hpp"
#include "hgp/numerics.hpp"

namespace hgp {

// Gaussian predictive for a single point; variance includes observation noise.
struct PredictiveGaussian {
  double mean = 0.0;
  double variance = 1.0;

  double log_density(double y) const;
  // Central interval at the given coverage level.
  std::pair<double, double> interval(double level) const;
};

// Homoscedastic GP regression with a zero prior mean. The kernel carries the
// observation noise as a white-noise component, so V = K_f (white noise on
// the diagonal) and predictions follow the usual conditional Gaussian.
class ExactGp {
 public:
  // inputs: n x d (d = 1 for time series), y: n targets.
  ExactGp(KernelSpec kernel, Eigen::MatrixXd inputs, Eigen::VectorXd y);

  const KernelSpec& kernel() const { return kernel_; }
  Eigen::Index train_size() const { return y_.size(); }
  const Eigen::MatrixXd& inputs() const { return inputs_; }
  const Eigen::VectorXd& targets() const { return y_; }
  double noise_variance() const { return kernel_.white_noise_variance(); }

  Eigen::VectorXd params() const { return kernel_.params(); }
  void set_params(const Eigen::Ref<const Eigen::VectorXd>& theta);

  double log_marginal_likelihood() const;
  double log_marginal_likelihood(Eigen::VectorXd& grad) const;

  // Maximizes the log marginal likelihood over the log-hyperparameters.
  OptimizerResult fit(const OptimizerOptions& opts = {});

  PredictiveGaussian predict(const Eigen::VectorXd& x_star) const;
  // Batched means/variances for rows of x_star.
  std::pair<Eigen::VectorXd, Eigen::VectorXd> predict_batch(const Eigen::MatrixXd& x_star) const;

 private:
  void rebuild_cache();

  KernelSpec kernel_;
  Eigen::MatrixXd inputs_;
  Eigen::VectorXd y_;
  PsdChol chol_;
  Eigen::VectorXd alpha_;
};

// One draw from N(0, K + jitter I) over the rows of `inputs`.
Eigen::VectorXd sample_prior(const KernelSpec& spec,
                             const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                             std::uint64_t seed);

}  // namespace hgp
