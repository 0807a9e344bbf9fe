#include "hgp/gp_exact.hpp"

#include <cmath>

#include "hgp/errors.hpp"
#include "hgp/rng.hpp"

namespace hgp {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
}

double PredictiveGaussian::log_density(double y) const {
  const double r = y - mean;
  return -0.5 * (kLog2Pi + std::log(variance) + r * r / variance);
}

std::pair<double, double> PredictiveGaussian::interval(double level) const {
  const double z = normal_quantile(0.5 + 0.5 * level);
  const double half = z * std::sqrt(variance);
  return {mean - half, mean + half};
}

ExactGp::ExactGp(KernelSpec kernel, Eigen::MatrixXd inputs, Eigen::VectorXd y)
    : kernel_(std::move(kernel)), inputs_(std::move(inputs)), y_(std::move(y)) {
  if (inputs_.rows() != y_.size())
    throw ConfigError("ExactGp: inputs and targets disagree in length");
  if (y_.size() > 0 && !y_.allFinite())
    throw DataError("ExactGp: non-finite training targets");
  rebuild_cache();
}

void ExactGp::set_params(const Eigen::Ref<const Eigen::VectorXd>& theta) {
  kernel_.set_params(theta);
  rebuild_cache();
}

void ExactGp::rebuild_cache() {
  if (y_.size() == 0) return;
  chol_ = cholesky_jittered(gram(kernel_, inputs_));
  alpha_ = chol_.solve(y_);
}

double ExactGp::log_marginal_likelihood() const {
  if (y_.size() == 0) throw ConfigError("log_marginal_likelihood: empty model");
  const double n = static_cast<double>(y_.size());
  return -0.5 * y_.dot(alpha_) - 0.5 * chol_.log_det() - 0.5 * n * kLog2Pi;
}

double ExactGp::log_marginal_likelihood(Eigen::VectorXd& grad) const {
  const double value = log_marginal_likelihood();
  const int np = kernel_.param_count();
  grad.resize(np);
  // d/d theta_j = 0.5 (alpha^T C alpha - tr(V^{-1} C)), C = dK/d theta_j.
  const Eigen::MatrixXd v_inv = chol_.inverse();
  for (int j = 0; j < np; ++j) {
    const Eigen::MatrixXd c = gram_gradient(kernel_, inputs_, j);
    grad[j] = 0.5 * (alpha_.dot(c * alpha_) - v_inv.cwiseProduct(c).sum());
  }
  return value;
}

OptimizerResult ExactGp::fit(const OptimizerOptions& opts) {
  if (y_.size() == 0) throw ConfigError("fit: empty model");
  ExactGp scratch = *this;
  auto objective = [&scratch](const Eigen::VectorXd& theta, Eigen::VectorXd& grad) {
    scratch.set_params(theta);
    return scratch.log_marginal_likelihood(grad);
  };
  OptimizerResult result = maximize(objective, kernel_.params(), opts);
  set_params(result.arg);
  return result;
}

PredictiveGaussian ExactGp::predict(const Eigen::VectorXd& x_star) const {
  const Eigen::MatrixXd xs = x_star.transpose();
  auto [mean, var] = predict_batch(xs);
  return {mean[0], var[0]};
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> ExactGp::predict_batch(const Eigen::MatrixXd& x_star) const {
  if (x_star.rows() == 0) return {Eigen::VectorXd(), Eigen::VectorXd()};
  const Eigen::VectorXd k_self = gram_diagonal(kernel_, x_star);
  if (y_.size() == 0)
    return {Eigen::VectorXd::Zero(x_star.rows()), k_self};
  const Eigen::MatrixXd k_star = cross_gram(kernel_, inputs_, x_star);
  Eigen::VectorXd mean = k_star.transpose() * alpha_;
  const Eigen::MatrixXd half = chol_.forward(k_star);
  Eigen::VectorXd var = k_self - half.colwise().squaredNorm().transpose();
  // Round-off can push a noiseless interpolation variance barely negative.
  var = var.cwiseMax(1e-15 * k_self.array().abs().maxCoeff());
  return {std::move(mean), std::move(var)};
}

Eigen::VectorXd sample_prior(const KernelSpec& spec,
                             const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                             std::uint64_t seed) {
  const PsdChol chol = cholesky_jittered(gram(spec, inputs));
  Rng rng(seed);
  Eigen::VectorXd z(inputs.rows());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
  return chol.factor() * z;
}

}  // namespace hgp
