#include "hgp/vhgp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <vector>

#include "hgp/errors.hpp"
#include "hgp/rng.hpp"

namespace hgp {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kMaxLogNoise = 600.0;  // exp() guard
}  // namespace

// Everything the bound, its gradient and the predictive equations share for
// a fixed parameter vector.
struct VhgpModel::Cache {
  Eigen::VectorXd lambda;      // logistic(rho) / 2
  Eigen::MatrixXd k_g;
  PsdChol chol_a;              // A = K_g + Lambda^{-1}
  Eigen::MatrixXd sigma;       // (K_g^{-1} + Lambda)^{-1}
  Eigen::MatrixXd u_mat;       // A^{-1} K_g
  Eigen::VectorXd mu;          // mu0 1 + K_g (lambda - 1/2)
  Eigen::VectorXd r;           // exp(mu - diag(Sigma)/2)
  PsdChol chol_v;              // V = K_f + R
  Eigen::VectorXd alpha;       // V^{-1} y
  ElboTerms terms;
};

VhgpModel::VhgpModel(KernelSpec kernel_f, KernelSpec kernel_g, Eigen::MatrixXd time_inputs,
                     Eigen::MatrixXd noise_inputs, Eigen::VectorXd y, double mu0)
    : kernel_f_(std::move(kernel_f)),
      kernel_g_(std::move(kernel_g)),
      t_(std::move(time_inputs)),
      z_(std::move(noise_inputs)),
      y_(std::move(y)),
      mu0_(mu0) {
  const Eigen::Index n = y_.size();
  if (n < 2) throw ConfigError("VhgpModel: need at least two training points");
  if (t_.rows() != n || z_.rows() != n)
    throw ConfigError("VhgpModel: input row counts disagree with targets");
  if (kernel_f_.has_white_noise())
    throw ConfigError("VhgpModel: mean-process kernel must not contain white noise");
  if (!y_.allFinite()) throw DataError("VhgpModel: non-finite training targets");
  rho_ = Eigen::VectorXd::Zero(n);
}

Eigen::Index VhgpModel::param_count() const {
  return kernel_f_.param_count() + kernel_g_.param_count() + 1 + y_.size();
}

Eigen::VectorXd VhgpModel::params() const {
  Eigen::VectorXd theta(param_count());
  const int nf = kernel_f_.param_count();
  const int ng = kernel_g_.param_count();
  theta.head(nf) = kernel_f_.params();
  theta.segment(nf, ng) = kernel_g_.params();
  theta[nf + ng] = mu0_;
  theta.tail(y_.size()) = rho_;
  return theta;
}

void VhgpModel::set_params(const Eigen::Ref<const Eigen::VectorXd>& theta) {
  if (theta.size() != param_count()) throw ConfigError("VhgpModel::set_params: wrong size");
  const int nf = kernel_f_.param_count();
  const int ng = kernel_g_.param_count();
  kernel_f_.set_params(theta.head(nf));
  kernel_g_.set_params(theta.segment(nf, ng));
  mu0_ = theta[nf + ng];
  rho_ = theta.tail(y_.size());
  invalidate();
}

void VhgpModel::invalidate() { cache_.reset(); }

Eigen::VectorXd VhgpModel::lambda() const {
  Eigen::VectorXd l(rho_.size());
  for (Eigen::Index i = 0; i < rho_.size(); ++i) l[i] = 0.5 * logistic(rho_[i]);
  return l;
}

const VhgpModel::Cache& VhgpModel::cache() const {
  if (cache_) return *cache_;
  auto c = std::make_shared<Cache>();
  const Eigen::Index n = y_.size();

  c->lambda = lambda();
  c->k_g = gram(kernel_g_, z_);

  Eigen::MatrixXd a = c->k_g;
  a.diagonal() += c->lambda.cwiseInverse();
  c->chol_a = cholesky_jittered(a);

  // Sigma = K_g - K_g A^{-1} K_g, the stable form of (K_g^{-1} + Lambda)^{-1}.
  const Eigen::MatrixXd t_half = c->chol_a.forward(c->k_g);
  c->sigma = c->k_g - t_half.transpose() * t_half;
  c->u_mat = t_half;
  c->chol_a.factor().transpose().triangularView<Eigen::Upper>().solveInPlace(c->u_mat);

  c->mu = Eigen::VectorXd::Constant(n, mu0_) +
          c->k_g * (c->lambda.array() - 0.5).matrix();

  const Eigen::VectorXd log_r = c->mu - 0.5 * c->sigma.diagonal();
  if (log_r.maxCoeff() > kMaxLogNoise)
    throw NumericalError("vhgp bound: noise variances overflow exp()");
  c->r = log_r.array().exp();

  Eigen::MatrixXd v = gram(kernel_f_, t_);
  v.diagonal() += c->r;
  c->chol_v = cholesky_jittered(v);
  c->alpha = c->chol_v.solve(y_);

  c->terms.data_term =
      -0.5 * y_.dot(c->alpha) - 0.5 * c->chol_v.log_det() - 0.5 * n * kLog2Pi;
  c->terms.trace_term = -0.25 * c->sigma.trace();

  // KL(N(mu, Sigma) || N(mu0 1, K_g)) reduces to a form needing only chol(A):
  //   tr(K_g^{-1} Sigma) = n - tr(A^{-1} K_g)
  //   (mu - mu0 1)^T K_g^{-1} (mu - mu0 1) = u^T K_g u,  u = lambda - 1/2
  //   log|K_g| - log|Sigma| = log|A| + sum_i log lambda_i
  const Eigen::VectorXd u = (c->lambda.array() - 0.5).matrix();
  const double kl = 0.5 * (-c->u_mat.trace() + u.dot(c->k_g * u) + c->chol_a.log_det() +
                           c->lambda.array().log().sum());
  c->terms.kl_term = -kl;
  c->terms.total = c->terms.data_term + c->terms.trace_term + c->terms.kl_term;
  if (!std::isfinite(c->terms.total))
    throw NumericalError("vhgp bound: non-finite total (data " +
                         std::to_string(c->terms.data_term) + ", trace " +
                         std::to_string(c->terms.trace_term) + ", kl " +
                         std::to_string(c->terms.kl_term) + ")");

  cache_ = std::move(c);
  return *cache_;
}

ElboTerms VhgpModel::elbo() const { return cache().terms; }

ElboTerms VhgpModel::elbo(Eigen::VectorXd& grad) const {
  const Cache& c = cache();
  const Eigen::Index n = y_.size();
  const int nf = kernel_f_.param_count();
  const int ng = kernel_g_.param_count();
  grad.resize(param_count());

  const Eigen::MatrixXd v_inv = c.chol_v.inverse();
  // dF/dR_ii through the data term.
  const Eigen::VectorXd d =
      0.5 * (c.alpha.array().square() - v_inv.diagonal().array());
  const Eigen::VectorXd w = d.cwiseProduct(c.r);  // dF/dmu
  const Eigen::VectorXd u = (c.lambda.array() - 0.5).matrix();

  // Mean-process hyperparameters: 0.5 tr((alpha alpha^T - V^{-1}) dK_f).
  for (int j = 0; j < nf; ++j) {
    const Eigen::MatrixXd cj = gram_gradient(kernel_f_, t_, j);
    grad[j] = 0.5 * (c.alpha.dot(cj * c.alpha) - v_inv.cwiseProduct(cj).sum());
  }

  // dF/dSigma is diagonal: the K_g^{-1} from the KL cancels against
  // Sigma^{-1} = K_g^{-1} + Lambda, leaving diag(-w/2 - 1/4 + lambda/2).
  const Eigen::VectorXd g_diag =
      (-0.5 * w.array() - 0.25 + 0.5 * c.lambda.array()).matrix();

  // Noise-process hyperparameters. With U = A^{-1} K_g:
  //   dF = w^T C u - u^T C u / 2 + tr((Q G Q^T - A^{-1}/2) C),  Q = I - U.
  Eigen::MatrixXd q = -c.u_mat;
  q.diagonal().array() += 1.0;
  const Eigen::MatrixXd m_total = q * g_diag.asDiagonal() * q.transpose() -
                                  0.5 * c.chol_a.inverse() + w * u.transpose() -
                                  0.5 * u * u.transpose();
  for (int j = 0; j < ng; ++j) {
    const Eigen::MatrixXd cj = gram_gradient(kernel_g_, z_, j);
    grad[nf + j] = m_total.cwiseProduct(cj).sum();
  }

  grad[nf + ng] = w.sum();  // mu0

  // Variational parameters: chain through lambda(rho).
  const Eigen::MatrixXd sigma2 = c.sigma.cwiseProduct(c.sigma);
  const Eigen::VectorXd dl = c.k_g * (w - u) - sigma2 * g_diag;
  const Eigen::VectorXd dl_drho =
      (c.lambda.array() * (1.0 - 2.0 * c.lambda.array())).matrix();
  grad.tail(n) = dl.cwiseProduct(dl_drho);

  return c.terms;
}

OptimizerResult VhgpModel::fit(const OptimizerOptions& opts) {
  VhgpModel scratch = *this;
  auto objective = [&scratch](const Eigen::VectorXd& theta, Eigen::VectorXd& grad) {
    scratch.set_params(theta);
    return scratch.elbo(grad).total;
  };
  OptimizerResult result = maximize(objective, params(), opts);
  set_params(result.arg);
  return result;
}

Eigen::VectorXd VhgpModel::noise_variances() const { return cache().r; }

LatentPredictive VhgpModel::predict_latent(
    double t_star, const Eigen::Ref<const Eigen::VectorXd>& z_star) const {
  Eigen::VectorXd ts(1);
  ts << t_star;
  const auto out = predict_latent(ts, z_star.transpose());
  return out[0];
}

std::vector<LatentPredictive> VhgpModel::predict_latent(
    const Eigen::Ref<const Eigen::VectorXd>& t_star,
    const Eigen::Ref<const Eigen::MatrixXd>& z_star) const {
  if (z_star.cols() != kernel_g_.input_dim())
    throw ConfigError("predict_latent: noise input dimensionality mismatch");
  if (t_star.size() != z_star.rows())
    throw ConfigError("predict_latent: time/noise input counts disagree");
  const Cache& c = cache();
  const Eigen::Index m = t_star.size();
  std::vector<LatentPredictive> out(m);
  if (m == 0) return out;

  const Eigen::MatrixXd ts = t_star;
  const Eigen::MatrixXd kf_star = cross_gram(kernel_f_, t_, ts);
  const Eigen::VectorXd kf_self = gram_diagonal(kernel_f_, ts);
  const Eigen::MatrixXd kg_star = cross_gram(kernel_g_, z_, z_star);
  const Eigen::VectorXd kg_self = gram_diagonal(kernel_g_, z_star);

  const Eigen::VectorXd mean_f = kf_star.transpose() * c.alpha;
  const Eigen::MatrixXd half_f = c.chol_v.forward(kf_star);
  const Eigen::VectorXd u = (c.lambda.array() - 0.5).matrix();
  const Eigen::VectorXd mean_g =
      (kg_star.transpose() * u).array() + mu0_;
  const Eigen::MatrixXd half_g = c.chol_a.forward(kg_star);

  for (Eigen::Index i = 0; i < m; ++i) {
    LatentPredictive lp;
    lp.mean_f = mean_f[i];
    lp.var_f = std::max(kf_self[i] - half_f.col(i).squaredNorm(), 1e-15 * kf_self[i]);
    lp.mean_g = mean_g[i];
    lp.var_g = std::max(kg_self[i] - half_g.col(i).squaredNorm(), 0.0);
    out[i] = lp;
  }
  return out;
}

Moments predict_moments(const LatentPredictive& lp) {
  Moments m;
  m.mean = lp.mean_f;
  m.variance = lp.var_f + std::exp(lp.mean_g + 0.5 * lp.var_g);
  return m;
}

double predictive_log_density(const LatentPredictive& lp, double y_star, int nodes) {
  if (nodes < 1) throw ConfigError("predictive_log_density: need at least one node");
  const double r = y_star - lp.mean_f;
  if (lp.var_g <= 0.0) {
    const double var = lp.var_f + std::exp(lp.mean_g);
    return -0.5 * (kLog2Pi + std::log(var) + r * r / var);
  }
  thread_local std::map<int, GaussHermite> gh_cache;
  auto it = gh_cache.find(nodes);
  if (it == gh_cache.end()) it = gh_cache.emplace(nodes, gauss_hermite(nodes)).first;
  const GaussHermite& gh = it->second;
  const double scale = std::sqrt(2.0 * lp.var_g);
  double max_term = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd terms(nodes);
  for (int i = 0; i < nodes; ++i) {
    const double g = lp.mean_g + scale * gh.nodes[i];
    const double var = lp.var_f + std::exp(g);
    const double log_pdf = -0.5 * (kLog2Pi + std::log(var) + r * r / var);
    terms[i] = std::log(gh.weights[i] / std::sqrt(M_PI)) + log_pdf;
    max_term = std::max(max_term, terms[i]);
  }
  double acc = 0.0;
  for (int i = 0; i < nodes; ++i) acc += std::exp(terms[i] - max_term);
  return max_term + std::log(acc);
}

std::pair<double, double> predictive_interval(const LatentPredictive& lp, double level,
                                              int samples, std::uint64_t seed) {
  if (!(level > 0.0 && level < 1.0))
    throw ConfigError("predictive_interval: level must be in (0,1)");
  if (samples < 2) throw ConfigError("predictive_interval: need at least two samples");
  Rng rng(seed);
  std::vector<double> draws(samples);
  const double sd_g = std::sqrt(std::max(lp.var_g, 0.0));
  for (int i = 0; i < samples; ++i) {
    const double g = lp.mean_g + sd_g * rng.normal();
    const double sd_y = std::sqrt(lp.var_f + std::exp(g));
    draws[i] = lp.mean_f + sd_y * rng.normal();
  }
  std::sort(draws.begin(), draws.end());
  const double tail = 0.5 * (1.0 - level);
  auto quantile = [&draws](double p) {
    const double pos = p * (draws.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    if (lo + 1 >= draws.size()) return draws.back();
    const double frac = pos - static_cast<double>(lo);
    return draws[lo] * (1.0 - frac) + draws[lo + 1] * frac;
  };
  return {quantile(tail), quantile(1.0 - tail)};
}

}  // namespace hgp
