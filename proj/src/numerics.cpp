#include "hgp/numerics.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "hgp/errors.hpp"

namespace hgp {

PsdChol::PsdChol(Eigen::MatrixXd factor, double jitter)
    : l_(std::move(factor)), jitter_(jitter) {
  log_det_ = 2.0 * l_.diagonal().array().log().sum();
}

Eigen::VectorXd PsdChol::solve(const Eigen::VectorXd& b) const {
  if (b.size() != l_.rows()) throw ConfigError("PsdChol::solve: dimension mismatch");
  Eigen::VectorXd x = l_.triangularView<Eigen::Lower>().solve(b);
  l_.transpose().triangularView<Eigen::Upper>().solveInPlace(x);
  return x;
}

Eigen::MatrixXd PsdChol::solve(const Eigen::MatrixXd& b) const {
  if (b.rows() != l_.rows()) throw ConfigError("PsdChol::solve: dimension mismatch");
  Eigen::MatrixXd x = l_.triangularView<Eigen::Lower>().solve(b);
  l_.transpose().triangularView<Eigen::Upper>().solveInPlace(x);
  return x;
}

Eigen::VectorXd PsdChol::forward(const Eigen::VectorXd& b) const {
  if (b.size() != l_.rows()) throw ConfigError("PsdChol::forward: dimension mismatch");
  return l_.triangularView<Eigen::Lower>().solve(b);
}

Eigen::MatrixXd PsdChol::forward(const Eigen::MatrixXd& b) const {
  if (b.rows() != l_.rows()) throw ConfigError("PsdChol::forward: dimension mismatch");
  return l_.triangularView<Eigen::Lower>().solve(b);
}

double PsdChol::quad_form(const Eigen::VectorXd& b) const {
  return forward(b).squaredNorm();
}

Eigen::MatrixXd PsdChol::inverse() const {
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(l_.rows(), l_.cols());
  return solve(id);
}

PsdChol cholesky_jittered(const Eigen::Ref<const Eigen::MatrixXd>& m) {
  if (m.rows() != m.cols()) throw ConfigError("cholesky_jittered: matrix not square");
  if (!m.allFinite()) throw NumericalError("cholesky_jittered: non-finite entries");

  const Eigen::Index n = m.rows();
  double base = 1e-6 * m.diagonal().mean();
  if (!(base > 0.0)) base = 1e-12;

  double jitter = 0.0;
  for (int attempt = 0; attempt <= 9; ++attempt) {
    Eigen::MatrixXd work = m;
    if (jitter > 0.0) work.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(work);
    if (llt.info() == Eigen::Success)
      return PsdChol(llt.matrixL(), jitter);
    jitter = jitter == 0.0 ? base : 2.0 * jitter;
  }
  std::ostringstream msg;
  msg << "cholesky_jittered: matrix of size " << n
      << " not positive definite after max jitter " << jitter / 2.0
      << " (mean diagonal " << m.diagonal().mean() << ", min diagonal "
      << m.diagonal().minCoeff() << ")";
  throw NumericalError(msg.str());
}

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Evaluates the objective, mapping exceptions and non-finite values to -inf
// so the line search can back away.
double safe_eval(const ObjectiveFn& objective, const Eigen::VectorXd& theta,
                 Eigen::VectorXd& grad) {
  double value;
  try {
    value = objective(theta, grad);
  } catch (const NumericalError&) {
    return kNegInf;
  }
  if (!std::isfinite(value) || !grad.allFinite()) return kNegInf;
  return value;
}

}  // namespace

OptimizerResult maximize(const ObjectiveFn& objective, const Eigen::VectorXd& theta0,
                         const OptimizerOptions& opts) {
  const Eigen::Index dim = theta0.size();
  OptimizerResult result;
  result.arg = theta0;

  Eigen::VectorXd theta = theta0;
  Eigen::VectorXd grad(dim);
  double value = objective(theta, grad);  // theta0 must be evaluable
  if (!std::isfinite(value) || !grad.allFinite()) {
    result.value = value;
    result.aborted = true;
    return result;
  }
  result.value = value;
  result.trace.push_back(value);

  std::vector<Eigen::VectorXd> s_hist, y_hist;
  std::vector<double> rho_hist;
  Eigen::VectorXd prev_theta = theta, prev_grad = grad;

  for (int iter = 0; iter < opts.max_iters; ++iter) {
    const double grad_scale = grad.lpNorm<Eigen::Infinity>();
    if (grad_scale <= 1e-12 * std::max(1.0, std::abs(value))) {
      result.converged = true;
      break;
    }

    // Two-loop recursion on the negated objective; direction is ascent.
    Eigen::VectorXd q = grad;
    const int hist = static_cast<int>(s_hist.size());
    std::vector<double> alpha(hist);
    for (int i = hist - 1; i >= 0; --i) {
      alpha[i] = rho_hist[i] * s_hist[i].dot(q);
      q -= alpha[i] * y_hist[i];
    }
    if (hist > 0) {
      const double gamma =
          s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
      q *= gamma;
    }
    for (int i = 0; i < hist; ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(q);
      q += (alpha[i] - beta) * s_hist[i];
    }
    Eigen::VectorXd direction = q;
    double slope = grad.dot(direction);
    if (!(slope > 0.0)) {  // fall back to steepest ascent
      direction = grad;
      slope = grad.squaredNorm();
    }

    // Backtracking Armijo line search.
    double step = 1.0;
    if (iter == 0) step = std::min(1.0, 1.0 / std::max(1.0, grad_scale));
    constexpr double c1 = 1e-4;
    Eigen::VectorXd trial_grad(dim);
    Eigen::VectorXd trial;
    double trial_value = kNegInf;
    bool accepted = false;
    for (int ls = 0; ls < 50; ++ls) {
      trial = theta + step * direction;
      trial_value = safe_eval(objective, trial, trial_grad);
      if (trial_value >= value + c1 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
      if (step * direction.lpNorm<Eigen::Infinity>() < 1e-16 * (1.0 + theta.lpNorm<Eigen::Infinity>()))
        break;
    }
    if (!accepted) {
      // No admissible step along this direction; treat as converged when the
      // gradient is already small, otherwise report a stall.
      result.converged = grad_scale <= 1e-5 * std::max(1.0, std::abs(value));
      break;
    }

    const double improvement = trial_value - value;
    theta = trial;
    value = trial_value;
    grad = trial_grad;
    result.iterations = iter + 1;
    result.trace.push_back(value);

    Eigen::VectorXd s = theta - prev_theta;
    Eigen::VectorXd yv = prev_grad - grad;  // negated-objective gradient difference
    const double sy = s.dot(yv);
    if (sy > 1e-10 * s.norm() * yv.norm()) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(yv));
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > opts.history) {
        s_hist.erase(s_hist.begin());
        y_hist.erase(y_hist.begin());
        rho_hist.erase(rho_hist.begin());
      }
    }
    prev_theta = theta;
    prev_grad = grad;

    if (improvement < opts.tol * std::max(1.0, std::abs(value))) {
      result.converged = true;
      break;
    }
  }

  result.arg = theta;
  result.value = value;
  return result;
}

Eigen::VectorXd finite_difference_gradient(
    const std::function<double(const Eigen::VectorXd&)>& objective,
    const Eigen::VectorXd& theta, double step) {
  if (!(step > 0.0)) throw ConfigError("finite_difference_gradient: step must be positive");
  Eigen::VectorXd grad(theta.size());
  Eigen::VectorXd work = theta;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    work[i] = theta[i] + step;
    const double up = objective(work);
    work[i] = theta[i] - step;
    const double down = objective(work);
    work[i] = theta[i];
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

double gaussian_kl(const Eigen::Ref<const Eigen::VectorXd>& mean1,
                   const Eigen::Ref<const Eigen::MatrixXd>& cov1,
                   const Eigen::Ref<const Eigen::VectorXd>& mean0,
                   const Eigen::Ref<const Eigen::MatrixXd>& cov0) {
  const Eigen::Index n = mean1.size();
  if (mean0.size() != n || cov1.rows() != n || cov0.rows() != n)
    throw ConfigError("gaussian_kl: dimension mismatch");
  const PsdChol c0 = cholesky_jittered(cov0);
  const PsdChol c1 = cholesky_jittered(cov1);
  const Eigen::MatrixXd cov1_dense = cov1;
  const double trace = c0.solve(cov1_dense).trace();
  const Eigen::VectorXd mean_diff = mean0 - mean1;
  const double quad = c0.quad_form(mean_diff);
  return 0.5 * (trace + quad - static_cast<double>(n) + c0.log_det() - c1.log_det());
}

GaussHermite gauss_hermite(int n) {
  if (n < 1) throw ConfigError("gauss_hermite: need at least one node");
  GaussHermite gh;
  if (n == 1) {
    gh.nodes = Eigen::VectorXd::Zero(1);
    gh.weights = Eigen::VectorXd::Constant(1, std::sqrt(M_PI));
    return gh;
  }
  // Golub-Welsch on the Hermite Jacobi matrix.
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    const double b = std::sqrt(k / 2.0);
    jacobi(k, k - 1) = b;
    jacobi(k - 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(jacobi);
  if (solver.info() != Eigen::Success)
    throw NumericalError("gauss_hermite: eigendecomposition failed");
  gh.nodes = solver.eigenvalues();
  gh.weights = std::sqrt(M_PI) *
               solver.eigenvectors().row(0).transpose().array().square();
  return gh;
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw ConfigError("normal_quantile: p must be in (0,1)");
  // Acklam's rational approximation with one Halley refinement.
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double x;
  if (p < plow) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - plow) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
  const double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void SlidingChol::reset(const Eigen::Ref<const Eigen::MatrixXd>& m) {
  if (m.rows() == 0) {
    buf_.resize(0, 0);
    base_ = 0;
    n_ = 0;
    return;
  }
  const PsdChol chol = cholesky_jittered(m);
  n_ = m.rows();
  base_ = 0;
  buf_ = chol.factor();
}

void SlidingChol::ensure_capacity(Eigen::Index extra) {
  if (base_ + n_ + extra <= buf_.rows()) return;
  const Eigen::Index cap = std::max<Eigen::Index>(2 * (n_ + extra), 64);
  Eigen::MatrixXd next = Eigen::MatrixXd::Zero(cap, cap);
  next.topLeftCorner(n_, n_) = buf_.block(base_, base_, n_, n_);
  buf_.swap(next);
  base_ = 0;
}

void SlidingChol::append(const Eigen::Ref<const Eigen::VectorXd>& cross, double self) {
  if (cross.size() != n_) throw ConfigError("SlidingChol::append: dimension mismatch");
  ensure_capacity(1);
  auto active = buf_.block(base_, base_, n_, n_);
  Eigen::VectorXd row = active.triangularView<Eigen::Lower>().solve(cross);
  double pivot2 = self - row.squaredNorm();
  const double floor = 1e-10 * std::max(std::abs(self), 1.0);
  if (pivot2 < floor) pivot2 = floor;
  buf_.block(base_ + n_, base_, 1, n_) = row.transpose();
  buf_(base_ + n_, base_ + n_) = std::sqrt(pivot2);
  ++n_;
}

void SlidingChol::drop_first() {
  if (n_ == 0) throw ConfigError("SlidingChol::drop_first: empty");
  if (n_ == 1) {
    ++base_;
    n_ = 0;
    return;
  }
  // With L = [[l11, 0], [l21, L22]], the factor of the trailing submatrix is
  // the rank-one update chol(L22 L22^T + l21 l21^T), computed with Givens
  // rotations in O(n^2).
  Eigen::VectorXd x = buf_.block(base_ + 1, base_, n_ - 1, 1);
  ++base_;
  --n_;
  auto l = buf_.block(base_, base_, n_, n_);
  for (Eigen::Index k = 0; k < n_; ++k) {
    const double r = std::hypot(l(k, k), x[k]);
    const double cos_g = l(k, k) / r;
    const double sin_g = x[k] / r;
    l(k, k) = r;
    for (Eigen::Index i = k + 1; i < n_; ++i) {
      const double li = l(i, k);
      l(i, k) = cos_g * li + sin_g * x[i];
      x[i] = cos_g * x[i] - sin_g * li;
    }
  }
}

double SlidingChol::log_det() const {
  return 2.0 * buf_.block(base_, base_, n_, n_).diagonal().array().log().sum();
}

Eigen::VectorXd SlidingChol::solve(const Eigen::VectorXd& b) const {
  if (b.size() != n_) throw ConfigError("SlidingChol::solve: dimension mismatch");
  const auto active = buf_.block(base_, base_, n_, n_);
  Eigen::VectorXd x = active.triangularView<Eigen::Lower>().solve(b);
  active.transpose().triangularView<Eigen::Upper>().solveInPlace(x);
  return x;
}

Eigen::VectorXd SlidingChol::forward(const Eigen::VectorXd& b) const {
  if (b.size() != n_) throw ConfigError("SlidingChol::forward: dimension mismatch");
  return buf_.block(base_, base_, n_, n_).triangularView<Eigen::Lower>().solve(b);
}

double SlidingChol::quad_form(const Eigen::VectorXd& b) const {
  return forward(b).squaredNorm();
}

Eigen::MatrixXd SlidingChol::factor() const {
  return buf_.block(base_, base_, n_, n_).triangularView<Eigen::Lower>();
}

}  // namespace hgp
