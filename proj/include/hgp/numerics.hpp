#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

namespace hgp {

// Lower-triangular Cholesky factor of (M + jitter * I), with the jitter that
// was actually applied and the log-determinant of the jittered matrix.
class PsdChol {
 public:
  PsdChol() = default;
  PsdChol(Eigen::MatrixXd factor, double jitter);

  const Eigen::MatrixXd& factor() const { return l_; }
  double jitter() const { return jitter_; }
  double log_det() const { return log_det_; }
  Eigen::Index size() const { return l_.rows(); }

  // (M + jitter I)^{-1} b
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  Eigen::MatrixXd solve(const Eigen::MatrixXd& b) const;
  // L^{-1} b
  Eigen::VectorXd forward(const Eigen::VectorXd& b) const;
  Eigen::MatrixXd forward(const Eigen::MatrixXd& b) const;
  // b^T (M + jitter I)^{-1} b
  double quad_form(const Eigen::VectorXd& b) const;
  Eigen::MatrixXd inverse() const;

 private:
  Eigen::MatrixXd l_;
  double jitter_ = 0.0;
  double log_det_ = 0.0;
};

// Factorizes M, retrying with jitter 1e-6 * mean(diag) doubled up to 8 times
// on failure. Throws NumericalError when the matrix resists all retries.
PsdChol cholesky_jittered(const Eigen::Ref<const Eigen::MatrixXd>& m);

struct OptimizerOptions {
  int max_iters = 200;
  double tol = 1e-6;   // relative objective improvement
  int history = 10;    // L-BFGS memory
};

struct OptimizerResult {
  Eigen::VectorXd arg;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
  // Non-finite objective or gradient forced a stop at the best point so far.
  bool aborted = false;
  std::vector<double> trace;  // accepted objective values, non-decreasing
};

// Objective callback: returns the value at theta and fills grad (same size).
using ObjectiveFn = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

// Quasi-Newton (L-BFGS) ascent with backtracking line search. Deterministic
// given theta0. Stops on relative improvement < tol or max_iters.
OptimizerResult maximize(const ObjectiveFn& objective, const Eigen::VectorXd& theta0,
                         const OptimizerOptions& opts = {});

// Central finite differences, one coordinate at a time.
Eigen::VectorXd finite_difference_gradient(
    const std::function<double(const Eigen::VectorXd&)>& objective,
    const Eigen::VectorXd& theta, double step = 1e-5);

// KL(N(mean1, cov1) || N(mean0, cov0)) in closed form.
double gaussian_kl(const Eigen::Ref<const Eigen::VectorXd>& mean1,
                   const Eigen::Ref<const Eigen::MatrixXd>& cov1,
                   const Eigen::Ref<const Eigen::VectorXd>& mean0,
                   const Eigen::Ref<const Eigen::MatrixXd>& cov0);

// Nodes and weights for integrals of the form int f(x) e^{-x^2} dx.
struct GaussHermite {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
};
GaussHermite gauss_hermite(int n);

// Inverse standard normal CDF.
double normal_quantile(double p);

double logistic(double x);

// Cholesky factor of a kernel matrix over an ordered point window, maintained
// under append-at-end and drop-at-front in O(n^2) per operation. Backs the
// rolling forecast so each 5-minute step avoids a full refactorization.
class SlidingChol {
 public:
  SlidingChol() = default;

  void reset(const Eigen::Ref<const Eigen::MatrixXd>& m);
  // Adds a point given its covariances against the current window and itself.
  void append(const Eigen::Ref<const Eigen::VectorXd>& cross, double self);
  void drop_first();

  Eigen::Index size() const { return n_; }
  double log_det() const;
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  Eigen::VectorXd forward(const Eigen::VectorXd& b) const;
  double quad_form(const Eigen::VectorXd& b) const;
  Eigen::MatrixXd factor() const;  // copy of the active lower-triangular block

 private:
  void ensure_capacity(Eigen::Index extra);
  Eigen::MatrixXd buf_;
  Eigen::Index base_ = 0;
  Eigen::Index n_ = 0;
};

}  // namespace hgp
