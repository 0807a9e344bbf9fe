#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace hgp {

// Covariance primitives. A kernel expression is a sum of these; products and
// other combinators are deliberately unsupported.
enum class KernelKind { SquaredExp, Periodic, WhiteNoise };

struct KernelComponent {
  KernelKind kind;
  // SquaredExp: [log amplitude, log lengthscale_1 .. log lengthscale_d]
  // Periodic:   [log amplitude, log lengthscale]
  // WhiteNoise: [log variance]
  Eigen::VectorXd log_params;
  // Fixed period for Periodic; never part of the optimized parameter vector.
  double period = 0.0;
};

// A sum of covariance primitives over inputs of a fixed dimensionality.
// Hyperparameters live in log space, so positivity is structural. White
// noise is keyed on the sample index, not the input value: it contributes
// only on the diagonal of a training Gram matrix and to self-covariances,
// never across distinct samples.
class KernelSpec {
 public:
  KernelSpec() = default;

  static KernelSpec squared_exp(double amplitude, const Eigen::VectorXd& lengthscales);
  static KernelSpec squared_exp(double amplitude, double lengthscale);
  static KernelSpec periodic(double amplitude, double lengthscale, double period);
  static KernelSpec white_noise(double variance);

  // Sum of two kernels over the same input space.
  KernelSpec operator+(const KernelSpec& other) const;

  int input_dim() const { return input_dim_; }
  int param_count() const;
  const std::vector<KernelComponent>& components() const { return components_; }

  // Flattened log-hyperparameter vector, component order preserved.
  // set_params(params()) round-trips exactly.
  Eigen::VectorXd params() const;
  void set_params(const Eigen::Ref<const Eigen::VectorXd>& theta);

  bool has_white_noise() const;
  double white_noise_variance() const;  // 0 when absent
  KernelSpec without_white_noise() const;

  // Covariance between two inputs; same_sample selects whether the white
  // noise term applies (it does for a point paired with itself).
  double eval(const Eigen::Ref<const Eigen::VectorXd>& u,
              const Eigen::Ref<const Eigen::VectorXd>& v,
              bool same_sample) const;

  std::string describe() const;

 private:
  std::vector<KernelComponent> components_;
  int input_dim_ = 0;
};

// Primitive evaluations (natural-unit hyperparameters).
double eval_squared_exp(double amplitude,
                        const Eigen::Ref<const Eigen::VectorXd>& lengthscales,
                        const Eigen::Ref<const Eigen::VectorXd>& u,
                        const Eigen::Ref<const Eigen::VectorXd>& v);
double eval_periodic(double amplitude, double lengthscale, double period,
                     double t, double t_prime);
double eval_white_noise(double variance, Eigen::Index i, Eigen::Index j);

// Symmetric n x n Gram matrix over rows of `inputs` (n x d). White noise
// lands on the diagonal.
Eigen::MatrixXd gram(const KernelSpec& spec,
                     const Eigen::Ref<const Eigen::MatrixXd>& inputs);

// Cross-covariances between two disjoint sample sets; white noise never
// contributes.
Eigen::MatrixXd cross_gram(const KernelSpec& spec,
                           const Eigen::Ref<const Eigen::MatrixXd>& a,
                           const Eigen::Ref<const Eigen::MatrixXd>& b);

// k(x, x) per row, including white noise.
Eigen::VectorXd gram_diagonal(const KernelSpec& spec,
                              const Eigen::Ref<const Eigen::MatrixXd>& inputs);

// Elementwise derivative of gram() with respect to one flattened
// log-hyperparameter.
Eigen::MatrixXd gram_gradient(const KernelSpec& spec,
                              const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                              int param_index);

// 1-D inputs as an n x 1 matrix.
Eigen::MatrixXd as_inputs(const Eigen::Ref<const Eigen::VectorXd>& values);

}  // namespace hgp
