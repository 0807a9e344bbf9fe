#include "hgp/kernels.hpp"

#include <cmath>
#include <sstream>

#include "hgp/errors.hpp"

namespace hgp {

namespace {

int component_param_count(const KernelComponent& c) {
  return static_cast<int>(c.log_params.size());
}

}  // namespace

KernelSpec KernelSpec::squared_exp(double amplitude, const Eigen::VectorXd& lengthscales) {
  if (amplitude <= 0.0) throw ConfigError("squared_exp: amplitude must be positive");
  if (lengthscales.size() == 0 || (lengthscales.array() <= 0.0).any())
    throw ConfigError("squared_exp: lengthscales must be positive");
  KernelSpec spec;
  spec.input_dim_ = static_cast<int>(lengthscales.size());
  KernelComponent c;
  c.kind = KernelKind::SquaredExp;
  c.log_params.resize(1 + lengthscales.size());
  c.log_params[0] = std::log(amplitude);
  c.log_params.tail(lengthscales.size()) = lengthscales.array().log().matrix();
  spec.components_.push_back(std::move(c));
  return spec;
}

KernelSpec KernelSpec::squared_exp(double amplitude, double lengthscale) {
  Eigen::VectorXd l(1);
  l << lengthscale;
  return squared_exp(amplitude, l);
}

KernelSpec KernelSpec::periodic(double amplitude, double lengthscale, double period) {
  if (amplitude <= 0.0 || lengthscale <= 0.0)
    throw ConfigError("periodic: amplitude and lengthscale must be positive");
  if (period <= 0.0) throw ConfigError("periodic: period must be positive");
  KernelSpec spec;
  spec.input_dim_ = 1;
  KernelComponent c;
  c.kind = KernelKind::Periodic;
  c.log_params.resize(2);
  c.log_params << std::log(amplitude), std::log(lengthscale);
  c.period = period;
  spec.components_.push_back(std::move(c));
  return spec;
}

KernelSpec KernelSpec::white_noise(double variance) {
  if (variance < 0.0) throw ConfigError("white_noise: variance must be non-negative");
  KernelSpec spec;
  spec.input_dim_ = 1;
  KernelComponent c;
  c.kind = KernelKind::WhiteNoise;
  c.log_params.resize(1);
  // log of zero variance is -inf; exp() restores 0 exactly.
  c.log_params[0] = std::log(variance);
  spec.components_.push_back(std::move(c));
  return spec;
}

KernelSpec KernelSpec::operator+(const KernelSpec& other) const {
  KernelSpec out = *this;
  // White noise is dimension-agnostic; anything else must agree.
  const bool this_wn_only = components_.size() == 1 && components_[0].kind == KernelKind::WhiteNoise;
  const bool other_wn_only =
      other.components_.size() == 1 && other.components_[0].kind == KernelKind::WhiteNoise;
  if (!this_wn_only && !other_wn_only && input_dim_ != other.input_dim_)
    throw ConfigError("kernel sum: input dimensionality mismatch");
  out.input_dim_ = this_wn_only ? other.input_dim_ : input_dim_;
  out.components_.insert(out.components_.end(), other.components_.begin(),
                         other.components_.end());
  return out;
}

int KernelSpec::param_count() const {
  int n = 0;
  for (const auto& c : components_) n += component_param_count(c);
  return n;
}

Eigen::VectorXd KernelSpec::params() const {
  Eigen::VectorXd theta(param_count());
  int at = 0;
  for (const auto& c : components_) {
    theta.segment(at, c.log_params.size()) = c.log_params;
    at += static_cast<int>(c.log_params.size());
  }
  return theta;
}

void KernelSpec::set_params(const Eigen::Ref<const Eigen::VectorXd>& theta) {
  if (theta.size() != param_count())
    throw ConfigError("kernel set_params: expected " + std::to_string(param_count()) +
                      " parameters, got " + std::to_string(theta.size()));
  int at = 0;
  for (auto& c : components_) {
    c.log_params = theta.segment(at, c.log_params.size());
    at += static_cast<int>(c.log_params.size());
  }
}

bool KernelSpec::has_white_noise() const {
  for (const auto& c : components_)
    if (c.kind == KernelKind::WhiteNoise) return true;
  return false;
}

double KernelSpec::white_noise_variance() const {
  double total = 0.0;
  for (const auto& c : components_)
    if (c.kind == KernelKind::WhiteNoise) total += std::exp(c.log_params[0]);
  return total;
}

KernelSpec KernelSpec::without_white_noise() const {
  KernelSpec out;
  out.input_dim_ = input_dim_;
  for (const auto& c : components_)
    if (c.kind != KernelKind::WhiteNoise) out.components_.push_back(c);
  return out;
}

double eval_squared_exp(double amplitude,
                        const Eigen::Ref<const Eigen::VectorXd>& lengthscales,
                        const Eigen::Ref<const Eigen::VectorXd>& u,
                        const Eigen::Ref<const Eigen::VectorXd>& v) {
  const double z = ((u - v).array() / lengthscales.array()).square().sum();
  return amplitude * amplitude * std::exp(-0.5 * z);
}

double eval_periodic(double amplitude, double lengthscale, double period,
                     double t, double t_prime) {
  const double s = std::sin(M_PI * (t - t_prime) / period);
  return amplitude * amplitude * std::exp(-0.5 * s * s / (lengthscale * lengthscale));
}

double eval_white_noise(double variance, Eigen::Index i, Eigen::Index j) {
  return i == j ? variance : 0.0;
}

double KernelSpec::eval(const Eigen::Ref<const Eigen::VectorXd>& u,
                        const Eigen::Ref<const Eigen::VectorXd>& v,
                        bool same_sample) const {
  double k = 0.0;
  for (const auto& c : components_) {
    switch (c.kind) {
      case KernelKind::SquaredExp:
        k += eval_squared_exp(
            std::exp(c.log_params[0]),
            c.log_params.tail(c.log_params.size() - 1).array().exp().matrix(), u, v);
        break;
      case KernelKind::Periodic:
        k += eval_periodic(std::exp(c.log_params[0]), std::exp(c.log_params[1]), c.period,
                           u[0], v[0]);
        break;
      case KernelKind::WhiteNoise:
        if (same_sample) k += std::exp(c.log_params[0]);
        break;
    }
  }
  return k;
}

namespace {

void check_dims(const KernelSpec& spec, const Eigen::Ref<const Eigen::MatrixXd>& inputs) {
  if (inputs.cols() != spec.input_dim())
    throw ConfigError("gram: inputs have dimension " + std::to_string(inputs.cols()) +
                      ", kernel expects " + std::to_string(spec.input_dim()));
}

// Adds one component's covariances to `k`. Rows of `a` and `b` may alias
// (symmetric case); white noise is handled by the callers.
void accumulate_component(const KernelComponent& c,
                          const Eigen::Ref<const Eigen::MatrixXd>& a,
                          const Eigen::Ref<const Eigen::MatrixXd>& b,
                          Eigen::MatrixXd& k) {
  const Eigen::Index n = a.rows(), m = b.rows();
  switch (c.kind) {
    case KernelKind::SquaredExp: {
      const double h2 = std::exp(2.0 * c.log_params[0]);
      const Eigen::ArrayXd inv_l =
          (-c.log_params.tail(c.log_params.size() - 1)).array().exp();
      // Scale inputs once, then use the expanded squared-distance form.
      const Eigen::MatrixXd as = (a.array().rowwise() * inv_l.transpose()).matrix();
      const Eigen::MatrixXd bs = (b.array().rowwise() * inv_l.transpose()).matrix();
      const Eigen::VectorXd an = as.rowwise().squaredNorm();
      const Eigen::VectorXd bn = bs.rowwise().squaredNorm();
      Eigen::MatrixXd sq = -2.0 * as * bs.transpose();
      sq.colwise() += an;
      sq.rowwise() += bn.transpose();
      k.noalias() += h2 * (-0.5 * sq.array().max(0.0)).exp().matrix();
      break;
    }
    case KernelKind::Periodic: {
      const double h2 = std::exp(2.0 * c.log_params[0]);
      const double inv_2l2 = 0.5 * std::exp(-2.0 * c.log_params[1]);
      const double w = M_PI / c.period;
      for (Eigen::Index j = 0; j < m; ++j)
        for (Eigen::Index i = 0; i < n; ++i) {
          const double s = std::sin(w * (a(i, 0) - b(j, 0)));
          k(i, j) += h2 * std::exp(-inv_2l2 * s * s);
        }
      break;
    }
    case KernelKind::WhiteNoise:
      break;
  }
}

}  // namespace

Eigen::MatrixXd gram(const KernelSpec& spec,
                     const Eigen::Ref<const Eigen::MatrixXd>& inputs) {
  check_dims(spec, inputs);
  const Eigen::Index n = inputs.rows();
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n, n);
  for (const auto& c : spec.components()) {
    if (c.kind == KernelKind::WhiteNoise) {
      k.diagonal().array() += std::exp(c.log_params[0]);
      continue;
    }
    // Per-component symmetrization keeps sum kernels exactly additive and
    // irons out round-off from the expanded-distance form.
    Eigen::MatrixXd part = Eigen::MatrixXd::Zero(n, n);
    accumulate_component(c, inputs, inputs, part);
    k += 0.5 * (part + part.transpose()).eval();
  }
  return k;
}

Eigen::MatrixXd cross_gram(const KernelSpec& spec,
                           const Eigen::Ref<const Eigen::MatrixXd>& a,
                           const Eigen::Ref<const Eigen::MatrixXd>& b) {
  check_dims(spec, a);
  check_dims(spec, b);
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(a.rows(), b.rows());
  for (const auto& c : spec.components())
    accumulate_component(c, a, b, k);
  return k;
}

Eigen::VectorXd gram_diagonal(const KernelSpec& spec,
                              const Eigen::Ref<const Eigen::MatrixXd>& inputs) {
  check_dims(spec, inputs);
  Eigen::VectorXd d = Eigen::VectorXd::Zero(inputs.rows());
  for (const auto& c : spec.components()) {
    switch (c.kind) {
      case KernelKind::SquaredExp:
      case KernelKind::Periodic:
        d.array() += std::exp(2.0 * c.log_params[0]);
        break;
      case KernelKind::WhiteNoise:
        d.array() += std::exp(c.log_params[0]);
        break;
    }
  }
  return d;
}

Eigen::MatrixXd gram_gradient(const KernelSpec& spec,
                              const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                              int param_index) {
  check_dims(spec, inputs);
  if (param_index < 0 || param_index >= spec.param_count())
    throw ConfigError("gram_gradient: parameter index " + std::to_string(param_index) +
                      " out of range");
  const Eigen::Index n = inputs.rows();

  int at = 0;
  for (const auto& c : spec.components()) {
    const int np = static_cast<int>(c.log_params.size());
    if (param_index >= at + np) {
      at += np;
      continue;
    }
    const int local = param_index - at;
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
    switch (c.kind) {
      case KernelKind::SquaredExp: {
        Eigen::MatrixXd kc = Eigen::MatrixXd::Zero(n, n);
        accumulate_component(c, inputs, inputs, kc);
        if (local == 0) {
          d = 2.0 * kc;  // d/d(log h): k = e^{2 log h} * exp(...)
        } else {
          const int dim = local - 1;
          const double inv_l2 = std::exp(-2.0 * c.log_params[local]);
          for (Eigen::Index j = 0; j < n; ++j)
            for (Eigen::Index i = 0; i < n; ++i) {
              const double diff = inputs(i, dim) - inputs(j, dim);
              d(i, j) = kc(i, j) * diff * diff * inv_l2;
            }
        }
        break;
      }
      case KernelKind::Periodic: {
        const double h2 = std::exp(2.0 * c.log_params[0]);
        const double inv_l2 = std::exp(-2.0 * c.log_params[1]);
        const double w = M_PI / c.period;
        for (Eigen::Index j = 0; j < n; ++j)
          for (Eigen::Index i = 0; i < n; ++i) {
            const double s2 = std::pow(std::sin(w * (inputs(i, 0) - inputs(j, 0))), 2);
            const double kc = h2 * std::exp(-0.5 * inv_l2 * s2);
            d(i, j) = local == 0 ? 2.0 * kc : kc * s2 * inv_l2;
          }
        break;
      }
      case KernelKind::WhiteNoise:
        d.diagonal().array() = std::exp(c.log_params[0]);
        break;
    }
    return d;
  }
  throw ConfigError("gram_gradient: unreachable");
}

Eigen::MatrixXd as_inputs(const Eigen::Ref<const Eigen::VectorXd>& values) {
  return values;
}

std::string KernelSpec::describe() const {
  std::ostringstream out;
  bool first = true;
  for (const auto& c : components_) {
    if (!first) out << " + ";
    first = false;
    switch (c.kind) {
      case KernelKind::SquaredExp: {
        out << "se(" << std::exp(c.log_params[0]);
        for (Eigen::Index i = 1; i < c.log_params.size(); ++i)
          out << "," << std::exp(c.log_params[i]);
        out << ")";
        break;
      }
      case KernelKind::Periodic:
        out << "per(" << std::exp(c.log_params[0]) << "," << std::exp(c.log_params[1]) << ","
            << c.period << ")";
        break;
      case KernelKind::WhiteNoise:
        out << "wn(" << std::exp(c.log_params[0]) << ")";
        break;
    }
  }
  return out.str();
}

}  // namespace hgp
