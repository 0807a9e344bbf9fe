#include "hgp/features.hpp"

#include <cmath>
#include <iostream>

#include "hgp/errors.hpp"

namespace hgp {

Eigen::VectorXd fill_missing_linear(const Eigen::Ref<const Eigen::VectorXd>& values,
                                    const std::vector<std::uint8_t>& missing) {
  const Eigen::Index n = values.size();
  if (static_cast<Eigen::Index>(missing.size()) != n)
    throw ConfigError("fill_missing_linear: mask length mismatch");
  Eigen::VectorXd out = values;
  Eigen::Index prev = -1;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (missing[i]) continue;
    if (prev < 0 && i > 0) {
      out.head(i).setConstant(values[i]);  // leading gap
    } else if (prev >= 0 && i > prev + 1) {
      const double step = (values[i] - values[prev]) / static_cast<double>(i - prev);
      for (Eigen::Index j = prev + 1; j < i; ++j)
        out[j] = values[prev] + step * static_cast<double>(j - prev);
    }
    prev = i;
  }
  if (prev < 0) throw DataError("fill_missing_linear: every value is missing");
  if (prev < n - 1) out.tail(n - 1 - prev).setConstant(values[prev]);  // trailing gap
  return out;
}

Eigen::VectorXd fill_missing_causal(const Eigen::Ref<const Eigen::VectorXd>& values,
                                    const std::vector<std::uint8_t>& missing) {
  const Eigen::Index n = values.size();
  if (static_cast<Eigen::Index>(missing.size()) != n)
    throw ConfigError("fill_missing_causal: mask length mismatch");
  Eigen::Index first = -1;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!missing[i]) {
      first = i;
      break;
    }
  }
  if (first < 0) throw DataError("fill_missing_causal: every value is missing");
  Eigen::VectorXd out = values;
  out.head(first).setConstant(values[first]);
  double last = values[first];
  for (Eigen::Index i = first; i < n; ++i) {
    if (missing[i])
      out[i] = last;
    else
      last = values[i];
  }
  return out;
}

Eigen::MatrixXd build_lagged_inputs(const Eigen::Ref<const Eigen::VectorXd>& x,
                                    const Eigen::Ref<const Eigen::VectorXd>& y,
                                    int lags) {
  const Eigen::Index t_len = x.size();
  if (y.size() != t_len) throw ConfigError("build_lagged_inputs: sequence length mismatch");
  if (lags < 1) throw ConfigError("build_lagged_inputs: lag order must be at least 1");
  if (t_len <= lags) throw DataError("build_lagged_inputs: series shorter than lag order");
  Eigen::MatrixXd z(t_len - lags, 2 * lags);
  for (Eigen::Index t = lags; t < t_len; ++t)
    for (int k = 1; k <= lags; ++k) {
      z(t - lags, k - 1) = x[t - k];
      z(t - lags, lags + k - 1) = y[t - k];
    }
  return z;
}

Eigen::MatrixXd build_lagged_inputs_padded(const Eigen::Ref<const Eigen::VectorXd>& x,
                                           const Eigen::Ref<const Eigen::VectorXd>& y,
                                           int lags) {
  const Eigen::Index t_len = x.size();
  if (t_len == 0) throw DataError("build_lagged_inputs_padded: empty series");
  Eigen::VectorXd xp(t_len + lags), yp(t_len + lags);
  xp.head(lags).setConstant(x[0]);
  yp.head(lags).setConstant(y[0]);
  xp.tail(t_len) = x;
  yp.tail(t_len) = y;
  return build_lagged_inputs(xp, yp, lags);
}

Eigen::VectorXd Standardizer::apply(const Eigen::Ref<const Eigen::VectorXd>& v) const {
  return ((v.array() - shift) / scale).matrix();
}

Eigen::VectorXd Standardizer::invert(const Eigen::Ref<const Eigen::VectorXd>& v) const {
  return (v.array() * scale + shift).matrix();
}

Standardizer Standardizer::estimate(const Eigen::Ref<const Eigen::VectorXd>& values) {
  if (values.size() == 0) throw DataError("Standardizer::estimate: empty input");
  Standardizer s;
  s.shift = values.mean();
  if (values.size() > 1) {
    const double var =
        (values.array() - s.shift).square().sum() / static_cast<double>(values.size() - 1);
    s.scale = std::sqrt(var);
  }
  if (!(s.scale > 1e-12 * std::max(1.0, std::abs(s.shift)))) {
    std::cerr << "warning: near-constant channel (std " << s.scale
              << "), standardizing with scale 1\n";
    s.scale = 1.0;
  }
  return s;
}

double decile_to_unit(double decile) { return (decile - 1.0) / 9.0; }

}  // namespace hgp
