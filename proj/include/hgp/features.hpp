#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace hgp {

// Linear interpolation of interior gaps; leading/trailing gaps take the
// nearest observed value. `missing` marks the gaps. Throws DataError when
// nothing is observed. Observed values pass through untouched.
Eigen::VectorXd fill_missing_linear(const Eigen::Ref<const Eigen::VectorXd>& values,
                                    const std::vector<std::uint8_t>& missing);

// Causal gap fill for rolling forecasts: each gap takes the most recent
// observed value, so position i never reads beyond index i. Gaps before the
// first observation take that first observation.
Eigen::VectorXd fill_missing_causal(const Eigen::Ref<const Eigen::VectorXd>& values,
                                    const std::vector<std::uint8_t>& missing);

// Noise-process inputs z_t = (x_{t-1},...,x_{t-L}, y_{t-1},...,y_{t-L}) for
// t = L..T-1, one row per t, so the result has T-L rows and 2L columns.
// Sequences must already be gap-filled.
Eigen::MatrixXd build_lagged_inputs(const Eigen::Ref<const Eigen::VectorXd>& x,
                                    const Eigen::Ref<const Eigen::VectorXd>& y,
                                    int lags);

// Same layout but start-padded with the first value of each sequence, so
// every t = 0..T-1 has a row and pipelines can align features to the grid.
Eigen::MatrixXd build_lagged_inputs_padded(const Eigen::Ref<const Eigen::VectorXd>& x,
                                           const Eigen::Ref<const Eigen::VectorXd>& y,
                                           int lags);

// Affine map of one data channel; apply/invert round-trip exactly.
struct Standardizer {
  double shift = 0.0;
  double scale = 1.0;

  double apply(double v) const { return (v - shift) / scale; }
  double invert(double v) const { return v * scale + shift; }
  Eigen::VectorXd apply(const Eigen::Ref<const Eigen::VectorXd>& v) const;
  Eigen::VectorXd invert(const Eigen::Ref<const Eigen::VectorXd>& v) const;

  // Mean/standard-deviation estimate; a near-zero standard deviation falls
  // back to scale 1 with a warning on stderr.
  static Standardizer estimate(const Eigen::Ref<const Eigen::VectorXd>& values);
  static Standardizer identity() { return {0.0, 1.0}; }
};

// Decile levels {1..10} mapped affinely onto [0, 1].
double decile_to_unit(double decile);

}  // namespace hgp
