#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace hgp {

// Evaluation bundle for one (place, method, subset). Fields are absent when
// the method cannot supply them (point predictors have no densities or
// intervals) or when the statistic is undefined (constant truths).
struct MetricsReport {
  std::string subset = "all";
  std::size_t count = 0;
  std::optional<double> nlpd;
  std::optional<double> icp;
  std::optional<double> mil;
  std::optional<double> rmil;
  std::optional<double> mae;
  std::optional<double> rae;  // percent
  std::optional<double> r2;
};

// Mean negative log predictive density. Non-finite entries raise DataError
// naming the offending indices.
double nlpd(const std::vector<double>& log_densities);

// Fraction of truths inside [lower, upper], boundaries inclusive.
double icp(const std::vector<double>& y, const std::vector<double>& lower,
           const std::vector<double>& upper);

// Mean interval width.
double mil(const std::vector<double>& lower, const std::vector<double>& upper);

// Mean of width / max(|y - yhat|, eps).
double rmil(const std::vector<double>& y, const std::vector<double>& yhat,
            const std::vector<double>& lower, const std::vector<double>& upper,
            double eps = 1e-3);

struct PointErrors {
  double mae = 0.0;
  std::optional<double> rae;
  std::optional<double> r2;
};
PointErrors point_errors(const std::vector<double>& y, const std::vector<double>& yhat);

// True where the local time of day falls in [07:00, 22:00).
std::vector<std::uint8_t> day_period_mask(const std::vector<std::int64_t>& timestamps);

}  // namespace hgp
