#include "hgp/metrics.hpp"

#include <cmath>
#include <sstream>

#include "hgp/errors.hpp"

namespace hgp {

namespace {

void require_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw ConfigError(std::string(what) + ": length mismatch");
}

}  // namespace

double nlpd(const std::vector<double>& log_densities) {
  if (log_densities.empty()) throw DataError("nlpd: empty input");
  std::ostringstream bad;
  bool any_bad = false;
  double acc = 0.0;
  for (std::size_t i = 0; i < log_densities.size(); ++i) {
    if (!std::isfinite(log_densities[i])) {
      bad << (any_bad ? "," : "") << i;
      any_bad = true;
    }
    acc += -log_densities[i];
  }
  if (any_bad) throw DataError("nlpd: non-finite log densities at indices " + bad.str());
  return acc / static_cast<double>(log_densities.size());
}

double icp(const std::vector<double>& y, const std::vector<double>& lower,
           const std::vector<double>& upper) {
  require_same_size(y.size(), lower.size(), "icp");
  require_same_size(y.size(), upper.size(), "icp");
  if (y.empty()) throw DataError("icp: empty input");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < y.size(); ++i)
    if (lower[i] <= y[i] && y[i] <= upper[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(y.size());
}

double mil(const std::vector<double>& lower, const std::vector<double>& upper) {
  require_same_size(lower.size(), upper.size(), "mil");
  if (lower.empty()) throw DataError("mil: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < lower.size(); ++i) acc += upper[i] - lower[i];
  return acc / static_cast<double>(lower.size());
}

double rmil(const std::vector<double>& y, const std::vector<double>& yhat,
            const std::vector<double>& lower, const std::vector<double>& upper,
            double eps) {
  require_same_size(y.size(), yhat.size(), "rmil");
  require_same_size(y.size(), lower.size(), "rmil");
  require_same_size(y.size(), upper.size(), "rmil");
  if (y.empty()) throw DataError("rmil: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i)
    acc += (upper[i] - lower[i]) / std::max(std::abs(y[i] - yhat[i]), eps);
  return acc / static_cast<double>(y.size());
}

PointErrors point_errors(const std::vector<double>& y, const std::vector<double>& yhat) {
  require_same_size(y.size(), yhat.size(), "point_errors");
  if (y.empty()) throw DataError("point_errors: empty input");
  const double n = static_cast<double>(y.size());
  double abs_err = 0.0;
  double mean_y = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    abs_err += std::abs(yhat[i] - y[i]);
    mean_y += y[i];
  }
  mean_y /= n;

  double abs_dev = 0.0, sq_err = 0.0, sq_dev = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    abs_dev += std::abs(y[i] - mean_y);
    sq_err += (yhat[i] - y[i]) * (yhat[i] - y[i]);
    sq_dev += (y[i] - mean_y) * (y[i] - mean_y);
  }

  PointErrors out;
  out.mae = abs_err / n;
  if (abs_dev > 0.0) out.rae = 100.0 * abs_err / abs_dev;
  if (sq_dev > 0.0) out.r2 = 1.0 - sq_err / sq_dev;
  return out;
}

std::vector<std::uint8_t> day_period_mask(const std::vector<std::int64_t>& timestamps) {
  std::vector<std::uint8_t> mask(timestamps.size());
  for (std::size_t i = 0; i < timestamps.size(); ++i) {
    const std::int64_t sec = ((timestamps[i] % 86400) + 86400) % 86400;
    mask[i] = sec >= 7 * 3600 && sec < 22 * 3600;
  }
  return mask;
}

}  // namespace hgp
