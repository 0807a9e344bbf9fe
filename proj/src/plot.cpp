#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "hgp/datasets.hpp"
#include "hgp/errors.hpp"
#include "hgp/pipelines.hpp"

namespace hgp {

namespace {

constexpr double kWidth = 960.0;
constexpr double kHeight = 400.0;
constexpr double kLeft = 60.0, kRight = 930.0;
constexpr double kTop = 20.0, kBottom = 370.0;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

}  // namespace

void emit_plot(const std::vector<PredictionRow>& rows, std::int64_t from_ts,
               std::int64_t to_ts, const std::string& path) {
  std::vector<const PredictionRow*> window;
  for (const auto& row : rows)
    if (row.timestamp >= from_ts && row.timestamp <= to_ts) window.push_back(&row);
  if (window.empty())
    throw DataError("emit_plot: no predictions between " + format_timestamp(from_ts) +
                    " and " + format_timestamp(to_ts));

  double y_min = std::numeric_limits<double>::infinity();
  double y_max = -y_min;
  for (const auto* row : window) {
    for (const auto& v : {row->y_true, row->pred_mean, row->lower95, row->upper95}) {
      if (!v) continue;
      y_min = std::min(y_min, *v);
      y_max = std::max(y_max, *v);
    }
  }
  if (!(y_min < y_max)) {
    y_min -= 1.0;
    y_max += 1.0;
  }
  const double pad = 0.05 * (y_max - y_min);
  y_min -= pad;
  y_max += pad;

  const double span = static_cast<double>(std::max<std::int64_t>(to_ts - from_ts, 1));
  auto sx = [&](std::int64_t ts) {
    return kLeft + (kRight - kLeft) * static_cast<double>(ts - from_ts) / span;
  };
  auto sy = [&](double v) {
    return kBottom - (kBottom - kTop) * (v - y_min) / (y_max - y_min);
  };

  // Contiguous runs share the 5-minute grid step; gaps split bands and lines.
  auto contiguous = [&](std::size_t i) {
    return window[i]->timestamp - window[i - 1]->timestamp == kStepSeconds;
  };

  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n";
  out << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << kRight - kLeft
      << "\" height=\"" << kBottom - kTop
      << "\" fill=\"white\" stroke=\"#444444\" stroke-width=\"1\"/>\n";

  // Interval bands.
  std::size_t i = 0;
  while (i < window.size()) {
    if (!window[i]->lower95 || !window[i]->upper95) {
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    while (j < window.size() && window[j]->lower95 && window[j]->upper95 && contiguous(j))
      ++j;
    out << "<path class=\"band\" fill=\"#cccccc\" stroke=\"none\" d=\"";
    for (std::size_t k = i; k < j; ++k)
      out << (k == i ? "M" : "L") << fmt(sx(window[k]->timestamp)) << " "
          << fmt(sy(*window[k]->upper95)) << " ";
    for (std::size_t k = j; k-- > i;)
      out << "L" << fmt(sx(window[k]->timestamp)) << " " << fmt(sy(*window[k]->lower95))
          << " ";
    out << "Z\"/>\n";
    i = j;
  }

  // Predictive mean.
  i = 0;
  while (i < window.size()) {
    if (!window[i]->pred_mean) {
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    while (j < window.size() && window[j]->pred_mean && contiguous(j)) ++j;
    out << "<polyline class=\"mean\" fill=\"none\" stroke=\"black\" stroke-width=\"1.2\" "
           "points=\"";
    for (std::size_t k = i; k < j; ++k)
      out << fmt(sx(window[k]->timestamp)) << "," << fmt(sy(*window[k]->pred_mean)) << " ";
    out << "\"/>\n";
    i = j;
  }

  // Observed truths.
  for (const auto* row : window) {
    if (!row->y_true) continue;
    const double x = sx(row->timestamp);
    const double y = sy(*row->y_true);
    out << "<path class=\"truth\" stroke=\"#3366cc\" stroke-width=\"1\" d=\"M"
        << fmt(x - 2.2) << " " << fmt(y - 2.2) << " L" << fmt(x + 2.2) << " "
        << fmt(y + 2.2) << " M" << fmt(x - 2.2) << " " << fmt(y + 2.2) << " L"
        << fmt(x + 2.2) << " " << fmt(y - 2.2) << "\"/>\n";
  }

  // Axis annotations.
  out << "<text x=\"" << kLeft << "\" y=\"" << kBottom + 16 << "\" font-size=\"11\">"
      << format_timestamp(from_ts) << "</text>\n";
  out << "<text x=\"" << kRight - 150 << "\" y=\"" << kBottom + 16 << "\" font-size=\"11\">"
      << format_timestamp(to_ts) << "</text>\n";
  out << "<text x=\"4\" y=\"" << sy(y_min + pad) << "\" font-size=\"11\">" << fmt(y_min + pad)
      << "</text>\n";
  out << "<text x=\"4\" y=\"" << sy(y_max - pad) << "\" font-size=\"11\">" << fmt(y_max - pad)
      << "</text>\n";
  out << "</svg>\n";
  if (!out) throw DataError("failed while writing '" + path + "'");
}

}  // namespace hgp
