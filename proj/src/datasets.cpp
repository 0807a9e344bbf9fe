#include "hgp/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "hgp/errors.hpp"
#include "hgp/gp_exact.hpp"
#include "hgp/kernels.hpp"
#include "hgp/numerics.hpp"
#include "hgp/rng.hpp"

namespace hgp {

namespace {

std::int64_t days_from_civil(int y, unsigned m, unsigned d) {
  y -= m <= 2;
  const int era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097LL + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, int& y, unsigned& m, unsigned& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t yr = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp + (mp < 10 ? 3 : -9);
  y = static_cast<int>(yr + (m <= 2));
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(trim(line.substr(start)));
      break;
    }
    out.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
  return out;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

double parse_double_field(const std::string& field, std::size_t line_no, const char* name) {
  std::size_t used = 0;
  double v;
  try {
    v = std::stod(field, &used);
  } catch (const std::exception&) {
    throw DataError("line " + std::to_string(line_no) + ": bad " + name + " value '" +
                    field + "'");
  }
  if (used != field.size() || !std::isfinite(v))
    throw DataError("line " + std::to_string(line_no) + ": bad " + name + " value '" +
                    field + "'");
  return v;
}

}  // namespace

std::int64_t parse_timestamp(const std::string& iso) {
  int y, hh, mm, ss;
  unsigned mo, dd;
  char sep;
  if (std::sscanf(iso.c_str(), "%d-%u-%u%c%d:%d:%d", &y, &mo, &dd, &sep, &hh, &mm, &ss) != 7 ||
      (sep != 'T' && sep != ' '))
    throw DataError("bad timestamp '" + iso + "' (expected YYYY-MM-DDTHH:MM:SS)");
  if (mo < 1 || mo > 12 || dd < 1 || dd > 31 || hh < 0 || hh > 23 || mm < 0 || mm > 59 ||
      ss < 0 || ss > 59)
    throw DataError("bad timestamp '" + iso + "'");
  return days_from_civil(y, mo, dd) * 86400LL + hh * 3600LL + mm * 60LL + ss;
}

std::string format_timestamp(std::int64_t seconds) {
  std::int64_t days = seconds / 86400;
  std::int64_t rem = seconds % 86400;
  if (rem < 0) {
    rem += 86400;
    --days;
  }
  int y;
  unsigned mo, dd;
  civil_from_days(days, y, mo, dd);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02lld:%02lld:%02lld", y, mo, dd,
                static_cast<long long>(rem / 3600), static_cast<long long>((rem / 60) % 60),
                static_cast<long long>(rem % 60));
  return buf;
}

Eigen::Index SpeedSeries::observed_count() const {
  Eigen::Index n = 0;
  for (auto m : original_missing)
    if (!m) ++n;
  return n;
}

SpeedSeries read_speed_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line))
    throw DataError("'" + path + "': empty file");
  if (split_csv(line) !=
      std::vector<std::string>{"timestamp", "place_id", "speed_kmh", "sample_size_decile"})
    throw DataError("'" + path +
                    "': expected header timestamp,place_id,speed_kmh,sample_size_decile");

  SpeedSeries s;
  std::vector<double> speeds, deciles;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_csv(line);
    if (fields.size() != 4)
      throw DataError("line " + std::to_string(line_no) + ": expected 4 fields, got " +
                      std::to_string(fields.size()));
    const std::int64_t ts = parse_timestamp(fields[0]);
    if (!s.timestamps.empty()) {
      if (ts == s.timestamps.back())
        throw DataError("line " + std::to_string(line_no) + ": duplicate timestamp " +
                        fields[0]);
      if (ts < s.timestamps.back())
        throw DataError("line " + std::to_string(line_no) + ": non-monotone timestamp " +
                        fields[0]);
      if (ts - s.timestamps.back() != kStepSeconds)
        throw DataError("line " + std::to_string(line_no) + ": step of " +
                        std::to_string(ts - s.timestamps.back()) +
                        " s; the grid must be regular at 300 s - resample or insert "
                        "empty rows for gaps");
    }
    s.timestamps.push_back(ts);
    if (s.place_id.empty() && !fields[1].empty()) s.place_id = fields[1];

    double speed = std::nan("");
    double decile = std::nan("");
    if (!fields[2].empty()) speed = parse_double_field(fields[2], line_no, "speed");
    if (!fields[3].empty()) {
      decile = parse_double_field(fields[3], line_no, "decile");
      if (decile < 1.0 || decile > 10.0 || decile != std::floor(decile))
        throw DataError("line " + std::to_string(line_no) + ": decile '" + fields[3] +
                        "' not an integer in 1..10");
    }
    speeds.push_back(speed);
    deciles.push_back(decile);
    s.original_missing.push_back(std::isnan(speed) || std::isnan(decile));
  }
  if (speeds.empty()) throw DataError("'" + path + "': no data rows");
  s.speed = Eigen::Map<Eigen::VectorXd>(speeds.data(), speeds.size());
  s.decile = Eigen::Map<Eigen::VectorXd>(deciles.data(), deciles.size());
  s.experiment_mask.assign(speeds.size(), 0);
  return s;
}

void write_speed_csv(const std::string& path, const SpeedSeries& series) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << "timestamp,place_id,speed_kmh,sample_size_decile\n";
  for (Eigen::Index i = 0; i < series.size(); ++i) {
    out << format_timestamp(series.timestamps[i]) << ',' << series.place_id << ',';
    if (!std::isnan(series.speed[i])) out << format_double(series.speed[i]);
    out << ',';
    if (!std::isnan(series.decile[i])) out << static_cast<int>(series.decile[i]);
    out << '\n';
  }
  if (!out) throw DataError("failed while writing '" + path + "'");
}

SpeedSeries mask_random(const SpeedSeries& series, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw ConfigError("mask_random: fraction must be in (0,1)");
  std::vector<Eigen::Index> observed;
  for (Eigen::Index i = 0; i < series.size(); ++i)
    if (!series.original_missing[i]) observed.push_back(i);
  const auto target = static_cast<std::size_t>(
      std::llround(fraction * static_cast<double>(observed.size())));
  if (observed.size() < target + 2)
    throw DataError("mask_random: masking " + std::to_string(target) + " of " +
                    std::to_string(observed.size()) + " observed points leaves too few");

  Rng rng(seed);
  for (std::size_t i = 0; i < target; ++i) {
    const std::size_t j = i + rng.uniform_index(observed.size() - i);
    std::swap(observed[i], observed[j]);
  }
  SpeedSeries out = series;
  out.experiment_mask.assign(series.size(), 0);
  for (std::size_t i = 0; i < target; ++i) out.experiment_mask[observed[i]] = 1;
  return out;
}

std::vector<SpeedSeries> split_blocks(const SpeedSeries& series, int block_days) {
  if (block_days < 1) throw ConfigError("split_blocks: block_days must be at least 1");
  const Eigen::Index block_len = static_cast<Eigen::Index>(block_days) * kStepsPerDay;
  std::vector<SpeedSeries> blocks;
  for (Eigen::Index start = 0; start < series.size(); start += block_len) {
    const Eigen::Index len = std::min(block_len, series.size() - start);
    SpeedSeries b;
    b.place_id = series.place_id;
    b.timestamps.assign(series.timestamps.begin() + start,
                        series.timestamps.begin() + start + len);
    b.speed = series.speed.segment(start, len);
    b.decile = series.decile.segment(start, len);
    b.original_missing.assign(series.original_missing.begin() + start,
                              series.original_missing.begin() + start + len);
    b.experiment_mask.assign(series.experiment_mask.begin() + start,
                             series.experiment_mask.begin() + start + len);
    blocks.push_back(std::move(b));
  }
  return blocks;
}

namespace {

// Exact draw from the weekly-periodic component: sample paths of a periodic
// kernel repeat with its period, so one period is drawn densely and tiled.
Eigen::VectorXd sample_periodic(const SyntheticSpec& spec, Eigen::Index n, Rng& rng) {
  const auto period_steps =
      static_cast<Eigen::Index>(std::llround(spec.period_days * kStepsPerDay));
  const Eigen::Index m = std::min(n, period_steps);
  Eigen::VectorXd grid(m);
  for (Eigen::Index i = 0; i < m; ++i) grid[i] = static_cast<double>(i) / kStepsPerDay;
  const KernelSpec per =
      KernelSpec::periodic(spec.per_amplitude, spec.per_lengthscale, spec.period_days);
  const PsdChol chol = cholesky_jittered(gram(per, grid));
  Eigen::VectorXd z(m);
  for (Eigen::Index i = 0; i < m; ++i) z[i] = rng.normal();
  const Eigen::VectorXd one_period = chol.factor() * z;
  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) out[i] = one_period[i % period_steps < m ? i % period_steps : 0];
  return out;
}

// Sequential conditional draw of the squared-exponential component. Each
// chunk is conditioned on a tail long enough that the dropped correlations
// are below 1e-10.
Eigen::VectorXd sample_smooth(const SyntheticSpec& spec, Eigen::Index n, Rng& rng) {
  const KernelSpec se = KernelSpec::squared_exp(spec.se_amplitude, spec.se_lengthscale_days);
  auto times = [](Eigen::Index begin, Eigen::Index len) {
    Eigen::MatrixXd t(len, 1);
    for (Eigen::Index i = 0; i < len; ++i)
      t(i, 0) = static_cast<double>(begin + i) / kStepsPerDay;
    return t;
  };

  const Eigen::Index exact_limit = 4320;
  if (n <= exact_limit) {
    const PsdChol chol = cholesky_jittered(gram(se, times(0, n)));
    Eigen::VectorXd z(n);
    for (Eigen::Index i = 0; i < n; ++i) z[i] = rng.normal();
    return chol.factor() * z;
  }

  const auto tail = std::clamp<Eigen::Index>(
      static_cast<Eigen::Index>(std::ceil(6.8 * spec.se_lengthscale_days * kStepsPerDay)),
      64, 2016);
  const Eigen::Index chunk = kStepsPerDay;

  Eigen::VectorXd f(n);
  {
    const Eigen::Index first = std::min(n, tail + chunk);
    const PsdChol chol = cholesky_jittered(gram(se, times(0, first)));
    Eigen::VectorXd z(first);
    for (Eigen::Index i = 0; i < first; ++i) z[i] = rng.normal();
    f.head(first) = chol.factor() * z;
    Eigen::Index at = first;
    while (at < n) {
      const Eigen::Index len = std::min(chunk, n - at);
      const Eigen::MatrixXd t_prev = times(at - tail, tail);
      const Eigen::MatrixXd t_new = times(at, len);
      const PsdChol chol_prev = cholesky_jittered(gram(se, t_prev));
      const Eigen::MatrixXd k_cross = cross_gram(se, t_prev, t_new);
      const Eigen::MatrixXd half = chol_prev.forward(k_cross);
      const Eigen::VectorXd prev_vals = f.segment(at - tail, tail);
      const Eigen::VectorXd mean = half.transpose() * chol_prev.forward(prev_vals);
      Eigen::MatrixXd cov = gram(se, t_new) - half.transpose() * half;
      const PsdChol chol_cond = cholesky_jittered(cov);
      Eigen::VectorXd z_new(len);
      for (Eigen::Index i = 0; i < len; ++i) z_new[i] = rng.normal();
      f.segment(at, len) = mean + chol_cond.factor() * z_new;
      at += len;
    }
  }
  return f;
}

std::vector<int> sample_deciles(const SyntheticSpec& spec, Eigen::Index n, Rng& rng) {
  std::vector<int> deciles(n);
  if (spec.decile_profile == DecileProfile::Uniform) {
    for (Eigen::Index i = 0; i < n; ++i)
      deciles[i] = 1 + static_cast<int>(rng.uniform_index(10));
    return deciles;
  }
  // Hour-of-day base level plus persistent depressed bouts.
  bool in_bout = false;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int step_of_day = static_cast<int>(i % kStepsPerDay);
    const double hour = step_of_day / 12.0;
    double level;
    if (hour < 6.0)
      level = 2.5;
    else if (hour < 7.5)
      level = 2.5 + (hour - 6.0) * 4.0;  // morning ramp
    else if (hour < 21.0)
      level = 8.5;
    else if (hour < 22.0)
      level = 8.5 - (hour - 21.0) * 6.0;  // evening ramp
    else
      level = 2.5;
    if (spec.bout_mean_steps > 0.0) {
      if (!in_bout && rng.uniform() < spec.bout_rate) in_bout = true;
      if (in_bout && rng.uniform() < 1.0 / spec.bout_mean_steps) in_bout = false;
      if (in_bout) level -= 5.0;
    }
    level += 1.5 * (2.0 * rng.uniform() - 1.0);
    deciles[i] = std::clamp(static_cast<int>(std::lround(level)), 1, 10);
  }
  return deciles;
}

}  // namespace

SyntheticResult generate_synthetic(const SyntheticSpec& spec) {
  if (spec.days < 1) throw ConfigError("generate_synthetic: length must be at least 1 day");
  for (const auto& [decile, sd] : spec.decile_noise_sd)
    if (sd < 0.0) throw ConfigError("generate_synthetic: noise sd must be non-negative");
  const Eigen::Index n = static_cast<Eigen::Index>(spec.days) * kStepsPerDay;

  Rng rng(spec.seed);
  const Eigen::VectorXd f_se = sample_smooth(spec, n, rng);
  const Eigen::VectorXd f_per = sample_periodic(spec, n, rng);
  const std::vector<int> deciles = sample_deciles(spec, n, rng);

  SyntheticResult out;
  out.f_true = (f_se + f_per).array() + spec.base_speed;
  out.noise_sd_true.resize(n);
  out.series.place_id = spec.place_id;
  out.series.speed.resize(n);
  out.series.decile.resize(n);
  out.series.original_missing.assign(n, 0);
  out.series.experiment_mask.assign(n, 0);
  const std::int64_t start = parse_timestamp(spec.start);
  out.series.timestamps.resize(n);

  for (Eigen::Index i = 0; i < n; ++i) {
    out.series.timestamps[i] = start + static_cast<std::int64_t>(i) * kStepSeconds;
    const int decile = deciles[i];
    const auto it = spec.decile_noise_sd.find(decile);
    if (it == spec.decile_noise_sd.end())
      throw ConfigError("generate_synthetic: no noise sd for decile " +
                        std::to_string(decile));
    const double sd = it->second;
    out.noise_sd_true[i] = sd;
    out.series.decile[i] = decile;
    out.series.speed[i] = out.f_true[i] + sd * rng.normal();
  }
  return out;
}

void write_ground_truth_csv(const std::string& path, const SyntheticResult& result) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << "timestamp,f_true,noise_sd_true\n";
  for (Eigen::Index i = 0; i < result.series.size(); ++i)
    out << format_timestamp(result.series.timestamps[i]) << ','
        << format_double(result.f_true[i]) << ',' << format_double(result.noise_sd_true[i])
        << '\n';
  if (!out) throw DataError("failed while writing '" + path + "'");
}

DecileNoiseProfile decile_noise_profile(const SpeedSeries& series) {
  std::map<int, std::vector<double>> groups;
  for (Eigen::Index i = 0; i < series.size(); ++i) {
    if (series.original_missing[i]) continue;
    if (std::isnan(series.speed[i]) || std::isnan(series.decile[i])) continue;
    groups[static_cast<int>(series.decile[i])].push_back(series.speed[i]);
  }

  DecileNoiseProfile profile;
  std::vector<double> levels, sds;
  for (const auto& [decile, speeds] : groups) {
    DecileProfileRow row;
    row.decile = decile;
    row.count = speeds.size();
    double mean = 0.0;
    for (double v : speeds) mean += v;
    mean /= static_cast<double>(speeds.size());
    row.mean_speed = mean;
    if (speeds.size() >= 2) {
      double ss = 0.0;
      for (double v : speeds) ss += (v - mean) * (v - mean);
      row.speed_sd = std::sqrt(ss / static_cast<double>(speeds.size() - 1));
      levels.push_back(decile);
      sds.push_back(row.speed_sd);
    }
    profile.rows.push_back(row);
  }
  if (levels.size() < 2)
    throw DataError("decile_noise_profile: need at least two populated decile levels");

  const double n = static_cast<double>(levels.size());
  double mean_l = 0.0, mean_s = 0.0;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    mean_l += levels[i];
    mean_s += sds[i];
  }
  mean_l /= n;
  mean_s /= n;
  double cov = 0.0, var_l = 0.0, var_s = 0.0;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    cov += (levels[i] - mean_l) * (sds[i] - mean_s);
    var_l += (levels[i] - mean_l) * (levels[i] - mean_l);
    var_s += (sds[i] - mean_s) * (sds[i] - mean_s);
  }
  profile.correlation =
      var_l > 0.0 && var_s > 0.0 ? cov / std::sqrt(var_l * var_s) : 0.0;
  return profile;
}

void write_predictions_csv(const std::string& path, const std::vector<PredictionRow>& rows) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << "timestamp,y_true,pred_mean,pred_var,lower95,upper95,log_density,masked\n";
  auto field = [](const std::optional<double>& v) {
    return v ? format_double(*v) : std::string();
  };
  for (const auto& row : rows) {
    out << format_timestamp(row.timestamp) << ',' << field(row.y_true) << ','
        << field(row.pred_mean) << ',' << field(row.pred_var) << ',' << field(row.lower95)
        << ',' << field(row.upper95) << ',' << field(row.log_density) << ','
        << (row.masked ? 1 : 0) << '\n';
  }
  if (!out) throw DataError("failed while writing '" + path + "'");
}

std::vector<PredictionRow> read_predictions_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line) ||
      split_csv(line) != std::vector<std::string>{"timestamp", "y_true", "pred_mean",
                                                  "pred_var", "lower95", "upper95",
                                                  "log_density", "masked"})
    throw DataError("'" + path + "': bad predictions header");
  std::vector<PredictionRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_csv(line);
    if (fields.size() != 8)
      throw DataError("line " + std::to_string(line_no) + ": expected 8 fields");
    PredictionRow row;
    row.timestamp = parse_timestamp(fields[0]);
    auto opt = [&](int idx, const char* name) -> std::optional<double> {
      if (fields[idx].empty()) return std::nullopt;
      return parse_double_field(fields[idx], line_no, name);
    };
    row.y_true = opt(1, "y_true");
    row.pred_mean = opt(2, "pred_mean");
    row.pred_var = opt(3, "pred_var");
    row.lower95 = opt(4, "lower95");
    row.upper95 = opt(5, "upper95");
    row.log_density = opt(6, "log_density");
    row.masked = fields[7] == "1";
    rows.push_back(row);
  }
  return rows;
}

}  // namespace hgp
