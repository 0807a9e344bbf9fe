#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace hgp {

// Naive local wall-clock time; no timezone or DST handling.
std::int64_t parse_timestamp(const std::string& iso);      // YYYY-MM-DDTHH:MM:SS
std::string format_timestamp(std::int64_t seconds);

constexpr std::int64_t kStepSeconds = 300;  // 5-minute bins
constexpr int kStepsPerDay = 288;

// One road segment's series on the regular 5-minute grid. Gaps are present
// grid points with missing values. The experiment mask marks points hidden
// for evaluation and never overlaps the originally-missing set.
struct SpeedSeries {
  std::string place_id;
  std::vector<std::int64_t> timestamps;
  Eigen::VectorXd speed;               // NaN where missing
  Eigen::VectorXd decile;              // 1..10, NaN where missing
  std::vector<std::uint8_t> original_missing;
  std::vector<std::uint8_t> experiment_mask;

  Eigen::Index size() const { return speed.size(); }
  // Fractional days since the first timestamp.
  double time_days(Eigen::Index i) const {
    return static_cast<double>(timestamps[i] - timestamps.front()) / 86400.0;
  }
  Eigen::Index observed_count() const;
};

// CSV with header timestamp,place_id,speed_kmh,sample_size_decile; an empty
// field means missing. Rejects malformed rows, non-monotone timestamps and
// steps other than 5 minutes.
SpeedSeries read_speed_csv(const std::string& path);
void write_speed_csv(const std::string& path, const SpeedSeries& series);

// Hides round(fraction * observed) points, drawn uniformly without
// replacement from the originally-observed points. Deterministic per seed.
SpeedSeries mask_random(const SpeedSeries& series, double fraction, std::uint64_t seed);

// Consecutive non-overlapping blocks of block_days; a shorter remainder
// stays as its own block.
std::vector<SpeedSeries> split_blocks(const SpeedSeries& series, int block_days);

enum class DecileProfile {
  DayBiased,  // larger sample sizes during day hours, with persistent bouts
  Uniform,    // independent uniform deciles (null-hypothesis data)
};

// Synthetic generator standing in for the proprietary source: a smooth GP
// mean plus decile-linked observation noise.
struct SyntheticSpec {
  int days = 30;
  std::uint64_t seed = 1;
  std::string place_id = "synthetic";
  std::string start = "2015-01-01T00:00:00";
  double base_speed = 65.0;

  // Mean process f: SE + weekly periodic, in km/h and days.
  double se_amplitude = 8.0;
  double se_lengthscale_days = 0.12;
  double per_amplitude = 4.0;
  double per_lengthscale = 1.0;
  double period_days = 7.0;

  // Noise regimes: decile level -> observation noise sd (km/h).
  std::map<int, double> decile_noise_sd = {
      {1, 3.0}, {2, 3.0}, {3, 3.0}, {4, 1.0},  {5, 1.0},
      {6, 1.0}, {7, 1.0}, {8, 0.3}, {9, 0.3}, {10, 0.3}};

  DecileProfile decile_profile = DecileProfile::DayBiased;
  // Mean sojourn of the depressed-decile bouts, in steps; 0 disables bouts.
  double bout_mean_steps = 18.0;
  double bout_rate = 0.08;  // probability a bout starts at any step
};

struct SyntheticResult {
  SpeedSeries series;
  Eigen::VectorXd f_true;        // noiseless signal (km/h)
  Eigen::VectorXd noise_sd_true; // per-point observation sd
};

SyntheticResult generate_synthetic(const SyntheticSpec& spec);

// Sidecar schema: timestamp,f_true,noise_sd_true.
void write_ground_truth_csv(const std::string& path, const SyntheticResult& result);

// Per-decile speed statistics and the correlation between decile level and
// per-decile speed sd, over observed points.
struct DecileProfileRow {
  int decile = 0;
  std::size_t count = 0;
  double mean_speed = 0.0;
  double speed_sd = 0.0;
};
struct DecileNoiseProfile {
  std::vector<DecileProfileRow> rows;     // populated deciles, ascending
  double correlation = 0.0;               // decile level vs per-decile sd
};
DecileNoiseProfile decile_noise_profile(const SpeedSeries& series);

// Output schema: timestamp,y_true,pred_mean,pred_var,lower95,upper95,
// log_density,masked. Empty fields encode absent values.
struct PredictionRow {
  std::int64_t timestamp = 0;
  std::optional<double> y_true;
  std::optional<double> pred_mean;
  std::optional<double> pred_var;
  std::optional<double> lower95;
  std::optional<double> upper95;
  std::optional<double> log_density;
  bool masked = false;
};

void write_predictions_csv(const std::string& path, const std::vector<PredictionRow>& rows);
std::vector<PredictionRow> read_predictions_csv(const std::string& path);

}  // namespace hgp
