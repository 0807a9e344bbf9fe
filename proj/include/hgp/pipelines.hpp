#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hgp/datasets.hpp"
#include "hgp/kernels.hpp"
#include "hgp/metrics.hpp"

namespace hgp {

// One experiment run: protocol knobs, model selection, seeds and outputs.
// Defaults follow the reference protocol (8-day windows refit every 5 days
// after a 15-day bootstrap; 15-day imputation blocks with half the points
// masked).
struct RunConfig {
  std::string input_path;
  std::string output_dir;
  std::string model = "gp";  // lin-interp | gp | hgp | ssrc-hgp
  std::string task = "impute";

  // Kernel expressions in natural units, e.g. "se(1,0.25)+per(1,1,7)+wn(0.1)".
  // Empty selects per-model defaults.
  std::string kernel_f;
  std::string kernel_g;

  int lags = 2;
  double mask_fraction = 0.5;
  int block_days = 15;
  int window_days = 8;
  int refit_days = 5;
  int bootstrap_days = 15;
  std::uint64_t seed = 1;
  int gh_nodes = 30;
  int mc_samples = 10000;
  int restarts = 3;
  int max_fit_iters = 200;
  double fit_tol = 1e-6;
  bool standardize = true;
};

struct PipelineResult {
  std::string model;
  std::vector<PredictionRow> rows;
  MetricsReport metrics_all;
  MetricsReport metrics_day;
  int blocks = 0;         // imputation: blocks contributing predictions
  int refits = 0;         // forecasting: full re-estimations
  int skipped = 0;        // skipped blocks or steps
  std::string predictions_path;  // written when output_dir is set
};

// Masks, blocks, fits and scores one model under the imputation protocol.
// The series must already carry its experiment mask (see mask_random); when
// it carries none, the mask is drawn here from config.seed.
PipelineResult run_imputation(const RunConfig& config, const SpeedSeries& series);

// One-step-ahead rolling forecast over the post-bootstrap range.
PipelineResult run_forecasting(const RunConfig& config, const SpeedSeries& series);

struct ComparisonEntry {
  std::string model;
  bool failed = false;
  std::string error;
  PipelineResult result;
};

struct ComparisonResult {
  std::string task;
  std::vector<ComparisonEntry> entries;
  // Winning model per subset, by NLPD and MAE.
  std::string best_nlpd_all, best_mae_all, best_nlpd_day, best_mae_day;
};

// Runs the configured task for every model against shared masks/windows and
// seeds; individual model failures are recorded and the rest continue.
ComparisonResult compare_models(const RunConfig& config, const SpeedSeries& series,
                                const std::vector<std::string>& models);

std::string comparison_text_table(const ComparisonResult& comparison);
void write_comparison_json(const std::string& path, const ComparisonResult& comparison);
void write_metrics_json(const std::string& path, const std::string& place_id,
                        const std::string& model, const MetricsReport& report);

// Parses a sum of kernel primitives with natural-unit hyperparameters:
//   se(h, l1[, l2...]) | per(h, l, p) | wn(s2)
KernelSpec parse_kernel_expression(const std::string& expr);

// Renders truths, predictive mean and the 95% band over [from_ts, to_ts]
// to an SVG file. Bands and lines cover only predicted points.
void emit_plot(const std::vector<PredictionRow>& rows, std::int64_t from_ts,
               std::int64_t to_ts, const std::string& path);

}  // namespace hgp
