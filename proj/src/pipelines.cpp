#include "hgp/pipelines.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "hgp/errors.hpp"
#include "hgp/features.hpp"
#include "hgp/gp_exact.hpp"
#include "hgp/rng.hpp"
#include "hgp/vhgp.hpp"

namespace hgp {

namespace {

constexpr double kIntervalLevel = 0.95;

// ---------------------------------------------------------------------------
// Kernel expressions and per-model defaults
// ---------------------------------------------------------------------------

std::vector<double> parse_args(const std::string& inside, const std::string& term) {
  std::vector<double> args;
  std::stringstream ss(inside);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      args.push_back(std::stod(tok, &used));
    } catch (const std::exception&) {
      throw ConfigError("kernel expression: bad number in '" + term + "'");
    }
  }
  return args;
}

KernelSpec parse_kernel_term(const std::string& term) {
  const std::size_t open = term.find('(');
  if (open == std::string::npos || term.back() != ')')
    throw ConfigError("kernel expression: expected name(args) in '" + term + "'");
  std::string name = term.substr(0, open);
  name.erase(std::remove_if(name.begin(), name.end(), ::isspace), name.end());
  const auto args = parse_args(term.substr(open + 1, term.size() - open - 2), term);
  if (name == "se") {
    if (args.size() < 2) throw ConfigError("se() needs amplitude and lengthscale(s)");
    Eigen::VectorXd l(args.size() - 1);
    for (std::size_t i = 1; i < args.size(); ++i) l[i - 1] = args[i];
    return KernelSpec::squared_exp(args[0], l);
  }
  if (name == "per") {
    if (args.size() != 3) throw ConfigError("per() needs amplitude, lengthscale, period");
    return KernelSpec::periodic(args[0], args[1], args[2]);
  }
  if (name == "wn") {
    if (args.size() != 1) throw ConfigError("wn() needs a variance");
    return KernelSpec::white_noise(args[0]);
  }
  throw ConfigError("kernel expression: unknown primitive '" + name + "'");
}

}  // namespace

KernelSpec parse_kernel_expression(const std::string& expr) {
  std::vector<std::string> terms;
  std::string current;
  int depth = 0;
  for (char ch : expr) {
    if (ch == '(') ++depth;
    if (ch == ')') --depth;
    if (ch == '+' && depth == 0) {
      terms.push_back(current);
      current.clear();
    } else {
      current += ch;
    }
  }
  terms.push_back(current);
  KernelSpec spec;
  bool first = true;
  for (const auto& term : terms) {
    std::string t = term;
    t.erase(std::remove_if(t.begin(), t.end(), ::isspace), t.end());
    if (t.empty()) throw ConfigError("kernel expression: empty term in '" + expr + "'");
    const KernelSpec parsed = parse_kernel_term(t);
    spec = first ? parsed : spec + parsed;
    first = false;
  }
  return spec;
}

namespace {

KernelSpec default_kernel_f_gp() {
  return KernelSpec::squared_exp(1.0, 0.25) + KernelSpec::periodic(1.0, 1.0, 7.0) +
         KernelSpec::white_noise(0.1);
}

KernelSpec default_kernel_f_hgp() {
  return KernelSpec::squared_exp(1.0, 0.25) + KernelSpec::periodic(1.0, 1.0, 7.0);
}

KernelSpec default_kernel_g(int dim) {
  if (dim == 1)
    return KernelSpec::squared_exp(1.0, 0.25) + KernelSpec::white_noise(0.01);
  return KernelSpec::squared_exp(1.0, Eigen::VectorXd::Constant(dim, 0.5)) +
         KernelSpec::white_noise(0.01);
}

KernelSpec config_kernel_f(const RunConfig& cfg, bool heteroscedastic) {
  if (cfg.kernel_f.empty())
    return heteroscedastic ? default_kernel_f_hgp() : default_kernel_f_gp();
  return parse_kernel_expression(cfg.kernel_f);
}

KernelSpec config_kernel_g(const RunConfig& cfg, int dim) {
  if (cfg.kernel_g.empty()) return default_kernel_g(dim);
  KernelSpec spec = parse_kernel_expression(cfg.kernel_g);
  if (spec.input_dim() != dim)
    throw ConfigError("kernel_g has input dimension " + std::to_string(spec.input_dim()) +
                      ", the noise process needs " + std::to_string(dim));
  return spec;
}

bool model_is_heteroscedastic(const std::string& model) {
  return model == "hgp" || model == "ssrc-hgp";
}

void validate_model_name(const std::string& model, bool forecasting) {
  if (model == "gp" || model_is_heteroscedastic(model)) return;
  if (model == "lin-interp") {
    if (forecasting)
      throw ConfigError("lin-interp interpolates interior gaps and cannot forecast");
    return;
  }
  throw ConfigError("unknown model '" + model +
                    "' (expected lin-interp, gp, hgp or ssrc-hgp)");
}

// ---------------------------------------------------------------------------
// Fitting helpers
// ---------------------------------------------------------------------------

OptimizerOptions fit_options(const RunConfig& cfg) {
  OptimizerOptions opts;
  opts.max_iters = cfg.max_fit_iters;
  opts.tol = cfg.fit_tol;
  return opts;
}

// Multi-restart wrapper: restart 0 starts from the model's parameters,
// later ones perturb the leading `perturb_count` entries in log space.
template <typename Model>
OptimizerResult fit_with_restarts(Model& model, const OptimizerOptions& opts, int restarts,
                                  Eigen::Index perturb_count, std::uint64_t seed) {
  const Eigen::VectorXd theta0 = model.params();
  Eigen::VectorXd best_arg = theta0;
  OptimizerResult best;
  best.value = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < std::max(1, restarts); ++k) {
    Eigen::VectorXd start = theta0;
    if (k > 0) {
      Rng rng(derive_seed(seed, 7000 + static_cast<std::uint64_t>(k)));
      for (Eigen::Index i = 0; i < perturb_count; ++i) start[i] += 0.3 * rng.normal();
    }
    try {
      model.set_params(start);
    } catch (const NumericalError&) {
      continue;
    }
    OptimizerResult result = model.fit(opts);
    if (result.value > best.value) {
      best = result;
      best_arg = result.arg;
    }
  }
  if (!std::isfinite(best.value)) throw NumericalError("fit failed from every restart");
  model.set_params(best_arg);
  best.arg = best_arg;
  return best;
}

// Iteration-capped exact-GP fit on an even subsample; seeds the noise scale
// (and mean-process hyperparameters) of the heteroscedastic fits.
ExactGp cheap_gp_prefit(const RunConfig& cfg, const Eigen::VectorXd& t,
                        const Eigen::VectorXd& y_std) {
  const Eigen::Index n = t.size();
  const Eigen::Index cap = 400;
  const Eigen::Index stride = std::max<Eigen::Index>(1, (n + cap - 1) / cap);
  const Eigen::Index m = (n + stride - 1) / stride;
  Eigen::MatrixXd ts(m, 1);
  Eigen::VectorXd ys(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    ts(i, 0) = t[i * stride];
    ys[i] = y_std[i * stride];
  }
  ExactGp gp(config_kernel_f(cfg, false), ts, ys);
  OptimizerOptions opts;
  opts.max_iters = 60;
  opts.tol = 1e-5;
  gp.fit(opts);
  return gp;
}

struct LagFeatures {
  // Row per grid point: (x_{t-1..t-L} unit deciles, y_{t-1..t-L} speeds in
  // natural units); the speed channels are standardized per training window.
  Eigen::MatrixXd rows;
  int lags = 0;

  Eigen::MatrixXd standardized(const Standardizer& s) const {
    Eigen::MatrixXd out = rows;
    for (int k = 0; k < lags; ++k)
      out.col(lags + k) = s.apply(out.col(lags + k));
    return out;
  }
};

// Imputation-mode features: two-sided interpolation over values hidden to
// the models (originally missing or experiment-masked).
LagFeatures imputation_lag_features(const SpeedSeries& series, int lags) {
  const Eigen::Index n = series.size();
  std::vector<std::uint8_t> hidden(n);
  for (Eigen::Index i = 0; i < n; ++i)
    hidden[i] = series.original_missing[i] || series.experiment_mask[i];
  const Eigen::VectorXd speeds = fill_missing_linear(series.speed, hidden);
  Eigen::VectorXd deciles = fill_missing_linear(series.decile, hidden);
  for (Eigen::Index i = 0; i < n; ++i) deciles[i] = decile_to_unit(deciles[i]);
  LagFeatures f;
  f.lags = lags;
  f.rows = build_lagged_inputs_padded(deciles, speeds, lags);
  return f;
}

// Forecast-mode features: strictly causal fill, so row t never reads past
// index t-1.
LagFeatures forecast_lag_features(const SpeedSeries& series, int lags) {
  const Eigen::Index n = series.size();
  std::vector<std::uint8_t> hidden(series.original_missing.begin(),
                                   series.original_missing.end());
  const Eigen::VectorXd speeds = fill_missing_causal(series.speed, hidden);
  Eigen::VectorXd deciles = fill_missing_causal(series.decile, hidden);
  for (Eigen::Index i = 0; i < n; ++i) deciles[i] = decile_to_unit(deciles[i]);
  LagFeatures f;
  f.lags = lags;
  f.rows = build_lagged_inputs_padded(deciles, speeds, lags);
  return f;
}

// ---------------------------------------------------------------------------
// Imputation
// ---------------------------------------------------------------------------

struct BlockOutput {
  std::vector<PredictionRow> rows;
  bool skipped = false;
};

BlockOutput impute_block(const RunConfig& cfg, const SpeedSeries& block,
                         std::uint64_t block_seed) {
  const Eigen::Index n = block.size();
  std::vector<Eigen::Index> train_idx;
  for (Eigen::Index i = 0; i < n; ++i)
    if (!block.original_missing[i] && !block.experiment_mask[i]) train_idx.push_back(i);

  BlockOutput out;
  if (train_idx.size() < 10) {
    std::cerr << "warning: block starting " << format_timestamp(block.timestamps.front())
              << " skipped (" << train_idx.size() << " observed points)\n";
    out.skipped = true;
    return out;
  }

  Eigen::VectorXd t_all(n);
  for (Eigen::Index i = 0; i < n; ++i) t_all[i] = block.time_days(i);

  Eigen::VectorXd y_train_nat(train_idx.size());
  Eigen::VectorXd t_train(train_idx.size());
  for (std::size_t i = 0; i < train_idx.size(); ++i) {
    y_train_nat[i] = block.speed[train_idx[i]];
    t_train[i] = t_all[train_idx[i]];
  }
  const Standardizer std_y =
      cfg.standardize ? Standardizer::estimate(y_train_nat) : Standardizer::identity();
  const Eigen::VectorXd y_train = std_y.apply(y_train_nat);

  auto base_row = [&](Eigen::Index i) {
    PredictionRow row;
    row.timestamp = block.timestamps[i];
    if (!block.original_missing[i]) row.y_true = block.speed[i];
    row.masked = block.experiment_mask[i] != 0;
    return row;
  };

  if (cfg.model == "lin-interp") {
    std::vector<std::uint8_t> hidden(n);
    for (Eigen::Index i = 0; i < n; ++i)
      hidden[i] = block.original_missing[i] || block.experiment_mask[i];
    const Eigen::VectorXd filled = fill_missing_linear(block.speed, hidden);
    for (Eigen::Index i = 0; i < n; ++i) {
      PredictionRow row = base_row(i);
      row.pred_mean = filled[i];
      out.rows.push_back(row);
    }
    return out;
  }

  if (cfg.model == "gp") {
    ExactGp gp(config_kernel_f(cfg, false), t_train, y_train);
    fit_with_restarts(gp, fit_options(cfg), cfg.restarts, gp.params().size(), block_seed);
    const auto [mean, var] = gp.predict_batch(Eigen::MatrixXd(t_all));
    const double z = normal_quantile(0.5 + 0.5 * kIntervalLevel);
    for (Eigen::Index i = 0; i < n; ++i) {
      PredictionRow row = base_row(i);
      const double sd = std::sqrt(var[i]);
      row.pred_mean = std_y.invert(mean[i]);
      row.pred_var = var[i] * std_y.scale * std_y.scale;
      row.lower95 = std_y.invert(mean[i] - z * sd);
      row.upper95 = std_y.invert(mean[i] + z * sd);
      if (row.y_true)
        row.log_density =
            PredictiveGaussian{mean[i], var[i]}.log_density(std_y.apply(*row.y_true));
      out.rows.push_back(row);
    }
    return out;
  }

  // hgp / ssrc-hgp
  const bool ssrc = cfg.model == "ssrc-hgp";
  Eigen::MatrixXd z_all;
  if (ssrc) {
    const LagFeatures feats = imputation_lag_features(block, cfg.lags);
    z_all = feats.standardized(std_y);
  } else {
    z_all = t_all;
  }
  Eigen::MatrixXd z_train(train_idx.size(), z_all.cols());
  for (std::size_t i = 0; i < train_idx.size(); ++i) z_train.row(i) = z_all.row(train_idx[i]);

  const ExactGp prefit = cheap_gp_prefit(cfg, t_train, y_train);
  KernelSpec kf = cfg.kernel_f.empty() ? prefit.kernel().without_white_noise()
                                       : config_kernel_f(cfg, true);
  const double mu0 = std::log(std::max(prefit.noise_variance(), 1e-8));

  VhgpModel model(kf, config_kernel_g(cfg, static_cast<int>(z_all.cols())), t_train,
                  z_train, y_train, mu0);
  const Eigen::Index hyper_count =
      model.param_count() - model.train_size();  // exclude rho from perturbation
  OptimizerResult fit =
      fit_with_restarts(model, fit_options(cfg), cfg.restarts, hyper_count, block_seed);
  if (fit.aborted)
    std::cerr << "warning: " << cfg.model << " fit aborted on non-finite objective; "
              << "using best parameters found\n";

  const auto latents = model.predict_latent(t_all, z_all);
  for (Eigen::Index i = 0; i < n; ++i) {
    PredictionRow row = base_row(i);
    const Moments mom = predict_moments(latents[i]);
    row.pred_mean = std_y.invert(mom.mean);
    row.pred_var = mom.variance * std_y.scale * std_y.scale;
    const auto [lo, hi] =
        predictive_interval(latents[i], kIntervalLevel, cfg.mc_samples,
                            derive_seed(block_seed, 500'000 + static_cast<std::uint64_t>(i)));
    row.lower95 = std_y.invert(lo);
    row.upper95 = std_y.invert(hi);
    if (row.y_true)
      row.log_density =
          predictive_log_density(latents[i], std_y.apply(*row.y_true), cfg.gh_nodes);
    out.rows.push_back(row);
  }
  return out;
}

// Metrics over the evaluated rows of one subset.
MetricsReport score_rows(const std::vector<const PredictionRow*>& rows,
                         const std::string& subset, bool has_density) {
  MetricsReport report;
  report.subset = subset;
  report.count = rows.size();
  if (rows.empty()) return report;

  std::vector<double> y, yhat;
  for (const auto* r : rows) {
    y.push_back(*r->y_true);
    yhat.push_back(*r->pred_mean);
  }
  const PointErrors pe = point_errors(y, yhat);
  report.mae = pe.mae;
  report.rae = pe.rae;
  report.r2 = pe.r2;

  if (has_density) {
    std::vector<double> lower, upper, densities;
    for (const auto* r : rows) {
      lower.push_back(*r->lower95);
      upper.push_back(*r->upper95);
      densities.push_back(*r->log_density);
    }
    report.nlpd = nlpd(densities);
    report.icp = icp(y, lower, upper);
    report.mil = mil(lower, upper);
    report.rmil = rmil(y, yhat, lower, upper);
  }
  return report;
}

void score_pipeline(PipelineResult& result, bool has_density,
                    const std::function<bool(const PredictionRow&)>& eligible) {
  std::vector<const PredictionRow*> all_rows, day_rows;
  std::vector<std::int64_t> ts;
  for (const auto& row : result.rows)
    if (eligible(row)) ts.push_back(row.timestamp);
  const auto day = day_period_mask(ts);
  std::size_t k = 0;
  for (const auto& row : result.rows) {
    if (!eligible(row)) continue;
    all_rows.push_back(&row);
    if (day[k]) day_rows.push_back(&row);
    ++k;
  }
  result.metrics_all = score_rows(all_rows, "all", has_density);
  result.metrics_day = score_rows(day_rows, "day", has_density);
}

void maybe_write_outputs(const RunConfig& cfg, const std::string& place_id,
                         PipelineResult& result) {
  if (cfg.output_dir.empty()) return;
  std::filesystem::create_directories(cfg.output_dir);
  const std::string base = cfg.output_dir + "/predictions_" + result.model + ".csv";
  write_predictions_csv(base, result.rows);
  result.predictions_path = base;
  write_metrics_json(cfg.output_dir + "/metrics_" + result.model + "_all.json", place_id,
                     result.model, result.metrics_all);
  write_metrics_json(cfg.output_dir + "/metrics_" + result.model + "_day.json", place_id,
                     result.model, result.metrics_day);
}

}  // namespace

PipelineResult run_imputation(const RunConfig& cfg, const SpeedSeries& series) {
  validate_model_name(cfg.model, false);
  if (!(cfg.mask_fraction > 0.0 && cfg.mask_fraction < 1.0))
    throw ConfigError("mask_fraction must be in (0,1)");
  if (cfg.block_days < 1) throw ConfigError("block_days must be at least 1");

  const bool premasked =
      std::any_of(series.experiment_mask.begin(), series.experiment_mask.end(),
                  [](std::uint8_t m) { return m != 0; });
  const SpeedSeries masked =
      premasked ? series : mask_random(series, cfg.mask_fraction, cfg.seed);

  const auto blocks = split_blocks(masked, cfg.block_days);
  std::vector<BlockOutput> outputs(blocks.size());

  // Blocks are independent; dispatch across a small worker pool and merge by
  // block index so the output order never depends on scheduling.
  const unsigned workers = std::min<unsigned>(
      std::max(1u, std::thread::hardware_concurrency()), blocks.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= blocks.size()) return;
      try {
        outputs[i] = impute_block(cfg, blocks[i], derive_seed(cfg.seed, i));
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  PipelineResult result;
  result.model = cfg.model;
  for (auto& out : outputs) {
    if (out.skipped) {
      ++result.skipped;
      continue;
    }
    ++result.blocks;
    result.rows.insert(result.rows.end(), out.rows.begin(), out.rows.end());
  }

  const bool has_density = cfg.model != "lin-interp";
  score_pipeline(result, has_density, [](const PredictionRow& row) {
    return row.masked && row.y_true.has_value();
  });
  maybe_write_outputs(cfg, series.place_id, result);
  return result;
}

// ---------------------------------------------------------------------------
// Forecasting
// ---------------------------------------------------------------------------

namespace {

struct ForecastPoint {
  Eigen::Index index;
  double t_day;
  Eigen::VectorXd z;  // standardized noise inputs (empty for gp)
  double y_std;
};

class ForecastEngine {
 public:
  virtual ~ForecastEngine() = default;
  virtual void refit(const std::vector<Eigen::Index>& window, bool first) = 0;
  virtual void add_point(Eigen::Index index) = 0;
  virtual void drop_front() = 0;
  virtual Eigen::Index front_index() const = 0;
  virtual Eigen::Index window_size() const = 0;
  virtual PredictionRow predict(Eigen::Index target) const = 0;
};

// Shared context: raw series, day axis and (for ssrc-hgp) the causal lag rows.
struct ForecastContext {
  const RunConfig& cfg;
  const SpeedSeries& series;
  Eigen::VectorXd t_days;
  LagFeatures lag_features;  // natural speed channels; standardized per refit
  bool use_lags = false;
};

class GpForecastEngine : public ForecastEngine {
 public:
  explicit GpForecastEngine(const ForecastContext& ctx)
      : ctx_(ctx), kernel_(config_kernel_f(ctx.cfg, false)) {}

  void refit(const std::vector<Eigen::Index>& window, bool first) override {
    points_.assign(window.begin(), window.end());
    Eigen::VectorXd y_nat(points_.size());
    Eigen::VectorXd t(points_.size());
    for (std::size_t i = 0; i < points_.size(); ++i) {
      y_nat[i] = ctx_.series.speed[points_[i]];
      t[i] = ctx_.t_days[points_[i]];
    }
    std_y_ = ctx_.cfg.standardize ? Standardizer::estimate(y_nat) : Standardizer::identity();
    y_ = std::deque<double>();
    for (Eigen::Index i = 0; i < y_nat.size(); ++i) y_.push_back(std_y_.apply(y_nat[i]));

    Eigen::VectorXd y_std(y_nat.size());
    for (Eigen::Index i = 0; i < y_nat.size(); ++i) y_std[i] = y_[i];
    ExactGp gp(kernel_, t, y_std);
    fit_with_restarts(gp, fit_options(ctx_.cfg), first ? ctx_.cfg.restarts : 1,
                      gp.params().size(), derive_seed(ctx_.cfg.seed, 31));
    kernel_ = gp.kernel();
    chol_.reset(gram(kernel_, Eigen::MatrixXd(t)));
  }

  void add_point(Eigen::Index index) override {
    const Eigen::VectorXd t_win = window_times();
    Eigen::MatrixXd t_new(1, 1);
    t_new(0, 0) = ctx_.t_days[index];
    const Eigen::VectorXd cross = cross_gram(kernel_, t_win, t_new).col(0);
    const double self = gram_diagonal(kernel_, t_new)[0];
    chol_.append(cross, self);
    points_.push_back(index);
    y_.push_back(std_y_.apply(ctx_.series.speed[index]));
  }

  void drop_front() override {
    chol_.drop_first();
    points_.pop_front();
    y_.pop_front();
  }

  Eigen::Index front_index() const override { return points_.front(); }
  Eigen::Index window_size() const override { return static_cast<Eigen::Index>(points_.size()); }

  PredictionRow predict(Eigen::Index target) const override {
    const Eigen::VectorXd t_win = window_times();
    Eigen::MatrixXd t_new(1, 1);
    t_new(0, 0) = ctx_.t_days[target];
    const Eigen::VectorXd k_star = cross_gram(kernel_, t_win, t_new).col(0);
    Eigen::VectorXd y_vec(y_.size());
    for (std::size_t i = 0; i < y_.size(); ++i) y_vec[i] = y_[i];

    const double k_self = gram_diagonal(kernel_, t_new)[0];
    const double mean = k_star.dot(chol_.solve(y_vec));
    const double var = std::max(k_self - chol_.quad_form(k_star), 1e-15 * k_self);

    PredictionRow row;
    row.timestamp = ctx_.series.timestamps[target];
    if (!ctx_.series.original_missing[target]) row.y_true = ctx_.series.speed[target];
    const PredictiveGaussian pred{mean, var};
    const auto [lo, hi] = pred.interval(kIntervalLevel);
    row.pred_mean = std_y_.invert(mean);
    row.pred_var = var * std_y_.scale * std_y_.scale;
    row.lower95 = std_y_.invert(lo);
    row.upper95 = std_y_.invert(hi);
    if (row.y_true) row.log_density = pred.log_density(std_y_.apply(*row.y_true));
    return row;
  }

 private:
  Eigen::VectorXd window_times() const {
    Eigen::VectorXd t(points_.size());
    for (std::size_t i = 0; i < points_.size(); ++i) t[i] = ctx_.t_days[points_[i]];
    return t;
  }

  const ForecastContext& ctx_;
  KernelSpec kernel_;
  Standardizer std_y_;
  std::deque<Eigen::Index> points_;
  std::deque<double> y_;
  SlidingChol chol_;
};

// Heteroscedastic engine (hgp and ssrc-hgp). Between refits the
// hyperparameters, mu0 and the retained points' variational state are
// frozen; an arriving point enters with lambda = 1/4 and the observation
// variance implied by its predictive noise moments.
class VhgpForecastEngine : public ForecastEngine {
 public:
  explicit VhgpForecastEngine(const ForecastContext& ctx)
      : ctx_(ctx), noise_dim_(ctx.use_lags ? 2 * ctx.cfg.lags : 1) {}

  void refit(const std::vector<Eigen::Index>& window, bool first) override {
    // Carry per-point rho across the refit for overlapping indices.
    std::map<Eigen::Index, double> warm_rho;
    for (std::size_t i = 0; i < points_.size(); ++i)
      warm_rho[points_[i].index] = rho_[i];

    Eigen::VectorXd y_nat(window.size());
    for (std::size_t i = 0; i < window.size(); ++i)
      y_nat[i] = ctx_.series.speed[window[i]];
    std_y_ = ctx_.cfg.standardize ? Standardizer::estimate(y_nat) : Standardizer::identity();

    Eigen::VectorXd t(window.size()), y_std(window.size());
    for (std::size_t i = 0; i < window.size(); ++i) {
      t[i] = ctx_.t_days[window[i]];
      y_std[i] = std_y_.apply(y_nat[i]);
    }
    Eigen::MatrixXd z = window_noise_inputs(window);
    Eigen::VectorXd rho0(window.size());
    for (std::size_t i = 0; i < window.size(); ++i) {
      const auto it = warm_rho.find(window[i]);
      rho0[i] = it == warm_rho.end() ? 0.0 : it->second;
    }

    double mu0;
    KernelSpec kf, kg;
    if (first) {
      const ExactGp prefit = cheap_gp_prefit(ctx_.cfg, t, y_std);
      kf = ctx_.cfg.kernel_f.empty() ? prefit.kernel().without_white_noise()
                                     : config_kernel_f(ctx_.cfg, true);
      kg = config_kernel_g(ctx_.cfg, static_cast<int>(z.cols()));
      mu0 = std::log(std::max(prefit.noise_variance(), 1e-8));
    } else {
      kf = kernel_f_;
      kg = kernel_g_;
      mu0 = mu0_;
    }

    VhgpModel model(kf, kg, t, z, y_std, mu0);
    Eigen::VectorXd params = model.params();
    params.tail(window.size()) = rho0;
    model.set_params(params);
    const Eigen::Index hyper_count = model.param_count() - model.train_size();
    fit_with_restarts(model, fit_options(ctx_.cfg), first ? ctx_.cfg.restarts : 1,
                      hyper_count, derive_seed(ctx_.cfg.seed, 37));

    kernel_f_ = model.kernel_f();
    kernel_g_ = model.kernel_g();
    mu0_ = model.mu0();

    const Eigen::VectorXd lambda = model.lambda();
    const Eigen::VectorXd noise = model.noise_variances();
    points_.clear();
    rho_.clear();
    lambda_.clear();
    for (std::size_t i = 0; i < window.size(); ++i) {
      ForecastPoint p;
      p.index = window[i];
      p.t_day = t[i];
      p.z = z.row(i);
      p.y_std = y_std[i];
      points_.push_back(std::move(p));
      rho_.push_back(model.rho()[i]);
      lambda_.push_back(lambda[i]);
    }

    Eigen::MatrixXd k_f = gram(kernel_f_, t);
    k_f.diagonal() += noise;
    chol_v_.reset(k_f);
    Eigen::MatrixXd k_g = gram(kernel_g_, z);
    k_g.diagonal() += lambda.cwiseInverse();
    chol_a_.reset(k_g);
  }

  void add_point(Eigen::Index index) override {
    Eigen::MatrixXd t_new(1, 1);
    t_new(0, 0) = ctx_.t_days[index];
    Eigen::MatrixXd z_new(1, noise_dim_);
    z_new.row(0) = noise_input(index);

    const auto [t_win, z_win] = window_inputs();
    const Eigen::VectorXd kg_star = cross_gram(kernel_g_, z_win, z_new).col(0);
    const double kg_self = gram_diagonal(kernel_g_, z_new)[0];
    const auto [m_g, v_g] = latent_noise(kg_star, kg_self);
    const double r_new = std::exp(m_g - 0.5 * v_g);
    const double lambda_new = 0.25;

    const Eigen::VectorXd kf_star = cross_gram(kernel_f_, t_win, t_new).col(0);
    const double kf_self = gram_diagonal(kernel_f_, t_new)[0];
    chol_v_.append(kf_star, kf_self + r_new);
    chol_a_.append(kg_star, kg_self + 1.0 / lambda_new);

    ForecastPoint p;
    p.index = index;
    p.t_day = ctx_.t_days[index];
    p.z = z_new.row(0);
    p.y_std = std_y_.apply(ctx_.series.speed[index]);
    points_.push_back(std::move(p));
    rho_.push_back(0.0);
    lambda_.push_back(lambda_new);
  }

  void drop_front() override {
    chol_v_.drop_first();
    chol_a_.drop_first();
    points_.pop_front();
    rho_.pop_front();
    lambda_.pop_front();
  }

  Eigen::Index front_index() const override { return points_.front().index; }
  Eigen::Index window_size() const override { return static_cast<Eigen::Index>(points_.size()); }

  PredictionRow predict(Eigen::Index target) const override {
    Eigen::MatrixXd t_new(1, 1);
    t_new(0, 0) = ctx_.t_days[target];
    Eigen::MatrixXd z_new(1, noise_dim_);
    z_new.row(0) = noise_input(target);
    const auto [t_win, z_win] = window_inputs();

    Eigen::VectorXd y_vec(points_.size());
    for (std::size_t i = 0; i < points_.size(); ++i) y_vec[i] = points_[i].y_std;

    const Eigen::VectorXd kf_star = cross_gram(kernel_f_, t_win, t_new).col(0);
    const double kf_self = gram_diagonal(kernel_f_, t_new)[0];
    LatentPredictive lp;
    lp.mean_f = kf_star.dot(chol_v_.solve(y_vec));
    lp.var_f = std::max(kf_self - chol_v_.quad_form(kf_star), 1e-15 * kf_self);

    const Eigen::VectorXd kg_star = cross_gram(kernel_g_, z_win, z_new).col(0);
    const double kg_self = gram_diagonal(kernel_g_, z_new)[0];
    std::tie(lp.mean_g, lp.var_g) = latent_noise(kg_star, kg_self);

    PredictionRow row;
    row.timestamp = ctx_.series.timestamps[target];
    if (!ctx_.series.original_missing[target]) row.y_true = ctx_.series.speed[target];
    const Moments mom = predict_moments(lp);
    row.pred_mean = std_y_.invert(mom.mean);
    row.pred_var = mom.variance * std_y_.scale * std_y_.scale;
    const auto [lo, hi] =
        predictive_interval(lp, kIntervalLevel, ctx_.cfg.mc_samples,
                            derive_seed(ctx_.cfg.seed, 900'000'000ULL +
                                                           static_cast<std::uint64_t>(target)));
    row.lower95 = std_y_.invert(lo);
    row.upper95 = std_y_.invert(hi);
    if (row.y_true)
      row.log_density =
          predictive_log_density(lp, std_y_.apply(*row.y_true), ctx_.cfg.gh_nodes);
    return row;
  }

 private:
  Eigen::VectorXd noise_input(Eigen::Index index) const {
    if (!ctx_.use_lags) {
      Eigen::VectorXd z(1);
      z << ctx_.t_days[index];
      return z;
    }
    Eigen::VectorXd z = ctx_.lag_features.rows.row(index);
    for (int k = 0; k < ctx_.lag_features.lags; ++k) {
      const int col = ctx_.lag_features.lags + k;
      z[col] = std_y_.apply(z[col]);
    }
    return z;
  }

  Eigen::MatrixXd window_noise_inputs(const std::vector<Eigen::Index>& window) const {
    Eigen::MatrixXd z(window.size(), noise_dim_);
    for (std::size_t i = 0; i < window.size(); ++i) z.row(i) = noise_input(window[i]);
    return z;
  }

  std::pair<Eigen::VectorXd, Eigen::MatrixXd> window_inputs() const {
    Eigen::VectorXd t(points_.size());
    Eigen::MatrixXd z(points_.size(), noise_dim_);
    for (std::size_t i = 0; i < points_.size(); ++i) {
      t[i] = points_[i].t_day;
      z.row(i) = points_[i].z;
    }
    return {std::move(t), std::move(z)};
  }

  std::pair<double, double> latent_noise(const Eigen::VectorXd& kg_star,
                                         double kg_self) const {
    Eigen::VectorXd u(points_.size());
    for (std::size_t i = 0; i < points_.size(); ++i) u[i] = lambda_[i] - 0.5;
    const double m_g = mu0_ + kg_star.dot(u);
    const double v_g = std::max(kg_self - chol_a_.quad_form(kg_star), 0.0);
    return {m_g, v_g};
  }

  const ForecastContext& ctx_;
  int noise_dim_ = 1;
  KernelSpec kernel_f_;
  KernelSpec kernel_g_;
  double mu0_ = 0.0;
  Standardizer std_y_;
  std::deque<ForecastPoint> points_;
  std::deque<double> rho_;
  std::deque<double> lambda_;
  SlidingChol chol_v_;
  SlidingChol chol_a_;
};

}  // namespace

PipelineResult run_forecasting(const RunConfig& cfg, const SpeedSeries& series) {
  validate_model_name(cfg.model, true);
  if (cfg.window_days < 1) throw ConfigError("window_days must be at least 1");
  if (cfg.refit_days < 1) throw ConfigError("refit_days must be at least 1");
  const Eigen::Index n = series.size();
  const Eigen::Index bootstrap_steps =
      static_cast<Eigen::Index>(cfg.bootstrap_days) * kStepsPerDay;
  const Eigen::Index window_steps = static_cast<Eigen::Index>(cfg.window_days) * kStepsPerDay;
  const Eigen::Index refit_steps = static_cast<Eigen::Index>(cfg.refit_days) * kStepsPerDay;
  if (n <= bootstrap_steps)
    throw DataError("run_forecasting: series does not extend past the bootstrap range");

  ForecastContext ctx{cfg, series, {}, {}, cfg.model == "ssrc-hgp"};
  ctx.t_days.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) ctx.t_days[i] = series.time_days(i);
  if (ctx.use_lags) ctx.lag_features = forecast_lag_features(series, cfg.lags);

  std::unique_ptr<ForecastEngine> engine;
  if (cfg.model == "gp")
    engine = std::make_unique<GpForecastEngine>(ctx);
  else
    engine = std::make_unique<VhgpForecastEngine>(ctx);

  auto window_of = [&](Eigen::Index t) {
    std::vector<Eigen::Index> window;
    for (Eigen::Index i = std::max<Eigen::Index>(0, t - window_steps + 1); i <= t; ++i)
      if (!series.original_missing[i]) window.push_back(i);
    return window;
  };

  PipelineResult result;
  result.model = cfg.model;
  const Eigen::Index t0 = bootstrap_steps - 1;
  {
    const auto window = window_of(t0);
    if (window.size() < 10)
      throw DataError("run_forecasting: fewer than 10 observed points in the bootstrap window");
    engine->refit(window, true);
  }
  result.refits = 1;

  for (Eigen::Index t = t0; t + 1 < n; ++t) {
    if (t > t0) {
      while (engine->window_size() > 0 && engine->front_index() <= t - window_steps)
        engine->drop_front();
      if (!series.original_missing[t]) engine->add_point(t);
      if ((t - t0) % refit_steps == 0) {
        const auto window = window_of(t);
        if (window.size() >= 10) {
          engine->refit(window, false);
          ++result.refits;
        } else {
          std::cerr << "warning: refit at " << format_timestamp(series.timestamps[t])
                    << " skipped (" << window.size() << " observed points)\n";
        }
      }
    }
    if (engine->window_size() == 0) {
      std::cerr << "warning: step " << format_timestamp(series.timestamps[t])
                << " skipped (no observed points in window)\n";
      ++result.skipped;
      continue;
    }
    result.rows.push_back(engine->predict(t + 1));
  }

  const bool has_density = true;
  score_pipeline(result, has_density,
                 [](const PredictionRow& row) { return row.y_true.has_value(); });
  maybe_write_outputs(cfg, series.place_id, result);
  return result;
}

// ---------------------------------------------------------------------------
// Comparison
// ---------------------------------------------------------------------------

ComparisonResult compare_models(const RunConfig& cfg, const SpeedSeries& series,
                                const std::vector<std::string>& models) {
  if (models.size() < 2) throw ConfigError("compare_models: need at least two models");
  if (cfg.task != "impute" && cfg.task != "forecast")
    throw ConfigError("compare_models: task must be impute or forecast");

  SpeedSeries shared = series;
  if (cfg.task == "impute") {
    const bool premasked =
        std::any_of(series.experiment_mask.begin(), series.experiment_mask.end(),
                    [](std::uint8_t m) { return m != 0; });
    if (!premasked) shared = mask_random(series, cfg.mask_fraction, cfg.seed);
  }

  ComparisonResult comparison;
  comparison.task = cfg.task;
  for (const auto& model : models) {
    ComparisonEntry entry;
    entry.model = model;
    RunConfig model_cfg = cfg;
    model_cfg.model = model;
    try {
      entry.result = cfg.task == "impute" ? run_imputation(model_cfg, shared)
                                          : run_forecasting(model_cfg, shared);
    } catch (const std::exception& e) {
      entry.failed = true;
      entry.error = e.what();
      std::cerr << "warning: model " << model << " failed: " << e.what() << "\n";
    }
    comparison.entries.push_back(std::move(entry));
  }

  auto pick_best = [&](auto metric, bool day) {
    std::string best;
    double best_value = std::numeric_limits<double>::infinity();
    for (const auto& entry : comparison.entries) {
      if (entry.failed) continue;
      const MetricsReport& report =
          day ? entry.result.metrics_day : entry.result.metrics_all;
      const auto value = metric(report);
      if (value && *value < best_value) {
        best_value = *value;
        best = entry.model;
      }
    }
    return best;
  };
  comparison.best_nlpd_all = pick_best([](const MetricsReport& r) { return r.nlpd; }, false);
  comparison.best_mae_all = pick_best([](const MetricsReport& r) { return r.mae; }, false);
  comparison.best_nlpd_day = pick_best([](const MetricsReport& r) { return r.nlpd; }, true);
  comparison.best_mae_day = pick_best([](const MetricsReport& r) { return r.mae; }, true);

  if (!cfg.output_dir.empty()) {
    std::filesystem::create_directories(cfg.output_dir);
    write_comparison_json(cfg.output_dir + "/comparison.json", comparison);
  }
  return comparison;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace {

nlohmann::json metrics_to_json(const MetricsReport& report) {
  nlohmann::json j;
  j["subset"] = report.subset;
  j["count"] = report.count;
  auto put = [&j](const char* name, const std::optional<double>& v) {
    if (v)
      j[name] = *v;
    else
      j[name] = nullptr;
  };
  put("nlpd", report.nlpd);
  put("icp", report.icp);
  put("mil", report.mil);
  put("rmil", report.rmil);
  put("mae", report.mae);
  put("rae", report.rae);
  put("r2", report.r2);
  return j;
}

}  // namespace

void write_metrics_json(const std::string& path, const std::string& place_id,
                        const std::string& model, const MetricsReport& report) {
  nlohmann::json j = metrics_to_json(report);
  j["place_id"] = place_id;
  j["method"] = model;
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << j.dump(2) << "\n";
}

void write_comparison_json(const std::string& path, const ComparisonResult& comparison) {
  nlohmann::json j;
  j["task"] = comparison.task;
  j["best"] = {{"all", {{"nlpd", comparison.best_nlpd_all}, {"mae", comparison.best_mae_all}}},
               {"day", {{"nlpd", comparison.best_nlpd_day}, {"mae", comparison.best_mae_day}}}};
  j["entries"] = nlohmann::json::array();
  for (const auto& entry : comparison.entries) {
    nlohmann::json e;
    e["model"] = entry.model;
    e["failed"] = entry.failed;
    if (entry.failed) {
      e["error"] = entry.error;
    } else {
      e["all"] = metrics_to_json(entry.result.metrics_all);
      e["day"] = metrics_to_json(entry.result.metrics_day);
    }
    j["entries"].push_back(e);
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << j.dump(2) << "\n";
}

std::string comparison_text_table(const ComparisonResult& comparison) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-10s %-6s %9s %7s %9s %9s %8s %8s %7s\n", "model",
                "subset", "nlpd", "icp", "mil", "rmil", "mae", "rae", "r2");
  out << line;
  auto cell = [](const std::optional<double>& v, const char* fmt) {
    char buf[32];
    if (v)
      std::snprintf(buf, sizeof(buf), fmt, *v);
    else
      std::snprintf(buf, sizeof(buf), "%s", "-");
    return std::string(buf);
  };
  for (const auto& entry : comparison.entries) {
    if (entry.failed) {
      out << entry.model << "  FAILED: " << entry.error << "\n";
      continue;
    }
    for (const MetricsReport* report : {&entry.result.metrics_all, &entry.result.metrics_day}) {
      std::snprintf(line, sizeof(line), "%-10s %-6s %9s %7s %9s %9s %8s %8s %7s\n",
                    entry.model.c_str(), report->subset.c_str(),
                    cell(report->nlpd, "%.4f").c_str(), cell(report->icp, "%.3f").c_str(),
                    cell(report->mil, "%.3f").c_str(), cell(report->rmil, "%.2f").c_str(),
                    cell(report->mae, "%.3f").c_str(), cell(report->rae, "%.2f").c_str(),
                    cell(report->r2, "%.3f").c_str());
      out << line;
    }
  }
  std::string marks;
  if (!comparison.best_nlpd_all.empty())
    marks += "best nlpd (all): " + comparison.best_nlpd_all + "\n";
  if (!comparison.best_mae_all.empty())
    marks += "best mae  (all): " + comparison.best_mae_all + "\n";
  if (!comparison.best_nlpd_day.empty())
    marks += "best nlpd (day): " + comparison.best_nlpd_day + "\n";
  if (!comparison.best_mae_day.empty())
    marks += "best mae  (day): " + comparison.best_mae_day + "\n";
  out << marks;
  return out.str();
}

}  // namespace hgp
