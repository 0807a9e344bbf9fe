#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hgp/datasets.hpp"
#include "hgp/errors.hpp"
#include "hgp/pipelines.hpp"

namespace {

void add_common_flags(CLI::App* cmd, hgp::RunConfig& cfg) {
  cmd->add_option("--input", cfg.input_path, "input speed-series CSV");
  cmd->add_option("--output-dir", cfg.output_dir, "directory for predictions/metrics");
  cmd->add_option("--model", cfg.model, "lin-interp | gp | hgp | ssrc-hgp");
  cmd->add_option("--lags", cfg.lags, "noise-process lag order")->check(CLI::PositiveNumber);
  cmd->add_option("--window-days", cfg.window_days, "forecast window length");
  cmd->add_option("--refit-days", cfg.refit_days, "days between full re-estimations");
  cmd->add_option("--bootstrap-days", cfg.bootstrap_days, "days reserved to bootstrap");
  cmd->add_option("--block-days", cfg.block_days, "imputation block length");
  cmd->add_option("--mask-fraction", cfg.mask_fraction, "fraction of observed points hidden");
  cmd->add_option("--seed", cfg.seed, "run seed");
  cmd->add_option("--gh-nodes", cfg.gh_nodes, "Gauss-Hermite node count");
  cmd->add_option("--mc-samples", cfg.mc_samples, "Monte-Carlo samples per interval");
  cmd->add_option("--restarts", cfg.restarts, "optimizer restarts");
  cmd->add_option("--max-fit-iters", cfg.max_fit_iters, "optimizer iteration cap");
  cmd->add_option("--kernel-f", cfg.kernel_f, "mean-process kernel, e.g. se(1,0.25)+per(1,1,7)+wn(0.1)");
  cmd->add_option("--kernel-g", cfg.kernel_g, "noise-process kernel, e.g. se(1,0.5,0.5,0.5,0.5)+wn(0.01)");
  cmd->add_flag("--no-standardize", [&cfg](std::int64_t) { cfg.standardize = false; },
                "fit on raw speeds instead of standardized targets");
  cmd->set_config("--config", "", "flat key=value file mirroring the flags; flags win");
}

hgp::SpeedSeries load_input(const hgp::RunConfig& cfg) {
  if (cfg.input_path.empty()) throw hgp::ConfigError("--input is required");
  return hgp::read_speed_csv(cfg.input_path);
}

void fail(const std::string& kind, const std::string& message) {
  nlohmann::json j;
  j["error"] = kind;
  j["message"] = message;
  std::cerr << j.dump() << "\n";
}

void print_metrics(const hgp::PipelineResult& result) {
  hgp::ComparisonResult view;
  view.task = "";
  hgp::ComparisonEntry entry;
  entry.model = result.model;
  entry.result = result;
  view.entries.push_back(entry);
  std::cout << hgp::comparison_text_table(view);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaussian-process imputation and forecasting for noisy speed series"};
  app.require_subcommand(1);

  hgp::RunConfig cfg;

  // simulate
  int sim_days = 30;
  std::string sim_place = "synthetic";
  auto* simulate = app.add_subcommand("simulate", "generate a synthetic speed series");
  simulate->add_option("--days", sim_days, "series length in days");
  simulate->add_option("--place-id", sim_place, "place identifier");
  simulate->add_option("--output-dir", cfg.output_dir, "output directory")->required();
  simulate->add_option("--seed", cfg.seed, "generator seed");

  // stats
  auto* stats = app.add_subcommand("stats", "per-decile speed statistics");
  stats->add_option("--input", cfg.input_path, "input CSV")->required();
  stats->add_option("--output-dir", cfg.output_dir, "output directory");

  // impute / forecast / compare
  auto* impute = app.add_subcommand("impute", "imputation experiment on one series");
  add_common_flags(impute, cfg);
  auto* forecast = app.add_subcommand("forecast", "rolling one-step forecast experiment");
  add_common_flags(forecast, cfg);
  auto* compare = app.add_subcommand("compare", "run several models under a shared protocol");
  add_common_flags(compare, cfg);
  compare->add_option("--task", cfg.task, "impute | forecast");

  // plot
  std::string plot_from, plot_to, plot_out = "plot.svg";
  auto* plot = app.add_subcommand("plot", "render a predictions CSV window to SVG");
  plot->add_option("--input", cfg.input_path, "predictions CSV")->required();
  plot->add_option("--from", plot_from, "window start (YYYY-MM-DDTHH:MM:SS)");
  plot->add_option("--to", plot_to, "window end");
  plot->add_option("--output-dir", cfg.output_dir, "output directory");
  plot->add_option("--name", plot_out, "output file name");

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate->parsed()) {
      hgp::SyntheticSpec spec;
      spec.days = sim_days;
      spec.seed = cfg.seed;
      spec.place_id = sim_place;
      const hgp::SyntheticResult result = hgp::generate_synthetic(spec);
      std::filesystem::create_directories(cfg.output_dir);
      const std::string data_path = cfg.output_dir + "/synthetic.csv";
      hgp::write_speed_csv(data_path, result.series);
      hgp::write_ground_truth_csv(cfg.output_dir + "/synthetic_truth.csv", result);
      std::cout << "wrote " << data_path << " (" << result.series.size() << " points)\n";
      return 0;
    }

    if (stats->parsed()) {
      const hgp::SpeedSeries series = hgp::read_speed_csv(cfg.input_path);
      const hgp::DecileNoiseProfile profile = hgp::decile_noise_profile(series);
      nlohmann::json j;
      j["place_id"] = series.place_id;
      j["correlation_decile_vs_sd"] = profile.correlation;
      j["deciles"] = nlohmann::json::array();
      for (const auto& row : profile.rows)
        j["deciles"].push_back({{"decile", row.decile},
                                {"count", row.count},
                                {"mean_speed", row.mean_speed},
                                {"speed_sd", row.speed_sd}});
      std::cout << j.dump(2) << "\n";
      if (!cfg.output_dir.empty()) {
        std::filesystem::create_directories(cfg.output_dir);
        std::ofstream out(cfg.output_dir + "/stats.json");
        out << j.dump(2) << "\n";
      }
      return 0;
    }

    if (impute->parsed()) {
      const auto result = hgp::run_imputation(cfg, load_input(cfg));
      print_metrics(result);
      return 0;
    }

    if (forecast->parsed()) {
      const auto result = hgp::run_forecasting(cfg, load_input(cfg));
      print_metrics(result);
      return 0;
    }

    if (compare->parsed()) {
      std::vector<std::string> models;
      std::stringstream ss(cfg.model);
      std::string tok;
      while (std::getline(ss, tok, ',')) models.push_back(tok);
      const auto comparison = hgp::compare_models(cfg, load_input(cfg), models);
      std::cout << hgp::comparison_text_table(comparison);
      return 0;
    }

    if (plot->parsed()) {
      const auto rows = hgp::read_predictions_csv(cfg.input_path);
      if (rows.empty()) throw hgp::DataError("no prediction rows in " + cfg.input_path);
      const std::int64_t from =
          plot_from.empty() ? rows.front().timestamp : hgp::parse_timestamp(plot_from);
      const std::int64_t to =
          plot_to.empty() ? rows.back().timestamp : hgp::parse_timestamp(plot_to);
      const std::string dir = cfg.output_dir.empty() ? "." : cfg.output_dir;
      std::filesystem::create_directories(dir);
      hgp::emit_plot(rows, from, to, dir + "/" + plot_out);
      std::cout << "wrote " << dir + "/" + plot_out << "\n";
      return 0;
    }
  } catch (const hgp::ConfigError& e) {
    fail("config_error", e.what());
    return 2;
  } catch (const hgp::DataError& e) {
    fail("data_error", e.what());
    return 3;
  } catch (const hgp::NumericalError& e) {
    fail("numerical_error", e.what());
    return 4;
  } catch (const std::exception& e) {
    fail("error", e.what());
    return 1;
  }
  return 0;
}
