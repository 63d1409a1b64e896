// Command-line frontend for the mmmkit shared library. Talks to the engine
// exclusively through the C API in mmmkit.h.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "mmmkit.h"

namespace {

namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitTraining = 4;

int exit_code_for(mmm_status status) {
  switch (status) {
    case MMM_OK: return kExitOk;
    case MMM_ERR_INVALID_ARG: return kExitUsage;
    case MMM_ERR_IO:
    case MMM_ERR_PARSE:
    case MMM_ERR_DATA:
    case MMM_ERR_DIMENSION:
    case MMM_ERR_DEGENERATE: return kExitData;
    case MMM_ERR_TRAINING:
    case MMM_ERR_INTERNAL: return kExitTraining;
  }
  return kExitTraining;
}

// Prints the one-line diagnostic and converts the status into an exit code.
int bail(mmm_status status) {
  std::cerr << "error: " << mmm_last_error() << '\n';
  return exit_code_for(status);
}

struct DatasetHandle {
  mmm_dataset* ptr = nullptr;
  ~DatasetHandle() { mmm_dataset_free(ptr); }
};

struct ModelHandle {
  mmm_model* ptr = nullptr;
  ~ModelHandle() { mmm_model_free(ptr); }
};

struct OwnedString {
  char* ptr = nullptr;
  ~OwnedString() { mmm_string_free(ptr); }
};

// Train options mirror the config file keys ([train] table) one to one.
struct TrainFlags {
  std::string data;
  std::string out;
  mmm_train_config config{};
  bool quiet = false;
};

void add_train_config_options(CLI::App* cmd, mmm_train_config& config) {
  cmd->add_option("--epochs", config.epochs, "Training epochs");
  cmd->add_option("--learning_rate", config.learning_rate, "Optimizer step size");
  cmd->add_option("--huber_delta", config.huber_delta, "Huber loss knee (scaled KPI units)");
  cmd->add_option("--l1_coef", config.l1_coef, "L1 weight on the coefficient head");
  cmd->add_option("--l2_coef", config.l2_coef, "L2 weight on the coefficient head");
  cmd->add_option("--lambda_w", config.lambda_w, "L1 sparsity on dependency weights");
  cmd->add_option("--lambda_dag_fit", config.lambda_dag_fit,
                  "Weight of the channel self-regression term");
  cmd->add_option("--clip_norm", config.clip_norm, "Global gradient norm cap");
  cmd->add_option("--burn_in", config.burn_in, "Weeks excluded from the loss while the GRU warms up");
  cmd->add_option("--holdout-weeks,--holdout_weeks", config.holdout_weeks,
                  "Most recent weeks reserved for out-of-sample evaluation");
  cmd->add_option("--seed", config.seed, "Run seed");
  cmd->add_option("--dual_update_interval", config.dual_update_interval,
                  "Steps between multiplier updates");
  cmd->add_option("--hidden_size", config.hidden_size, "GRU hidden width");
  cmd->add_option("--dag_threshold", config.dag_threshold, "Edge magnitude kept in the graph");
  cmd->add_flag("--learn_low", config.learn_low, "Learn the lower coefficient bound");
}

int run_train(const TrainFlags& flags) {
  DatasetHandle data;
  mmm_status status = mmm_dataset_load_csv(flags.data.c_str(), &data.ptr);
  if (status != MMM_OK) return bail(status);
  if (!flags.quiet) {
    std::cout << "loaded " << flags.data << ": " << mmm_dataset_regions(data.ptr) << " regions, "
              << mmm_dataset_weeks(data.ptr) << " weeks, " << mmm_dataset_channels(data.ptr)
              << " channels, " << mmm_dataset_controls(data.ptr) << " controls\n";
  }

  ModelHandle model;
  status = mmm_train(data.ptr, &flags.config, &model.ptr);
  if (status != MMM_OK) return bail(status);

  status = mmm_model_write_artifacts(model.ptr, data.ptr, flags.out.c_str());
  if (status != MMM_OK) return bail(status);

  OwnedString metrics;
  status = mmm_model_metrics_json(model.ptr, &metrics.ptr);
  if (status != MMM_OK) return bail(status);
  if (!flags.quiet) {
    std::cout << metrics.ptr;
    std::cout << "artifacts written to " << flags.out << '\n';
  }
  return kExitOk;
}

std::string checkpoint_path(const std::string& run_dir) {
  return (fs::path(run_dir) / "checkpoint.json").string();
}

int run_evaluate(const std::string& data_path, const std::string& run_dir, int holdout_weeks,
                 bool quiet) {
  ModelHandle model;
  mmm_status status = mmm_model_load(checkpoint_path(run_dir).c_str(), &model.ptr);
  if (status != MMM_OK) return bail(status);

  DatasetHandle data;
  status = mmm_dataset_load_csv(data_path.c_str(), &data.ptr);
  if (status != MMM_OK) return bail(status);

  OwnedString metrics;
  status = mmm_model_evaluate(model.ptr, data.ptr, holdout_weeks, &metrics.ptr);
  if (status != MMM_OK) return bail(status);

  std::cout << metrics.ptr;
  std::ofstream out(fs::path(run_dir) / "evaluation.json");
  if (!out.good()) {
    std::cerr << "error: cannot write evaluation.json in " << run_dir << '\n';
    return kExitData;
  }
  out << metrics.ptr;
  if (!quiet) std::cout << "evaluation written to " << run_dir << "/evaluation.json\n";
  return kExitOk;
}

int run_curves(const std::string& data_path, const std::string& run_dir,
               const std::string& points_path) {
  OwnedString summary;
  mmm_status status;
  if (!points_path.empty()) {
    const char* out_dir = run_dir.empty() ? nullptr : run_dir.c_str();
    status = mmm_fit_curve_csv(points_path.c_str(), out_dir, &summary.ptr);
  } else {
    ModelHandle model;
    status = mmm_model_load(checkpoint_path(run_dir).c_str(), &model.ptr);
    if (status != MMM_OK) return bail(status);
    DatasetHandle data;
    status = mmm_dataset_load_csv(data_path.c_str(), &data.ptr);
    if (status != MMM_OK) return bail(status);
    status = mmm_model_fit_curves(model.ptr, data.ptr, run_dir.c_str(), &summary.ptr);
  }
  if (status != MMM_OK) return bail(status);
  std::cout << summary.ptr;
  return kExitOk;
}

int run_report(const std::string& run_dir, bool quiet) {
  const mmm_status status = mmm_write_report(run_dir.c_str());
  if (status != MMM_OK) return bail(status);
  if (!quiet) std::cout << "report written to " << run_dir << "/report.html\n";
  return kExitOk;
}

int run_synth(const std::string& out_dir, std::uint64_t seed, int regions, int weeks,
              int channels, int controls, double noise, bool quiet) {
  mmm_synth_spec spec{};
  spec.seed = seed;
  spec.regions = regions;
  spec.weeks = weeks;
  spec.channels = channels;
  spec.controls = controls;
  spec.noise_level = noise;

  DatasetHandle data;
  mmm_status status = mmm_dataset_synthetic(&spec, &data.ptr);
  if (status != MMM_OK) return bail(status);

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  const std::string path = (fs::path(out_dir) / "panel.csv").string();
  status = mmm_dataset_write_csv(data.ptr, path.c_str());
  if (status != MMM_OK) return bail(status);
  if (!quiet) {
    std::cout << "synthetic panel written to " << path << " (" << regions << " regions, " << weeks
              << " weeks, " << channels << " channels, " << controls << " controls)\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mmmkit: marketing mix modeling with temporal, structural, and saturation effects"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML config file; a [train] table mirrors the train options");

  TrainFlags train_flags;
  mmm_train_config_default(&train_flags.config);

  auto* train = app.add_subcommand("train", "Train a model from a panel CSV");
  train->fallthrough();
  train->add_option("--data", train_flags.data, "Panel CSV path")->required();
  train->add_option("--out", train_flags.out, "Output run directory")->required();
  add_train_config_options(train, train_flags.config);
  train->add_flag("--quiet", train_flags.quiet, "Suppress progress output");

  std::string eval_data, eval_out;
  int eval_holdout = 0;
  bool eval_quiet = false;
  auto* evaluate = app.add_subcommand("evaluate", "Score a trained run against a panel CSV");
  evaluate->fallthrough();
  evaluate->add_option("--data", eval_data, "Panel CSV path")->required();
  evaluate->add_option("--out", eval_out, "Run directory containing checkpoint.json")->required();
  evaluate->add_option("--holdout-weeks,--holdout_weeks", eval_holdout,
                       "Override the holdout length (0 keeps the trained value)");
  evaluate->add_flag("--quiet", eval_quiet, "Suppress progress output");

  std::string curves_data, curves_out, curves_points;
  bool curves_quiet = false;  // accepted for symmetry; curves always prints its summary
  auto* curves = app.add_subcommand(
      "curves", "Fit Hill response curves per channel from a run, or from a raw x,y CSV");
  curves->fallthrough();
  curves->add_option("--data", curves_data, "Panel CSV path (used with --out)");
  curves->add_option("--out", curves_out, "Run directory with checkpoint.json; receives curve files");
  curves->add_option("--points", curves_points, "Raw two-column x,y CSV to fit directly");
  curves->add_flag("--quiet", curves_quiet, "Suppress progress output");

  std::string report_out;
  bool report_quiet = false;
  auto* report = app.add_subcommand("report", "Render report.html from a completed run directory");
  report->fallthrough();
  report->add_option("--out", report_out, "Run directory with artifacts")->required();
  report->add_flag("--quiet", report_quiet, "Suppress progress output");

  std::string synth_out;
  std::uint64_t synth_seed = 7;
  int synth_regions = 20, synth_weeks = 109, synth_channels = 5, synth_controls = 2;
  double synth_noise = 0.05;
  bool synth_quiet = false;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic demo panel CSV");
  synth->fallthrough();
  synth->add_option("--out", synth_out, "Output directory for panel.csv")->required();
  synth->add_option("--seed", synth_seed, "Generator seed");
  synth->add_option("--regions", synth_regions, "Region count");
  synth->add_option("--weeks", synth_weeks, "Week count");
  synth->add_option("--channels", synth_channels, "Channel count");
  synth->add_option("--controls", synth_controls, "Control count");
  synth->add_option("--noise", synth_noise, "Noise level as a fraction of clean KPI std");
  synth->add_flag("--quiet", synth_quiet, "Suppress progress output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (train->parsed()) return run_train(train_flags);
    if (evaluate->parsed()) return run_evaluate(eval_data, eval_out, eval_holdout, eval_quiet);
    if (curves->parsed()) {
      if (curves_points.empty() && (curves_data.empty() || curves_out.empty())) {
        std::cerr << "error: curves needs either --points, or both --data and --out\n";
        return kExitUsage;
      }
      return run_curves(curves_data, curves_out, curves_points);
    }
    if (report->parsed()) return run_report(report_out, report_quiet);
    if (synth->parsed()) {
      return run_synth(synth_out, synth_seed, synth_regions, synth_weeks, synth_channels,
                       synth_controls, synth_noise, synth_quiet);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitTraining;
  }
  return kExitUsage;
}
