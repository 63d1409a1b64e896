#include "mmmkit.h"

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "mmm/errors.hpp"
#include "mmm/report.hpp"

struct mmm_dataset {
  mmm::PanelDataset data;
};

struct mmm_model {
  mmm::TrainedModel bundle;
};

namespace {

thread_local std::string g_last_error = "ok";

mmm_status set_error(mmm_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

mmm_status status_of(mmm::ErrorCode code) {
  switch (code) {
    case mmm::ErrorCode::invalid_argument: return MMM_ERR_INVALID_ARG;
    case mmm::ErrorCode::io: return MMM_ERR_IO;
    case mmm::ErrorCode::parse: return MMM_ERR_PARSE;
    case mmm::ErrorCode::data: return MMM_ERR_DATA;
    case mmm::ErrorCode::dimension: return MMM_ERR_DIMENSION;
    case mmm::ErrorCode::training: return MMM_ERR_TRAINING;
    case mmm::ErrorCode::degenerate: return MMM_ERR_DEGENERATE;
  }
  return MMM_ERR_INTERNAL;
}

template <typename Fn>
mmm_status wrap(Fn&& fn) {
  try {
    fn();
    return MMM_OK;
  } catch (const mmm::Error& e) {
    return set_error(status_of(e.code()), e.what());
  } catch (const std::exception& e) {
    return set_error(MMM_ERR_INTERNAL, e.what());
  } catch (...) {
    return set_error(MMM_ERR_INTERNAL, "unknown error");
  }
}

char* dup_string(const std::string& text) {
  char* out = static_cast<char*>(std::malloc(text.size() + 1));
  if (!out) return nullptr;
  std::memcpy(out, text.c_str(), text.size() + 1);
  return out;
}

mmm::TrainConfig to_core(const mmm_train_config& c) {
  mmm::TrainConfig out;
  out.epochs = c.epochs;
  out.learning_rate = c.learning_rate;
  out.huber.delta = c.huber_delta;
  out.l1_coef = c.l1_coef;
  out.l2_coef = c.l2_coef;
  out.lambda_w = c.lambda_w;
  out.lambda_dag_fit = c.lambda_dag_fit;
  out.clip_norm = c.clip_norm;
  out.burn_in = c.burn_in;
  out.holdout_weeks = c.holdout_weeks;
  out.seed = c.seed;
  out.dual_update_interval = c.dual_update_interval;
  out.hidden_size = c.hidden_size;
  out.dag_threshold = c.dag_threshold;
  out.learn_low = c.learn_low != 0;
  return out;
}

// Metrics recomputation for models restored from a checkpoint, where the
// training-time report is not persisted.
void ensure_report(mmm::TrainedModel& bundle, const mmm::PanelDataset& data) {
  if (!bundle.report.loss_history.empty() || bundle.report.train.mean_kpi > 0.0) return;
  const mmm::PanelDataset scaled = mmm::apply_scaling(data, bundle.scaling);
  const int train_weeks = data.weeks() - bundle.config.holdout_weeks;
  bundle.report.train = mmm::evaluate(bundle.params, scaled, bundle.scaling,
                                      bundle.config.burn_in, bundle.config.burn_in, train_weeks);
  bundle.report.holdout = mmm::evaluate(bundle.params, scaled, bundle.scaling,
                                        bundle.config.burn_in, train_weeks, data.weeks());
  bundle.report.gap = bundle.report.train.r2 - bundle.report.holdout.r2;
  bundle.report.final_h = mmm::acyclicity(bundle.params.dag.w).h;
  bundle.report.edges = mmm::extract_edges(bundle.params.dag);
  bundle.report.seed = bundle.config.seed;
  bundle.report.epochs = bundle.config.epochs;
}

std::string curve_summary_text(const std::vector<mmm::ChannelCurve>& curves) {
  std::ostringstream out;
  for (const mmm::ChannelCurve& entry : curves) {
    if (entry.fitted) {
      out << entry.channel << ": slope " << mmm::fmt_double(entry.curve.slope) << ", saturation "
          << mmm::fmt_double(entry.curve.saturation);
      if (entry.status != "ok") out << " [" << entry.status << "]";
      out << '\n';
    } else {
      out << entry.channel << ": no curve fitted [" << entry.status << "]\n";
    }
  }
  return out.str();
}

}  // namespace

extern "C" {

const char* mmm_last_error(void) { return g_last_error.c_str(); }

mmm_status mmm_dataset_load_csv(const char* path, mmm_dataset** out) {
  if (!path || !out) return set_error(MMM_ERR_INVALID_ARG, "null argument");
  return wrap([&] {
    auto handle = std::make_unique<mmm_dataset>();
    handle->data = mmm::load_csv(path);
    *out = handle.release();
  });
}

mmm_status mmm_dataset_write_csv(const mmm_dataset* data, const char* path) {
  if (!data || !path) return set_error(MMM_ERR_INVALID_ARG, "null argument");
  return wrap([&] { mmm::write_csv(data->data, path); });
}

void mmm_dataset_free(mmm_dataset* data) { delete data; }

int mmm_dataset_regions(const mmm_dataset* data) { return data ? data->data.regions() : 0; }
int mmm_dataset_weeks(const mmm_dataset* data) { return data ? data->data.weeks() : 0; }
int mmm_dataset_channels(const mmm_dataset* data) { return data ? data->data.channels() : 0; }
int mmm_dataset_controls(const mmm_dataset* data) { return data ? data->data.controls() : 0; }

mmm_status mmm_dataset_synthetic(const mmm_synth_spec* spec, mmm_dataset** out) {
  if (!spec || !out) return set_error(MMM_ERR_INVALID_ARG, "null argument");
  return wrap([&] {
    mmm::SynthConfig config;
    config.seed = spec->seed;
    config.regions = spec->regions;
    config.weeks = spec->weeks;
    config.channels = spec->channels;
    config.controls = spec->controls;
    config.noise_level = spec->noise_level;
    const int c = spec->channels;
    if (spec->decays) config.adstock_decays.assign(spec->decays, spec->decays + c);
    if (spec->hill_slopes && spec->hill_halfsat) {
      for (int i = 0; i < c; ++i) {
        config.hill.push_back({spec->hill_slopes[i], spec->hill_halfsat[i]});
      }
    }
    if (spec->coefs) config.channel_coefs.assign(spec->coefs, spec->coefs + c);
    if (spec->dag) {
      config.dag = mmm::Matrix(c, c);
      for (int i = 0; i < c; ++i) {
        for (int j = 0; j < c; ++j) config.dag(i, j) = spec->dag[i * c + j];
      }
    }
    auto handle = std::make_unique<mmm_dataset>();
    handle->data = mmm::generate_synthetic(config).first;
    *out = handle.release();
  });
}

void mmm_train_config_default(mmm_train_config* config) {
  if (!config) return;
  const mmm::TrainConfig d;
  config->epochs = d.epochs;
  config->learning_rate = d.learning_rate;
  config->huber_delta = d.huber.delta;
  config->l1_coef = d.l1_coef;
  config->l2_coef = d.l2_coef;
  config->lambda_w = d.lambda_w;
  config->lambda_dag_fit = d.lambda_dag_fit;
  config->clip_norm = d.clip_norm;
  config->burn_in = d.burn_in;
  config->holdout_weeks = d.holdout_weeks;
  config->seed = d.seed;
  config->dual_update_interval = d.dual_update_interval;
  config->hidden_size = d.hidden_size;
  config->dag_threshold = d.dag_threshold;
  config->learn_low = d.learn_low ? 1 : 0;
}

mmm_status mmm_train(const mmm_dataset* data, const mmm_train_config* config, mmm_model** out) {
  if (!data || !config || !out) return set_error(MMM_ERR_INVALID_ARG, "null argument");
  return wrap([&] {
    auto handle = std::make_unique<mmm_model>();
    handle->bundle = mmm::train(data->data, to_core(*config));
    *out = handle.release();
  });
}

mmm_status mmm_model_save(const mmm_model* model, const char* path) {
  if (!model || !path) return set_error(MMM_ERR_INVALID_ARG, "null argument");
  return wrap([&] { mmm::save_checkpoint(model->bundle, path); });
}

mmm_status mmm_model_load(const char* path, mmm_model** out) {
  if (!path || !out) return set_error(MMM_ERR_INVALID_ARG, "null argument");
  return wrap([&] {
    auto handle = std::make_unique<mmm_model>();
    handle->bundle = mmm::load_checkpoint(path);
    *out = handle.release();
  });
}

void mmm_model_free(mmm_model* model) { delete model; }

mmm_status mmm_model_metrics_json(const mmm_model* model, char** out) {
  if (!model || !out) return set_error(MMM_ERR_INVALID_ARG, "null argument");
  return wrap([&] {
    *out = dup_string(mmm::metrics_json(model->bundle.report));
    if (!*out) mmm::fail(mmm::ErrorCode::io, "allocation failure");
  });
}

mmm_status mmm_model_evaluate(const mmm_model* model, const mmm_dataset* data, int holdout_weeks,
                              char** out) {
  if (!model || !data || !out) return set_error(MMM_ERR_INVALID_ARG, "null argument");
  return wrap([&] {
    const mmm::TrainedModel& bundle = model->bundle;
    const int holdout = holdout_weeks > 0 ? holdout_weeks : bundle.config.holdout_weeks;
    mmm::require(holdout < data->data.weeks(), mmm::ErrorCode::invalid_argument,
                 "evaluate: holdout_weeks must leave at least one training week");
    const mmm::PanelDataset scaled = mmm::apply_scaling(data->data, bundle.scaling);
    const int train_weeks = data->data.weeks() - holdout;
    const int burn_in = std::min(bundle.config.burn_in, train_weeks - 1);

    mmm::FitReport report;
    report.train =
        mmm::evaluate(bundle.params, scaled, bundle.scaling, burn_in, burn_in, train_weeks);
    report.holdout = mmm::evaluate(bundle.params, scaled, bundle.scaling, burn_in, train_weeks,
                                   data->data.weeks());
    report.gap = report.train.r2 - report.holdout.r2;
    report.seed = bundle.config.seed;
    report.epochs = bundle.config.epochs;
    *out = dup_string(mmm::metrics_json(report));
    if (!*out) mmm::fail(mmm::ErrorCode::io, "allocation failure");
  });
}

mmm_status mmm_model_write_artifacts(const mmm_model* model, const mmm_dataset* data,
                                     const char* out_dir) {
  if (!model || !data || !out_dir) return set_error(MMM_ERR_INVALID_ARG, "null argument");
  return wrap([&] {
    mmm::TrainedModel bundle = model->bundle;
    ensure_report(bundle, data->data);
    mmm::write_run_artifacts(bundle, data->data, out_dir);
  });
}

mmm_status mmm_model_fit_curves(const mmm_model* model, const mmm_dataset* data,
                                const char* out_dir, char** summary_out) {
  if (!model || !data) return set_error(MMM_ERR_INVALID_ARG, "null argument");
  return wrap([&] {
    const std::vector<mmm::ChannelCurve> curves =
        mmm::fit_all_curves(model->bundle, data->data);
    bool any_fitted = false;
    for (const mmm::ChannelCurve& entry : curves) any_fitted = any_fitted || entry.fitted;
    mmm::require(any_fitted, mmm::ErrorCode::degenerate,
                 "fit_curves: every channel is degenerate");
    if (out_dir) {
      std::filesystem::create_directories(out_dir);
      const std::filesystem::path dir(out_dir);
      mmm::write_curves_csv(curves, (dir / "curves.csv").string());
      mmm::write_curves_html(curves, (dir / "curves.html").string());
    }
    if (summary_out) {
      *summary_out = dup_string(curve_summary_text(curves));
      if (!*summary_out) mmm::fail(mmm::ErrorCode::io, "allocation failure");
    }
  });
}

mmm_status mmm_fit_curve_csv(const char* points_csv, const char* out_dir, char** summary_out) {
  if (!points_csv) return set_error(MMM_ERR_INVALID_ARG, "null argument");
  return wrap([&] {
    std::ifstream file(points_csv);
    mmm::require(file.good(), mmm::ErrorCode::io,
                 std::string("cannot open ") + points_csv);
    mmm::ChannelCurve entry;
    entry.channel = std::filesystem::path(points_csv).stem().string();
    entry.data.level = "Overall";
    std::string line;
    while (std::getline(file, line)) {
      while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
      if (line.empty()) continue;
      const std::size_t comma = line.find(',');
      mmm::require(comma != std::string::npos, mmm::ErrorCode::parse,
                   "points CSV must have two comma-separated columns");
      char* end = nullptr;
      const std::string first = line.substr(0, comma);
      const std::string second = line.substr(comma + 1);
      const double x = std::strtod(first.c_str(), &end);
      if (end != first.c_str() + first.size()) continue;  // header row
      const double y = std::strtod(second.c_str(), &end);
      if (end != second.c_str() + second.size()) continue;
      entry.data.points.push_back({x, y});
    }
    entry.curve = mmm::fit_curve(entry.data);
    entry.fitted = true;
    entry.status = entry.curve.converged ? "ok" : "no_convergence";

    if (out_dir) {
      std::filesystem::create_directories(out_dir);
      const std::filesystem::path dir(out_dir);
      mmm::write_curves_csv({entry}, (dir / "curves.csv").string());
      mmm::write_curves_html({entry}, (dir / "curves.html").string());
    }
    if (summary_out) {
      *summary_out = dup_string(curve_summary_text({entry}));
      if (!*summary_out) mmm::fail(mmm::ErrorCode::io, "allocation failure");
    }
  });
}

mmm_status mmm_write_report(const char* run_dir) {
  if (!run_dir) return set_error(MMM_ERR_INVALID_ARG, "null argument");
  return wrap([&] { mmm::write_report_html(run_dir); });
}

void mmm_string_free(char* text) { std::free(text); }

} /* extern "C" */
