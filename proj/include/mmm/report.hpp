#pragma once

#include <string>
#include <vector>

#include "mmm/curves.hpp"
#include "mmm/trainer.hpp"

namespace mmm {

/// Shortest round-trip decimal form of a double. Every artifact number is
/// written through this one formatter so the HTML report can echo artifact
/// values exactly.
std::string fmt_double(double value);

struct ChannelCurve {
  std::string channel;
  bool fitted = false;
  FittedCurve curve;
  std::string status;  // "ok", "no_convergence", or "degenerate"
  CurveData data;
};

/// Weekly driver totals vs channel contributions (original units, summed
/// across regions), fitted per channel. Channels whose responses are
/// degenerate come back flagged rather than failing the batch.
std::vector<ChannelCurve> fit_all_curves(const TrainedModel& model, const PanelDataset& data);

/// Writes metrics.json, checkpoint.json, dag_edges.csv, contributions.csv,
/// and curves.csv into out_dir (created if needed).
void write_run_artifacts(const TrainedModel& model, const PanelDataset& data,
                         const std::string& out_dir);

void write_metrics_file(const FitReport& report, const std::string& path);
void write_edges_csv(const EdgeList& edges, const std::vector<std::string>& channel_labels,
                     const std::string& path);
void write_contributions_csv(const TrainedModel& model, const PanelDataset& data,
                             const std::string& path);
void write_curves_csv(const std::vector<ChannelCurve>& curves, const std::string& path);

/// Standalone response-curve page: one chart per channel with the observed
/// points and the half-saturation annotation.
void write_curves_html(const std::vector<ChannelCurve>& curves, const std::string& path);

struct ReportOptions {
  bool include_dag = true;
  bool include_curves = true;
};

/// Renders report.html from the artifacts already present in run_dir
/// (metrics.json, dag_edges.csv, contributions.csv, curves.csv). All values
/// shown are the artifact strings themselves; charts are inline SVG with no
/// external references.
void write_report_html(const std::string& run_dir, const ReportOptions& options = {});

}  // namespace mmm
