#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mmm/model.hpp"

namespace mmm {

struct TrainConfig {
  int epochs = 2000;
  double learning_rate = 0.01;
  HuberSpec huber{1.0};
  double l1_coef = 1e-4;
  double l2_coef = 1e-4;
  double lambda_w = 0.01;       // L1 sparsity on the DAG weights
  double lambda_dag_fit = 1.0;  // weight of the channel self-regression term
  double clip_norm = 1.0;
  int burn_in = 4;
  int holdout_weeks = 8;
  std::uint64_t seed = 42;
  int dual_update_interval = 200;
  int hidden_size = 16;
  double dag_threshold = 0.1;
  bool learn_low = false;

  void validate(int total_weeks) const;
};

struct Metrics {
  double r2 = 0.0;
  double rmse = 0.0;            // original KPI units
  double relative_error = 0.0;  // rmse / mean KPI
  double mean_kpi = 0.0;
};

/// Pooled fit metrics over all (region, week) pairs, in the units of the
/// series passed in. Throws degenerate when the target has zero variance.
Metrics compute_metrics(const std::vector<Vector>& actual, const std::vector<Vector>& predicted);

struct ChannelSummary {
  std::string channel;
  double total_contribution = 0.0;  // summed over regions and weeks, KPI units
  double share = 0.0;               // of total channel-driven contribution
};

struct FitReport {
  Metrics train;
  Metrics holdout;
  double gap = 0.0;  // train.r2 - holdout.r2
  std::vector<double> loss_history;
  EdgeList edges;
  std::vector<ChannelSummary> channel_summary;
  double final_h = 0.0;
  std::vector<std::string> warnings;
  std::uint64_t seed = 0;
  int epochs = 0;
};

struct LossResult {
  double loss = 0.0;
  Vector grad;
};

/// Composite training objective: mean Huber loss over non-burn-in residuals,
/// L1/L2 on the coefficient-head projection, the augmented-Lagrangian DAG
/// penalty with L1 sparsity, and the channel self-regression data term that
/// identifies the DAG from the scaled drivers. driver_gram is X^T X / N over
/// the pooled scaled train drivers; pass std::nullopt to have it computed.
LossResult composite_loss(const ModelParams& params, const PanelDataset& scaled_train,
                          const TrainConfig& config,
                          const std::optional<Matrix>& driver_gram = std::nullopt);

/// Centered Gram (covariance) matrix of the pooled scaled drivers.
Matrix driver_gram_matrix(const PanelDataset& scaled);

/// A trained model bundled with everything needed to reproduce its outputs.
struct TrainedModel {
  ModelParams params;
  ScalingInfo scaling;
  TrainConfig config;
  FitReport report;
  std::vector<std::string> region_labels, channel_labels, control_labels;
};

/// Full-batch deterministic training: scaling fitted on the train block,
/// adaptive-moment steps with global-norm clipping, and a dual update every
/// dual_update_interval steps. Aborts on non-finite loss with the epoch in
/// the message. Metrics are reported in original KPI units; holdout covers
/// the most recent holdout_weeks with the hidden state warmed through the
/// training weeks.
TrainedModel train(const PanelDataset& data, const TrainConfig& config);

/// Forward pass on a scaled panel followed by pooled metrics over the week
/// range [week_begin, week_end), in original KPI units.
Metrics evaluate(const ModelParams& params, const PanelDataset& scaled,
                 const ScalingInfo& scaling, int burn_in, int week_begin, int week_end);

/// Metrics document with the gap and run identity keys.
std::string metrics_json(const FitReport& report);

void save_checkpoint(const TrainedModel& model, const std::string& path);
TrainedModel load_checkpoint(const std::string& path);

}  // namespace mmm
