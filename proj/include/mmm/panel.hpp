#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mmm/numeric.hpp"
#include "mmm/saturation.hpp"

namespace mmm {

/// Rectangular multi-region weekly panel: per-region driver units (spend or
/// impressions), control variables, and the KPI series.
struct PanelDataset {
  std::vector<std::string> region_labels;
  std::vector<std::string> week_index;  // ordered, strictly increasing
  std::vector<std::string> channel_labels;
  std::vector<std::string> control_labels;

  std::vector<Matrix> drivers;        // per region, T x C, nonnegative
  std::vector<Matrix> controls_data;  // per region, T x K
  std::vector<Vector> kpi;            // per region, length T, nonnegative

  int regions() const { return static_cast<int>(region_labels.size()); }
  int weeks() const { return static_cast<int>(week_index.size()); }
  int channels() const { return static_cast<int>(channel_labels.size()); }
  int controls() const { return static_cast<int>(control_labels.size()); }

  /// Checks dimension consistency and sign invariants; throws on violation.
  void validate() const;
};

struct CsvSchema {
  std::string region = "region";
  std::string week = "week";
  std::string kpi = "kpi";
  std::string channel_prefix = "channel_";
  std::string control_prefix = "control_";
};

/// Loads a rectangular panel from CSV. Weeks may be ISO-8601 dates or
/// integer indices; rows are grouped by region and sorted by week. Missing
/// region-week cells, duplicate cells, negative drivers, and unparseable
/// weeks are rejected.
PanelDataset load_csv(const std::string& path, const CsvSchema& schema = {});

/// Writes a panel in the same CSV schema load_csv reads.
void write_csv(const PanelDataset& data, const std::string& path, const CsvSchema& schema = {});

/// Positive divisors and control standardization constants fitted on a panel.
struct ScalingInfo {
  Matrix driver_scale;    // R x C, per region-channel max (1 where max is 0)
  Vector kpi_scale;       // R, per region max (1 where max is 0)
  Vector control_center;  // K, mean over all (r, t)
  Vector control_spread;  // K, population std over all (r, t) (1 where 0)
};

ScalingInfo fit_scaling(const PanelDataset& data);
PanelDataset apply_scaling(const PanelDataset& data, const ScalingInfo& scaling);
PanelDataset invert_scaling(const PanelDataset& data, const ScalingInfo& scaling);

struct SplitSpec {
  int train_weeks = 0;
  int holdout_weeks = 0;
};

/// Splits along time into (first train_weeks, most recent holdout_weeks).
std::pair<PanelDataset, PanelDataset> temporal_split(const PanelDataset& data,
                                                     const SplitSpec& spec);

/// Geometric carryover: out[t] = series[t] + decay * out[t-1].
Vector geometric_adstock(const Vector& series, double decay);

/// Generator configuration with full ground truth: adstock decays, Hill
/// saturation, channel coefficients, and an acyclic dependency matrix among
/// channel drivers (entry (p, c) is the weight of p feeding c).
struct SynthConfig {
  std::uint64_t seed = 0;
  int regions = 10;
  int weeks = 109;
  int channels = 5;
  int controls = 2;
  std::vector<double> adstock_decays;  // per channel, in [0, 1)
  std::vector<HillParams> hill;        // per channel, on [0, 1]-normalized adstock
  std::vector<double> channel_coefs;   // per channel, KPI units per mixed unit
  std::vector<double> control_coefs;   // per control, KPI units per control unit
  Matrix dag;                          // C x C, acyclic; empty means no edges
  double noise_level = 0.05;           // fraction of per-region clean KPI std
  double baseline_low = 200.0;
  double baseline_high = 1000.0;
  double region_scale_low = 0.7;
  double region_scale_high = 1.3;
  double driver_amp_low = 50.0;
  double driver_amp_high = 150.0;
};

/// Everything needed to reconstruct the clean KPI exactly.
struct SynthTruth {
  std::vector<Matrix> adstocked;      // per region, T x C
  std::vector<Matrix> saturated;      // per region, T x C
  std::vector<Matrix> mixed;          // per region, T x C
  std::vector<Matrix> contributions;  // per region, T x C, KPI units
  std::vector<Vector> clean_kpi;      // per region, length T
  Vector baselines;                   // R
  Vector region_scales;               // R
};

std::pair<PanelDataset, SynthTruth> generate_synthetic(const SynthConfig& config);

}  // namespace mmm
