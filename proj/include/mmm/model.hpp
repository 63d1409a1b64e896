#pragma once

#include <cstdint>
#include <vector>

#include "mmm/dag.hpp"
#include "mmm/panel.hpp"
#include "mmm/saturation.hpp"

namespace mmm {

/// Gate weights for a single GRU layer. Convention:
///   z = sigmoid(Wz x + Uz h + bz)
///   r = sigmoid(Wr x + Ur h + br)
///   n = tanh(Wn x + Un (r o h) + bn)
///   h' = (1 - z) o n + z o h
struct GruParams {
  Matrix wz, uz;
  Vector bz;
  Matrix wr, ur;
  Vector br;
  Matrix wn, un;
  Vector bn;

  int input_size() const { return static_cast<int>(wz.cols()); }
  int hidden_size() const { return static_cast<int>(wz.rows()); }
};

/// One GRU step; hidden entries stay in (-1, 1) when the previous ones do.
Vector gru_cell(const Vector& x, const Vector& h_prev, const GruParams& p);

/// Projects the hidden state onto per-channel coefficients squashed between
/// learnable bounds: beta = low + (high - low) o sigmoid(P h + bias).
/// By default low is pinned at zero (nonnegative channel effects); the gap
/// high - low is softplus(high_raw) + 1e-3 so low < high always holds.
struct CoefficientHead {
  Matrix projection;  // C x H
  Vector bias;        // C
  Vector low_raw;     // C, used only when learn_low
  Vector high_raw;    // C
  bool learn_low = false;

  Vector low() const;
  Vector gap() const;
  Vector high() const;
};

struct RegionParams {
  Vector baseline;   // R, scaled KPI units
  Vector scale_raw;  // R

  /// Positive per-region scaling gamma = softplus(scale_raw) + 1e-3.
  Vector gamma() const;
};

struct ModelDims {
  int regions = 0;
  int channels = 0;
  int controls = 0;
  int hidden = 0;

  int gru_input() const { return channels + controls; }
};

/// Full parameter set. flatten()/set_flat() round-trip losslessly; the flat
/// layout is the concatenation, in order, of
///   wz uz bz wr ur br wn un bn | projection bias low_raw high_raw |
///   baseline scale_raw | hill (a_raw, g_raw per channel) | dag W |
///   control_coefs
/// with matrices traversed in Eigen's storage order.
struct ModelParams {
  GruParams gru;
  CoefficientHead head;
  RegionParams region;
  std::vector<HillRaw> hill;  // per channel
  DagState dag;
  Vector control_coefs;  // K
  std::uint64_t seed = 0;

  ModelDims dims() const;
  Eigen::Index parameter_count() const;
  Vector flatten() const;
  void set_flat(const Vector& flat);
};

/// Seeded initialization: GRU and head weights uniform in +-1/sqrt(fan_in),
/// biases zero, baselines at each region's mean scaled KPI, gamma at 1,
/// Hill at (a ~ 2.69, g = 0.5), W at zero.
ModelParams init_params(const ModelDims& dims, const PanelDataset& scaled_train,
                        std::uint64_t seed, double dag_threshold, bool learn_low = false);

struct RegionTrace {
  Matrix saturated;  // T x C
  Matrix mixed;      // T x C
  Matrix hidden;     // T x H
  Matrix gate_z, gate_r, gate_n;  // T x H
  Matrix head_sig;   // T x C, sigmoid(P h + bias)
  Matrix beta;       // T x C
  Vector prediction;  // T, scaled KPI
};

struct ForwardTrace {
  std::vector<RegionTrace> region;
  int burn_in = 0;
};

/// Full forward pass over a scaled panel: Hill saturation, DAG mixing, GRU
/// over time from a zero hidden state, bounded coefficients, and the additive
/// prediction baseline + gamma_r sum_c beta mixed + sum_k control effects.
/// Weeks before burn_in are flagged for loss masking only; predictions are
/// produced for every week.
ForwardTrace forward(const ModelParams& params, const PanelDataset& scaled, int burn_in);

/// Exact reverse-mode gradient of sum_{r,t} upstream[r][t] * prediction[r][t]
/// with respect to the flattened parameters. upstream must carry zeros for
/// weeks excluded from the loss.
Vector backward(const ModelParams& params, const PanelDataset& scaled,
                const ForwardTrace& trace, const std::vector<Vector>& upstream);

/// Additive decomposition in original KPI units.
struct Contributions {
  std::vector<Matrix> channel;  // per region, T x C
  std::vector<Matrix> control;  // per region, T x K
  Vector baseline;              // per region constant
  std::vector<Vector> prediction;  // per region, length T
};

Contributions decompose_contributions(const ModelParams& params, const ForwardTrace& trace,
                                      const ScalingInfo& scaling, const PanelDataset& scaled);

}  // namespace mmm
