#pragma once

#include <limits>
#include <vector>

#include "mmm/numeric.hpp"

namespace mmm {

/// Weighted adjacency over channels plus the augmented-Lagrangian
/// bookkeeping used to drive the acyclicity constraint to zero.
struct DagState {
  Matrix w;  // C x C edge weights, diagonal structurally zero
  double alpha = 0.0;
  double rho = 1.0;
  double threshold = 0.1;  // edge-pruning magnitude
  double last_h = std::numeric_limits<double>::infinity();

  static DagState make(int channels, double threshold = 0.1);
};

struct Edge {
  int source = 0;
  int target = 0;
  double weight = 0.0;
};

using EdgeList = std::vector<Edge>;

struct AcyclicityResult {
  double h = 0.0;
  Matrix grad;  // dh/dW
};

/// Acyclicity measure h(W) = trace(exp(W o W)) - C with its gradient
/// (exp(W o W))^T o 2W. Zero exactly when the weighted graph is acyclic.
AcyclicityResult acyclicity(const Matrix& w);

struct DagPenaltyResult {
  double value = 0.0;
  Matrix grad;  // dPenalty/dW
};

/// Augmented-Lagrangian penalty alpha h + (rho/2) h^2 plus an L1 sparsity
/// term lambda_w sum |w_ij| (subgradient zero at zero).
DagPenaltyResult dag_penalty(const DagState& state, double lambda_w);

/// Multiplier/penalty schedule: alpha += rho h; rho escalates tenfold when h
/// failed to shrink by at least 4x since the previous update, capped at 1e8.
void dual_update(DagState& state, double h);

/// Thresholds |w_ij| >= threshold and breaks any residual cycles by dropping
/// the smallest-magnitude edge in each, so the result always passes a
/// topological sort. Sorted by |weight| descending.
EdgeList extract_edges(const DagState& state);

/// Restricts W to the support of extract_edges(state): sub-threshold entries
/// and cycle-broken leftovers drop to exact zero, so the retained matrix is
/// acyclic by construction.
void prune_to_edges(DagState& state);

/// True when the edge set over n nodes has a topological order.
bool edges_acyclic(const EdgeList& edges, int nodes);

/// One-hop parent propagation: s + W^T s.
Vector dag_mix(const Vector& activations, const Matrix& w);

struct StructureOptions {
  double lambda_l1 = 0.05;
  double learning_rate = 0.03;
  double warm_alpha = 0.3;       // fixed multiplier during the orientation phase
  int orientation_steps = 20000;
  int steps_per_round = 2000;
  int max_rounds = 30;
  double h_tolerance = 1e-10;
  double threshold = 0.1;
};

/// Learns a weighted DAG from an N x C sample matrix by minimizing the
/// least-squares self-regression ||X - XW||^2 / 2N with L1 sparsity under
/// the acyclicity constraint. A long fixed-multiplier phase orients edges,
/// an augmented-Lagrangian loop with subproblem re-solves under escalating
/// rho drives the constraint down, and the result is pruned to its
/// thresholded acyclic support. Deterministic; W starts at zero.
DagState learn_structure(const Matrix& samples, const StructureOptions& options = {});

}  // namespace mmm
