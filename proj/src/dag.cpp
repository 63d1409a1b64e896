#include "mmm/dag.hpp"

#include <algorithm>
#include <cmath>

#include "mmm/errors.hpp"

namespace mmm {

DagState DagState::make(int channels, double threshold) {
  require(channels >= 0, ErrorCode::invalid_argument, "DagState: negative channel count");
  DagState state;
  state.w = Matrix::Zero(channels, channels);
  state.threshold = threshold;
  return state;
}

AcyclicityResult acyclicity(const Matrix& w) {
  require(w.rows() == w.cols(), ErrorCode::dimension, "acyclicity: matrix must be square");
  const Eigen::Index n = w.rows();

  const Matrix squared = w.cwiseProduct(w);
  const Matrix e = matrix_exponential(squared);

  AcyclicityResult out;
  out.h = e.trace() - static_cast<double>(n);
  out.grad = e.transpose().cwiseProduct(2.0 * w);
  return out;
}

DagPenaltyResult dag_penalty(const DagState& state, double lambda_w) {
  require(lambda_w >= 0.0, ErrorCode::invalid_argument, "dag_penalty: lambda_w must be nonnegative");
  const AcyclicityResult acy = acyclicity(state.w);

  DagPenaltyResult out;
  out.value = state.alpha * acy.h + 0.5 * state.rho * acy.h * acy.h +
              lambda_w * state.w.cwiseAbs().sum();
  out.grad = (state.alpha + state.rho * acy.h) * acy.grad;
  if (lambda_w > 0.0) {
    out.grad += lambda_w * state.w.unaryExpr([](double v) {
      return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
    });
  }
  return out;
}

void dual_update(DagState& state, double h) {
  require(h >= 0.0, ErrorCode::invalid_argument, "dual_update: h must be nonnegative");
  state.alpha += state.rho * h;
  if (h > 0.25 * state.last_h) {
    state.rho = std::min(state.rho * 10.0, 1e8);
  }
  state.last_h = h;
}

namespace {

// Finds one directed cycle by DFS; returns it as a list of edge indices into
// `edges`, or empty when the graph is acyclic.
std::vector<std::size_t> find_cycle(const EdgeList& edges, int nodes) {
  std::vector<std::vector<std::pair<int, std::size_t>>> adjacency(nodes);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    adjacency[edges[i].source].push_back({edges[i].target, i});
  }

  enum class Color { white, gray, black };
  std::vector<Color> color(nodes, Color::white);
  std::vector<std::size_t> via_edge(nodes, 0);
  std::vector<int> parent(nodes, -1);

  std::vector<std::size_t> cycle;
  std::function<bool(int)> dfs = [&](int node) {
    color[node] = Color::gray;
    for (const auto& [next, edge_index] : adjacency[node]) {
      if (color[next] == Color::gray) {
        // Walk back from node to next to recover the cycle edges.
        cycle.push_back(edge_index);
        int cur = node;
        while (cur != next) {
          cycle.push_back(via_edge[cur]);
          cur = parent[cur];
        }
        return true;
      }
      if (color[next] == Color::white) {
        parent[next] = node;
        via_edge[next] = edge_index;
        if (dfs(next)) return true;
      }
    }
    color[node] = Color::black;
    return false;
  };

  for (int start = 0; start < nodes; ++start) {
    if (color[start] == Color::white && dfs(start)) return cycle;
  }
  return {};
}

}  // namespace

bool edges_acyclic(const EdgeList& edges, int nodes) {
  std::vector<int> indegree(nodes, 0);
  std::vector<std::vector<int>> adjacency(nodes);
  for (const Edge& e : edges) {
    if (e.source == e.target) return false;
    adjacency[e.source].push_back(e.target);
    indegree[e.target] += 1;
  }

  std::vector<int> ready;
  for (int i = 0; i < nodes; ++i) {
    if (indegree[i] == 0) ready.push_back(i);
  }
  int visited = 0;
  while (!ready.empty()) {
    const int node = ready.back();
    ready.pop_back();
    ++visited;
    for (int next : adjacency[node]) {
      if (--indegree[next] == 0) ready.push_back(next);
    }
  }
  return visited == nodes;
}

EdgeList extract_edges(const DagState& state) {
  const int n = static_cast<int>(state.w.rows());
  EdgeList edges;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      if (std::abs(state.w(i, j)) >= state.threshold) {
        edges.push_back({i, j, state.w(i, j)});
      }
    }
  }

  // Any residual cycle loses its weakest edge until a topological order exists.
  while (true) {
    const std::vector<std::size_t> cycle = find_cycle(edges, n);
    if (cycle.empty()) break;
    std::size_t weakest = cycle.front();
    for (std::size_t index : cycle) {
      if (std::abs(edges[index].weight) < std::abs(edges[weakest].weight)) weakest = index;
    }
    edges.erase(edges.begin() + static_cast<std::ptrdiff_t>(weakest));
  }

  std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
    if (std::abs(a.weight) != std::abs(b.weight)) return std::abs(a.weight) > std::abs(b.weight);
    if (a.source != b.source) return a.source < b.source;
    return a.target < b.target;
  });
  return edges;
}

void prune_to_edges(DagState& state) {
  const EdgeList kept = extract_edges(state);
  Matrix pruned = Matrix::Zero(state.w.rows(), state.w.cols());
  for (const Edge& e : kept) pruned(e.source, e.target) = e.weight;
  state.w = pruned;
}

Vector dag_mix(const Vector& activations, const Matrix& w) {
  require(w.rows() == w.cols() && w.rows() == activations.size(), ErrorCode::dimension,
          "dag_mix: size mismatch");
  return activations + w.transpose() * activations;
}

DagState learn_structure(const Matrix& samples, const StructureOptions& options) {
  const Eigen::Index n = samples.rows();
  const Eigen::Index c = samples.cols();
  require(n > 0 && c > 0, ErrorCode::invalid_argument, "learn_structure: empty sample matrix");

  // Center each column and normalize by the pooled scale. Uniform scaling
  // leaves the self-regression weights unchanged while making the sparsity
  // weight meaningful across data magnitudes.
  Matrix centered = samples.rowwise() - samples.colwise().mean();
  const double pooled = std::sqrt(centered.squaredNorm() /
                                  static_cast<double>(n * c));
  if (pooled > 0.0) centered /= pooled;

  const Matrix gram = centered.transpose() * centered / static_cast<double>(n);

  DagState state = DagState::make(static_cast<int>(c), options.threshold);
  Vector flat = Vector::Zero(c * c);

  const auto unflatten = [c](const Vector& v) {
    return Eigen::Map<const Matrix>(v.data(), c, c);
  };

  // Adaptive-moment minimization of the subproblem at the current
  // multiplier/penalty pair; moments restart each solve.
  const auto solve_subproblem = [&](Vector start, int steps) {
    AdamState adam = AdamState::make(c * c, options.learning_rate);
    for (int step = 0; step < steps; ++step) {
      state.w = unflatten(start);
      state.w.diagonal().setZero();

      Matrix grad = gram * (state.w - Matrix::Identity(c, c));
      grad += dag_penalty(state, options.lambda_l1).grad;
      grad.diagonal().setZero();

      Vector flat_grad = Eigen::Map<const Vector>(grad.data(), c * c);
      adam_step(start, flat_grad, adam);
    }
    return start;
  };

  // Orientation phase: a long solve under a fixed mild multiplier leaves
  // every two-cycle with its data-preferred direction dominant before the
  // constraint tightens.
  state.alpha = options.warm_alpha;
  flat = solve_subproblem(flat, options.orientation_steps);

  // Augmented-Lagrangian loop: re-solve under a tenfold larger penalty until
  // the constraint makes real progress, then take the multiplier step.
  double h_accepted = std::numeric_limits<double>::infinity();
  for (int round = 0; round < options.max_rounds; ++round) {
    Vector candidate;
    double h = 0.0;
    while (true) {
      candidate = solve_subproblem(flat, options.steps_per_round);
      state.w = unflatten(candidate);
      state.w.diagonal().setZero();
      h = acyclicity(state.w).h;
      if (h <= 0.25 * h_accepted || state.rho >= 1e8) break;
      state.rho = std::min(state.rho * 10.0, 1e8);
    }
    flat = candidate;
    h_accepted = h;
    state.alpha += state.rho * h;
    state.last_h = h;
    if (h < options.h_tolerance) break;
  }
  state.w = unflatten(flat);
  state.w.diagonal().setZero();

  // Sub-threshold leftovers drop to exact zero; the support is then acyclic.
  prune_to_edges(state);
  return state;
}

}  // namespace mmm
