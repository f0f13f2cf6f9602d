#pragma once

// Sample graphs: symmetric kNN construction, edge weights in log space and
// Dijkstra shortest paths.

#include "fermat/density.hpp"
#include "fermat/geometry.hpp"
#include "fermat/kdtree.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <queue>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace fermat {

/// Undirected graph over sample points with compressed neighbor lists.
/// Neighbor lists are sorted by node index; every edge is stored in both
/// directions with the same weight.
class KnnGraph {
public:
  KnnGraph(Matrix nodes, std::vector<std::size_t> offsets, std::vector<std::size_t> neighbors,
           std::vector<double> log_weights = {})
      : nodes_(std::move(nodes)), offsets_(std::move(offsets)), neighbors_(std::move(neighbors)),
        log_weights_(std::move(log_weights)) {
    if (offsets_.size() != static_cast<std::size_t>(nodes_.cols()) + 1 || offsets_.back() != neighbors_.size())
      throw Error("KnnGraph: inconsistent adjacency");
    if (!log_weights_.empty() && log_weights_.size() != neighbors_.size())
      throw Error("KnnGraph: weight count does not match edge count");
  }

  std::size_t size() const { return static_cast<std::size_t>(nodes_.cols()); }
  Eigen::Index dim() const { return nodes_.rows(); }
  const Matrix &nodes() const { return nodes_; }
  Vector node(std::size_t i) const { return nodes_.col(static_cast<Eigen::Index>(i)); }

  /// Number of undirected edges.
  std::size_t edge_count() const { return neighbors_.size() / 2; }
  bool weighted() const { return !log_weights_.empty(); }

  std::span<const std::size_t> neighbors(std::size_t i) const {
    return {neighbors_.data() + offsets_[i], offsets_[i + 1] - offsets_[i]};
  }
  std::span<const double> log_weights(std::size_t i) const {
    if (!weighted())
      throw Error("KnnGraph: graph has no weights");
    return {log_weights_.data() + offsets_[i], offsets_[i + 1] - offsets_[i]};
  }

  bool has_edge(std::size_t l, std::size_t m) const { return slot(l, m) != npos; }

  double edge_log_weight(std::size_t l, std::size_t m) const {
    const std::size_t s = slot(l, m);
    if (s == npos)
      throw Error("KnnGraph: no edge " + std::to_string(l) + "-" + std::to_string(m));
    if (!weighted())
      throw Error("KnnGraph: graph has no weights");
    return log_weights_[s];
  }

  const std::vector<std::size_t> &offsets() const { return offsets_; }
  const std::vector<std::size_t> &adjacency() const { return neighbors_; }
  const std::vector<double> &all_log_weights() const { return log_weights_; }

  /// Same topology, new per-slot weights.
  KnnGraph with_weights(std::vector<double> log_weights) const {
    return KnnGraph(nodes_, offsets_, neighbors_, std::move(log_weights));
  }

private:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  std::size_t slot(std::size_t l, std::size_t m) const {
    const auto nb = neighbors(l);
    const auto it = std::lower_bound(nb.begin(), nb.end(), m);
    if (it == nb.end() || *it != m)
      return npos;
    return offsets_[l] + static_cast<std::size_t>(it - nb.begin());
  }

  Matrix nodes_;
  std::vector<std::size_t> offsets_;
  std::vector<std::size_t> neighbors_;
  std::vector<double> log_weights_;
};

/// Links every node (column of `data`) to its k exact Euclidean nearest
/// neighbors, then symmetrizes by union. Ties go to the smaller index.
inline KnnGraph build_knn(Matrix data, std::size_t k) {
  const std::size_t n = static_cast<std::size_t>(data.cols());
  if (k < 1 || k >= n)
    throw Error("build_knn: need 1 <= k < n (k = " + std::to_string(k) + ", n = " + std::to_string(n) + ")");
  if (!data.allFinite())
    throw Error("build_knn: data must be finite");
  std::vector<std::vector<std::size_t>> adj(n);
  {
    const KdTree tree(data);
    for (std::size_t l = 0; l < n; ++l) {
      for (const Neighbor &nb : tree.knn(data.col(static_cast<Eigen::Index>(l)), k, l)) {
        adj[l].push_back(nb.index);
        adj[nb.index].push_back(l);
      }
    }
  }
  std::vector<std::size_t> offsets(n + 1, 0), flat;
  for (std::size_t l = 0; l < n; ++l) {
    auto &a = adj[l];
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
    offsets[l + 1] = offsets[l] + a.size();
  }
  flat.reserve(offsets.back());
  for (auto &a : adj)
    flat.insert(flat.end(), a.begin(), a.end());
  return KnnGraph(std::move(data), std::move(offsets), std::move(flat));
}

/// max(10, ceil(2 e log n)).
inline std::size_t default_k(std::size_t n) {
  const double k = std::ceil(2.0 * std::numbers::e * std::log(static_cast<double>(std::max<std::size_t>(n, 2))));
  return std::max<std::size_t>(10, static_cast<std::size_t>(k));
}

/// max(10, ceil(sqrt n)). Grows fast enough for density-weighted paths to
/// keep converging as n increases; the log rule saturates.
inline std::size_t sqrt_k(std::size_t n) {
  return std::max<std::size_t>(10, static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n)))));
}

// ---------------------------------------------------------------------------
// Edge weights (all log domain)

/// (beta d + 1) log |x1 - x2|: the power-weighted surrogate.
inline double power_edge_log_weight(const Vector &x1, const Vector &x2, double beta, int intrinsic_dim) {
  const double dist = (x1 - x2).norm();
  if (dist == 0.0)
    throw Error("power_edge_log_weight: zero-length edge");
  return (beta * intrinsic_dim + 1.0) * std::log(dist);
}

/// log(|x1 - x2| / S * sum_i p(y_{i-1/2})^-beta) with y_{i-1/2} the midpoints of
/// S equal pieces of the chord.
inline double density_edge_log_weight(const Vector &x1, const Vector &x2, const DensityModel &model, double beta,
                                      int segments = 8) {
  if (segments < 1)
    throw Error("density_edge_log_weight: segments must be >= 1");
  const double dist = (x1 - x2).norm();
  if (dist == 0.0)
    return kNegInf;
  const Vector delta = (x2 - x1) / segments;
  LogSumAccumulator acc;
  Vector y(x1.size());
  for (int i = 1; i <= segments; ++i) {
    y = x1 + (i - 0.5) * delta;
    const double lp = model.log_density(y);
    if (!std::isfinite(lp))
      throw NonFiniteError("density_edge_log_weight: non-finite log density", y);
    acc.add(-beta * lp);
  }
  return std::log(dist / segments) + acc.value();
}

/// How endpoint densities combine into a midpoint estimate p~.
enum class NnCombine { InverseOfMean, MeanOfInverse, Max, Min };

inline const char *to_string(NnCombine kind) {
  switch (kind) {
  case NnCombine::InverseOfMean:
    return "inverse_of_mean";
  case NnCombine::MeanOfInverse:
    return "mean_of_inverse";
  case NnCombine::Max:
    return "max";
  case NnCombine::Min:
    return "min";
  }
  return "?";
}

inline NnCombine parse_nn_combine(const std::string &name) {
  for (NnCombine k : {NnCombine::InverseOfMean, NnCombine::MeanOfInverse, NnCombine::Max, NnCombine::Min})
    if (name == to_string(k))
      return k;
  throw Error("unknown nearest-neighbor combination '" + name + "'");
}

/// log p~ from log p(X_l), log p(X_m).
inline double combine_log_densities(NnCombine kind, double a, double b) {
  switch (kind) {
  case NnCombine::InverseOfMean: // p~ = (p_l + p_m) / 2
    return log_add(a, b) - std::numbers::ln2;
  case NnCombine::MeanOfInverse: // 1/p~ = (1/p_l + 1/p_m) / 2
    return -(log_add(-a, -b) - std::numbers::ln2);
  case NnCombine::Max:
    return std::max(a, b);
  case NnCombine::Min:
    return std::min(a, b);
  }
  throw Error("combine_log_densities: bad kind");
}

/// log(|X_l - X_m| / p~^beta) with p~ built from the nearest-neighbor estimates
/// at both endpoints.
inline double nn_variant_edge_log_weight(std::size_t l, std::size_t m, const NnDensityField &field, NnCombine kind,
                                         double beta) {
  if (l == m)
    throw Error("nn_variant_edge_log_weight: self edge");
  const Matrix &X = field.data();
  const double dist = (X.col(static_cast<Eigen::Index>(l)) - X.col(static_cast<Eigen::Index>(m))).norm();
  const double lp = combine_log_densities(kind, field.log_density(l), field.log_density(m));
  return std::log(dist) - beta * lp;
}

struct PowerWeighted {
  double beta = 1.0;
  int intrinsic_dim = 2;
};

/// Midpoint quadrature of the length integral along each edge.
struct DensityQuadrature {
  DensityPtr model;
  double beta = 1.0;
  int segments = 8;
};

/// Endpoint-combination weights. With `endpoint_model` unset the endpoint
/// densities come from the nearest-neighbor estimate with intrinsic
/// dimension d; otherwise they are evaluated exactly from the model.
struct NnVariant {
  NnCombine kind = NnCombine::InverseOfMean;
  double beta = 1.0;
  int intrinsic_dim = 2;
  DensityPtr endpoint_model;
};

using EdgeWeighting = std::variant<PowerWeighted, DensityQuadrature, NnVariant>;

/// Computes the weight of every undirected edge once and mirrors it.
inline KnnGraph weight_edges(const KnnGraph &graph, const EdgeWeighting &weighting) {
  const std::size_t n = graph.size();
  std::function<double(std::size_t, std::size_t)> weigh;
  std::unique_ptr<NnDensityField> field;
  std::vector<double> endpoint_log_p;

  if (const auto *pw = std::get_if<PowerWeighted>(&weighting)) {
    if (!(pw->beta >= 0.0) || pw->intrinsic_dim < 1)
      throw Error("weight_edges: invalid power weighting");
    weigh = [&graph, pw](std::size_t l, std::size_t m) {
      return power_edge_log_weight(graph.node(l), graph.node(m), pw->beta, pw->intrinsic_dim);
    };
  } else if (const auto *dq = std::get_if<DensityQuadrature>(&weighting)) {
    if (!dq->model || dq->segments < 1)
      throw Error("weight_edges: invalid density quadrature weighting");
    weigh = [&graph, dq](std::size_t l, std::size_t m) {
      return density_edge_log_weight(graph.node(l), graph.node(m), *dq->model, dq->beta, dq->segments);
    };
  } else {
    const auto &nv = std::get<NnVariant>(weighting);
    if (nv.endpoint_model) {
      endpoint_log_p.resize(n);
      for (std::size_t i = 0; i < n; ++i)
        endpoint_log_p[i] = nv.endpoint_model->log_density(graph.node(i));
      weigh = [&graph, &nv, &endpoint_log_p](std::size_t l, std::size_t m) {
        const double lp = combine_log_densities(nv.kind, endpoint_log_p[l], endpoint_log_p[m]);
        return std::log((graph.node(l) - graph.node(m)).norm()) - nv.beta * lp;
      };
    } else {
      field = std::make_unique<NnDensityField>(graph.nodes(), nv.intrinsic_dim);
      weigh = [&field, &nv](std::size_t l, std::size_t m) {
        return nn_variant_edge_log_weight(l, m, *field, nv.kind, nv.beta);
      };
    }
  }

  std::vector<double> weights(graph.adjacency().size(), 0.0);
  for (std::size_t l = 0; l < n; ++l) {
    const auto nb = graph.neighbors(l);
    for (std::size_t j = 0; j < nb.size(); ++j) {
      const std::size_t m = nb[j];
      if (m < l)
        continue;
      const double w = weigh(l, m);
      if (!std::isfinite(w))
        throw Error("weight_edges: non-finite weight on edge " + std::to_string(l) + "-" + std::to_string(m));
      weights[graph.offsets()[l] + j] = w;
      const auto back = graph.neighbors(m);
      const auto it = std::lower_bound(back.begin(), back.end(), l);
      weights[graph.offsets()[m] + static_cast<std::size_t>(it - back.begin())] = w;
    }
  }
  return graph.with_weights(std::move(weights));
}

// ---------------------------------------------------------------------------
// Shortest paths

struct GraphPath {
  std::vector<std::size_t> nodes;
  /// log of the summed linear-domain edge weights.
  double log_distance = kNegInf;
};

/// Log-domain sum of the edge weights along `nodes`, accumulated in sorted
/// order so that a path and its reverse give bit-identical totals.
inline double graph_path_log_length(const KnnGraph &graph, const std::vector<std::size_t> &nodes) {
  std::vector<double> w;
  for (std::size_t i = 0; i + 1 < nodes.size(); ++i)
    w.push_back(graph.edge_log_weight(nodes[i], nodes[i + 1]));
  if (w.empty())
    return kNegInf;
  std::sort(w.begin(), w.end());
  return log_sum_exp(w);
}

class DisconnectedError : public Error {
public:
  using Error::Error;
};

namespace detail {

struct DijkstraState {
  std::vector<double> dist;
  std::vector<std::size_t> prev;
};

inline DijkstraState dijkstra_search(const KnnGraph &graph, std::size_t source, std::size_t stop_at) {
  const std::size_t n = graph.size();
  if (source >= n)
    throw Error("dijkstra: source out of range");
  if (!graph.weighted())
    throw Error("dijkstra: graph has no weights");
  constexpr double inf = std::numeric_limits<double>::infinity();
  constexpr std::size_t none = static_cast<std::size_t>(-1);
  DijkstraState st{std::vector<double>(n, inf), std::vector<std::size_t>(n, none)};
  std::vector<char> done(n, 0);
  using Item = std::pair<double, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
  st.dist[source] = kNegInf;
  queue.push({kNegInf, source});
  while (!queue.empty()) {
    const auto [d, u] = queue.top();
    queue.pop();
    if (done[u])
      continue;
    done[u] = 1;
    if (u == stop_at)
      break;
    const auto nb = graph.neighbors(u);
    const auto w = graph.log_weights(u);
    for (std::size_t j = 0; j < nb.size(); ++j) {
      const std::size_t v = nb[j];
      if (done[v])
        continue;
      const double cand = log_add(d, w[j]);
      if (cand < st.dist[v]) {
        st.dist[v] = cand;
        st.prev[v] = u;
        queue.push({cand, v});
      }
    }
  }
  return st;
}

} // namespace detail

/// Log-domain shortest distances from `source` to every node (+inf where
/// unreachable, -inf at the source itself).
inline std::vector<double> dijkstra_all(const KnnGraph &graph, std::size_t source) {
  return detail::dijkstra_search(graph, source, static_cast<std::size_t>(-1)).dist;
}

/// Shortest path between two nodes. Throws DisconnectedError when the target
/// cannot be reached.
inline GraphPath dijkstra(const KnnGraph &graph, std::size_t source, std::size_t target) {
  if (target >= graph.size())
    throw Error("dijkstra: target out of range");
  const auto st = detail::dijkstra_search(graph, source, target);
  if (st.dist[target] == std::numeric_limits<double>::infinity())
    throw DisconnectedError("dijkstra: disconnected (no path from " + std::to_string(source) + " to " +
                            std::to_string(target) + ")");
  GraphPath gp;
  for (std::size_t v = target; v != static_cast<std::size_t>(-1); v = st.prev[v])
    gp.nodes.push_back(v);
  std::reverse(gp.nodes.begin(), gp.nodes.end());
  gp.log_distance = graph_path_log_length(graph, gp.nodes);
  return gp;
}

/// The piecewise-linear curve through a graph path's node coordinates.
inline Path polyline(const GraphPath &gp, const KnnGraph &graph) {
  if (gp.nodes.size() < 2)
    throw Error("polyline: graph path needs at least two nodes");
  Matrix pts(graph.dim(), static_cast<Eigen::Index>(gp.nodes.size()));
  for (std::size_t i = 0; i < gp.nodes.size(); ++i)
    pts.col(static_cast<Eigen::Index>(i)) = graph.nodes().col(static_cast<Eigen::Index>(gp.nodes[i]));
  return Path(std::move(pts));
}

/// Graph path resampled to `intervals` equal Euclidean steps, as a starting
/// point for relaxation.
inline Path densify(const GraphPath &gp, const KnnGraph &graph, Eigen::Index intervals) {
  if (gp.nodes.empty())
    throw Error("densify: empty graph path");
  if (gp.nodes.size() < 2)
    throw Error("densify: zero-length graph path");
  return resample_uniform(polyline(gp, graph), intervals);
}

} // namespace fermat
