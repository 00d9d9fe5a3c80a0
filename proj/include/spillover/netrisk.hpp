#pragma once

#include <optional>
#include <queue>
#include <string>
#include <vector>

#include "spillover/weights.hpp"

namespace spillover {

// ---------------------------------------------------------------------------
// Network topology statistics over a thresholded weight graph: local
// clustering, shortest paths by BFS, hubs, with adopter / non-adopter group
// summaries.
// ---------------------------------------------------------------------------

struct BankGraph {
  std::vector<std::vector<int>> adjacency;  // neighbor lists, symmetric
  double threshold = 0.0;
  std::vector<std::uint8_t> adopter;  // node attribute, optional (empty = none)
  Vector size;                        // node attribute, optional
  int edge_count = 0;
  bool empty_warning = false;

  int n() const { return static_cast<int>(adjacency.size()); }
  double density() const {
    int nn = n();
    return nn < 2 ? 0.0 : 2.0 * edge_count / (static_cast<double>(nn) * (nn - 1));
  }
  bool has_edge(int i, int j) const {
    for (int k : adjacency[static_cast<std::size_t>(i)])
      if (k == j) return true;
    return false;
  }
};

// Median positive entry of W, the default binarization threshold.
inline double default_threshold(const WeightMatrix& w) {
  std::vector<double> positives;
  const Matrix& m = w.w();
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j)
      if (i != j && m(i, j) > 0.0) positives.push_back(m(i, j));
  require(!positives.empty(), "netrisk", "weight matrix has no positive entries");
  return median_of(positives);
}

// Undirected graph: edge iff max(w_ij, w_ji) >= threshold. An empty result is
// flagged, not an error.
inline BankGraph binarize(const WeightMatrix& w, std::optional<double> threshold = {}) {
  const Matrix& m = w.w();
  const int n = static_cast<int>(m.rows());
  double thr = threshold ? *threshold : default_threshold(w);
  require(thr > 0.0, "netrisk", "threshold must be positive");
  BankGraph g;
  g.threshold = thr;
  g.adjacency.assign(static_cast<std::size_t>(n), {});
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (std::max(m(i, j), m(j, i)) >= thr) {
        g.adjacency[static_cast<std::size_t>(i)].push_back(j);
        g.adjacency[static_cast<std::size_t>(j)].push_back(i);
        ++g.edge_count;
      }
  g.empty_warning = g.edge_count == 0;
  return g;
}

// ---------------------------------------------------------------------------
// Local clustering: closed neighbor pairs over possible pairs, zero for
// degree < 2. Group means split by the adopter attribute.
// ---------------------------------------------------------------------------
struct ClusteringStats {
  Vector per_node;
  double overall_mean = kMissing;
  double adopter_mean = kMissing;      // NaN when the group is empty
  double non_adopter_mean = kMissing;
};

inline ClusteringStats clustering_coefficients(const BankGraph& g) {
  const int n = g.n();
  ClusteringStats out;
  out.per_node = Vector::Zero(n);
  for (int v = 0; v < n; ++v) {
    const auto& nb = g.adjacency[static_cast<std::size_t>(v)];
    int deg = static_cast<int>(nb.size());
    if (deg < 2) continue;
    int closed = 0;
    for (std::size_t a = 0; a < nb.size(); ++a)
      for (std::size_t b = a + 1; b < nb.size(); ++b)
        if (g.has_edge(nb[a], nb[b])) ++closed;
    out.per_node(v) = 2.0 * closed / (static_cast<double>(deg) * (deg - 1));
  }
  if (n > 0) out.overall_mean = out.per_node.mean();
  if (!g.adopter.empty()) {
    double sum_a = 0, sum_c = 0;
    int n_a = 0, n_c = 0;
    for (int v = 0; v < n; ++v) {
      if (g.adopter[static_cast<std::size_t>(v)]) {
        sum_a += out.per_node(v);
        ++n_a;
      } else {
        sum_c += out.per_node(v);
        ++n_c;
      }
    }
    if (n_a > 0) out.adopter_mean = sum_a / n_a;
    if (n_c > 0) out.non_adopter_mean = sum_c / n_c;
  }
  return out;
}

// ---------------------------------------------------------------------------
// All-pairs shortest paths over the binary graph (BFS per source). Averages
// run over connected unordered pairs; disconnected pairs are counted, not
// averaged. The adopter figure uses full-graph distances between adopter
// pairs.
// ---------------------------------------------------------------------------
struct PathStats {
  double mean_all = kMissing;
  double mean_adopters = kMissing;
  long connected_pairs = 0;
  long disconnected_pairs = 0;
  long adopter_pairs_connected = 0;
  long adopter_pairs_disconnected = 0;
};

inline std::vector<int> bfs_distances(const BankGraph& g, int source) {
  std::vector<int> dist(static_cast<std::size_t>(g.n()), -1);
  std::queue<int> frontier;
  dist[static_cast<std::size_t>(source)] = 0;
  frontier.push(source);
  while (!frontier.empty()) {
    int v = frontier.front();
    frontier.pop();
    for (int u : g.adjacency[static_cast<std::size_t>(v)])
      if (dist[static_cast<std::size_t>(u)] < 0) {
        dist[static_cast<std::size_t>(u)] = dist[static_cast<std::size_t>(v)] + 1;
        frontier.push(u);
      }
  }
  return dist;
}

inline PathStats path_lengths(const BankGraph& g) {
  const int n = g.n();
  PathStats out;
  double sum_all = 0, sum_adopt = 0;
  for (int i = 0; i < n; ++i) {
    auto dist = bfs_distances(g, i);
    for (int j = i + 1; j < n; ++j) {
      int d = dist[static_cast<std::size_t>(j)];
      if (d > 0) {
        sum_all += d;
        ++out.connected_pairs;
      } else {
        ++out.disconnected_pairs;
      }
      if (!g.adopter.empty() && g.adopter[static_cast<std::size_t>(i)] && g.adopter[static_cast<std::size_t>(j)]) {
        if (d > 0) {
          sum_adopt += d;
          ++out.adopter_pairs_connected;
        } else {
          ++out.adopter_pairs_disconnected;
        }
      }
    }
  }
  if (out.connected_pairs > 0) out.mean_all = sum_all / out.connected_pairs;
  if (out.adopter_pairs_connected > 0) out.mean_adopters = sum_adopt / out.adopter_pairs_connected;
  return out;
}

// Hubs: nodes whose degree reaches the top decile.
inline std::vector<int> hub_nodes(const BankGraph& g) {
  const int n = g.n();
  if (n == 0) return {};
  std::vector<double> degrees;
  for (int v = 0; v < n; ++v) degrees.push_back(static_cast<double>(g.adjacency[static_cast<std::size_t>(v)].size()));
  double cut = quantile(degrees, 0.9);
  std::vector<int> hubs;
  for (int v = 0; v < n; ++v)
    if (static_cast<double>(g.adjacency[static_cast<std::size_t>(v)].size()) >= cut && !g.adjacency[static_cast<std::size_t>(v)].empty())
      hubs.push_back(v);
  return hubs;
}

}  // namespace spillover
