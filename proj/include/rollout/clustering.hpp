#pragma once

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "rollout/graph.hpp"
#include "rollout/rng.hpp"

namespace rollout {

// Partition of the node set. Clustered rollout designs additionally require
// equal cluster sizes; partitions that are not balanced still load fine and
// are rejected only when such a design is constructed on top of them.
struct Clustering {
  int n = 0;
  int n_clusters = 0;
  std::vector<int> assign;                // node -> cluster id
  std::vector<std::vector<int>> members;  // cluster -> sorted node list
  bool equal_size = false;

  int cluster_of(int i) const { return assign[static_cast<std::size_t>(i)]; }
  int cluster_size() const { return n / n_clusters; }

  static Clustering from_assignment(std::vector<int> a) {
    Clustering c;
    c.n = static_cast<int>(a.size());
    if (c.n == 0) throw std::invalid_argument("clustering: empty assignment");
    c.assign = std::move(a);
    int max_id = -1;
    for (int v : c.assign) {
      if (v < 0) throw std::invalid_argument("clustering: negative cluster id");
      max_id = std::max(max_id, v);
    }
    c.n_clusters = max_id + 1;
    c.members.assign(static_cast<std::size_t>(c.n_clusters), {});
    for (int i = 0; i < c.n; ++i) c.members[static_cast<std::size_t>(c.assign[static_cast<std::size_t>(i)])].push_back(i);
    for (const auto& m : c.members)
      if (m.empty()) throw std::invalid_argument("clustering: empty cluster id in 0..max");
    c.equal_size = true;
    for (const auto& m : c.members) c.equal_size = c.equal_size && m.size() == c.members.front().size();
    return c;
  }
};

// Blocks of block x block lattice nodes; block must divide side.
inline Clustering grid_clustering(int side, int block) {
  if (side < 1 || block < 1 || side % block != 0)
    throw std::invalid_argument("grid_clustering: block must divide side");
  const int per_row = side / block;
  std::vector<int> assign(static_cast<std::size_t>(side) * side);
  for (int r = 0; r < side; ++r)
    for (int c = 0; c < side; ++c)
      assign[static_cast<std::size_t>(r * side + c)] = (r / block) * per_row + (c / block);
  return Clustering::from_assignment(std::move(assign));
}

inline Clustering singleton_clustering(int n) {
  std::vector<int> assign(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) assign[static_cast<std::size_t>(i)] = i;
  return Clustering::from_assignment(std::move(assign));
}

// Uniformly random equal-size partition.
inline Clustering random_balanced(int n, int n_clusters, Rng& rng) {
  if (n_clusters < 1 || n % n_clusters != 0)
    throw std::invalid_argument("random_balanced: cluster count must divide n");
  const int size = n / n_clusters;
  std::vector<int> perm = random_permutation(n, rng);
  std::vector<int> assign(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) assign[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = i / size;
  return Clustering::from_assignment(std::move(assign));
}

// Number of directed non-self edges whose endpoints live in different
// clusters. This is the "cut edges" unit used by the metrics tables.
inline long long cut_edges(const InterferenceGraph& g, const Clustering& c) {
  if (g.n != c.n) throw std::invalid_argument("cut_edges: size mismatch");
  long long cut = 0;
  for (int i = 0; i < g.n; ++i)
    for (int j : g.in_nbrs[static_cast<std::size_t>(i)])
      if (j != i && c.assign[static_cast<std::size_t>(j)] != c.assign[static_cast<std::size_t>(i)]) ++cut;
  return cut;
}

// |Pi(S)|: number of distinct clusters touched by a nonempty node set.
inline int pi_count(const Clustering& c, std::span<const int> nodes) {
  if (nodes.empty()) throw std::invalid_argument("pi_count: empty set");
  // Subsets here are tiny (at most the model order), so a flat scan beats a set.
  int touched[8];
  int k = 0;
  for (int v : nodes) {
    const int cl = c.assign[static_cast<std::size_t>(v)];
    bool seen = false;
    for (int t = 0; t < k && !seen; ++t) seen = touched[t] == cl;
    if (!seen) {
      if (k < 8)
        touched[k++] = cl;
      else {
        // Fall back for unusually large sets.
        std::vector<int> ids(nodes.begin(), nodes.end());
        for (int& v2 : ids) v2 = c.assign[static_cast<std::size_t>(v2)];
        std::sort(ids.begin(), ids.end());
        return static_cast<int>(std::unique(ids.begin(), ids.end()) - ids.begin());
      }
    }
  }
  return k;
}

// Population-style empirical variance: mean(v^2) - mean(v)^2.
inline double var_hat(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("var_hat: empty input");
  double sum = 0.0, sum_sq = 0.0;
  for (double v : values) {
    sum += v;
    sum_sq += v * v;
  }
  const double mean = sum / static_cast<double>(values.size());
  return sum_sq / static_cast<double>(values.size()) - mean * mean;
}

namespace detail {

// Symmetric weighted adjacency used by the swap-based local search. For plain
// graphs the weight of {i,j} counts the directed non-self edges between them,
// so minimizing the weighted cut minimizes the directed cut-edge count.
struct WeightedAdj {
  std::vector<std::vector<std::pair<int, double>>> nbrs;

  static WeightedAdj from_graph(const InterferenceGraph& g) {
    std::vector<std::map<int, double>> acc(static_cast<std::size_t>(g.n));
    for (int i = 0; i < g.n; ++i)
      for (int j : g.in_nbrs[static_cast<std::size_t>(i)])
        if (j != i) {
          acc[static_cast<std::size_t>(i)][j] += 1.0;
          acc[static_cast<std::size_t>(j)][i] += 1.0;
        }
    WeightedAdj w;
    w.nbrs.resize(static_cast<std::size_t>(g.n));
    for (int i = 0; i < g.n; ++i)
      w.nbrs[static_cast<std::size_t>(i)].assign(acc[static_cast<std::size_t>(i)].begin(), acc[static_cast<std::size_t>(i)].end());
    return w;
  }

  double cut_weight(const std::vector<int>& assign) const {
    double cut = 0.0;
    for (std::size_t i = 0; i < nbrs.size(); ++i)
      for (auto [j, w] : nbrs[i])
        if (assign[i] != assign[static_cast<std::size_t>(j)]) cut += w;
    return cut / 2.0;
  }

  // Change in cut weight if u and v (in different clusters) swap clusters.
  double swap_delta(const std::vector<int>& assign, int u, int v) const {
    const int cu = assign[static_cast<std::size_t>(u)], cv = assign[static_cast<std::size_t>(v)];
    double delta = 0.0;
    for (auto [x, w] : nbrs[static_cast<std::size_t>(u)]) {
      if (x == v) continue;  // u<->v edge stays cut after the swap
      const int cx = assign[static_cast<std::size_t>(x)];
      delta += w * ((cx != cv ? 1.0 : 0.0) - (cx != cu ? 1.0 : 0.0));
    }
    for (auto [x, w] : nbrs[static_cast<std::size_t>(v)]) {
      if (x == u) continue;
      const int cx = assign[static_cast<std::size_t>(x)];
      delta += w * ((cx != cu ? 1.0 : 0.0) - (cx != cv ? 1.0 : 0.0));
    }
    return delta;
  }
};

// Seeded balanced start, then first-improvement pairwise swaps in node-id
// order. Swaps preserve cluster sizes and never increase the cut.
inline Clustering greedy_min_cut_impl(const WeightedAdj& adj, int n_clusters, Rng& rng, int sweeps) {
  const int n = static_cast<int>(adj.nbrs.size());
  if (n_clusters < 1 || n % n_clusters != 0)
    throw std::invalid_argument("greedy_min_cut: cluster count must divide n");
  Clustering start = random_balanced(n, n_clusters, rng);
  std::vector<int> assign = start.assign;
  for (int pass = 0; pass < sweeps; ++pass) {
    bool improved = false;
    for (int u = 0; u < n; ++u) {
      for (int v = u + 1; v < n; ++v) {
        if (assign[static_cast<std::size_t>(u)] == assign[static_cast<std::size_t>(v)]) continue;
        if (adj.swap_delta(assign, u, v) < -1e-12) {
          std::swap(assign[static_cast<std::size_t>(u)], assign[static_cast<std::size_t>(v)]);
          improved = true;
        }
      }
    }
    if (!improved) break;
  }
  return Clustering::from_assignment(std::move(assign));
}

}  // namespace detail

inline Clustering greedy_min_cut(const InterferenceGraph& g, int n_clusters, Rng& rng, int sweeps = 50) {
  return detail::greedy_min_cut_impl(detail::WeightedAdj::from_graph(g), n_clusters, rng, sweeps);
}

// Clusters by feature overlap: weight(i,j) = |F_i intersect F_j|. If every
// node has exactly one feature and the feature classes already form a
// balanced partition of the requested size, those classes are returned
// directly; otherwise the weighted local search runs on the overlap graph.
inline Clustering feature_clustering(const std::vector<std::vector<int>>& features, int n_clusters, Rng& rng,
                                     int sweeps = 50) {
  const int n = static_cast<int>(features.size());
  if (n_clusters < 1 || n == 0 || n % n_clusters != 0)
    throw std::invalid_argument("feature_clustering: cluster count must divide n");

  bool single = true;
  for (const auto& f : features) single = single && f.size() == 1;
  if (single) {
    std::unordered_map<int, int> feat_to_cluster;
    std::vector<int> assign(static_cast<std::size_t>(n), -1);
    for (int i = 0; i < n; ++i) {
      auto it = feat_to_cluster.try_emplace(features[static_cast<std::size_t>(i)][0],
                                            static_cast<int>(feat_to_cluster.size())).first;
      assign[static_cast<std::size_t>(i)] = it->second;
    }
    if (static_cast<int>(feat_to_cluster.size()) == n_clusters) {
      Clustering c = Clustering::from_assignment(std::move(assign));
      if (c.equal_size) return c;
    }
  }

  std::unordered_map<int, std::vector<int>> by_feature;
  for (int i = 0; i < n; ++i)
    for (int f : features[static_cast<std::size_t>(i)]) by_feature[f].push_back(i);
  std::vector<std::map<int, double>> acc(static_cast<std::size_t>(n));
  for (const auto& [f, nodes] : by_feature)
    for (std::size_t a = 0; a < nodes.size(); ++a)
      for (std::size_t b = a + 1; b < nodes.size(); ++b) {
        acc[static_cast<std::size_t>(nodes[a])][nodes[b]] += 1.0;
        acc[static_cast<std::size_t>(nodes[b])][nodes[a]] += 1.0;
      }
  detail::WeightedAdj adj;
  adj.nbrs.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) adj.nbrs[static_cast<std::size_t>(i)].assign(acc[static_cast<std::size_t>(i)].begin(), acc[static_cast<std::size_t>(i)].end());
  return detail::greedy_min_cut_impl(adj, n_clusters, rng, sweeps);
}

// File formats: clustering files are "node_id cluster_id" lines, feature
// files are "node_id feat_id [feat_id ...]" lines; '#' comments allowed.

inline Clustering load_clustering(std::istream& in) {
  std::string line;
  long long line_no = 0;
  std::map<long long, int> entries;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    long long node = -1;
    int cluster = -1;
    std::string extra;
    if (!(ls >> node >> cluster) || node < 0 || cluster < 0 || (ls >> extra))
      throw std::runtime_error("clustering file: malformed line " + std::to_string(line_no));
    if (!entries.emplace(node, cluster).second)
      throw std::runtime_error("clustering file: duplicate node id at line " + std::to_string(line_no));
  }
  if (entries.empty()) throw std::runtime_error("clustering file: empty input");
  std::vector<int> assign;
  assign.reserve(entries.size());
  long long expect = 0;
  for (const auto& [node, cluster] : entries) {
    if (node != expect++) throw std::runtime_error("clustering file: node ids must be dense 0-based");
    assign.push_back(cluster);
  }
  return Clustering::from_assignment(std::move(assign));
}

inline void save_clustering(std::ostream& out, const Clustering& c) {
  for (int i = 0; i < c.n; ++i) out << i << ' ' << c.assign[static_cast<std::size_t>(i)] << '\n';
}

// Nodes absent from the file (or listed with no features) get a fresh dummy
// feature so they overlap with no one.
inline std::vector<std::vector<int>> load_features(std::istream& in, int n) {
  std::vector<std::vector<int>> features(static_cast<std::size_t>(n));
  std::string line;
  long long line_no = 0;
  int max_feature = -1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    long long node = -1;
    if (!(ls >> node) || node < 0 || node >= n)
      throw std::runtime_error("feature file: malformed line " + std::to_string(line_no));
    int f;
    while (ls >> f) {
      if (f < 0) throw std::runtime_error("feature file: negative feature id at line " + std::to_string(line_no));
      features[static_cast<std::size_t>(node)].push_back(f);
      max_feature = std::max(max_feature, f);
    }
    if (!ls.eof()) throw std::runtime_error("feature file: malformed line " + std::to_string(line_no));
  }
  int next_dummy = max_feature + 1;
  for (auto& f : features) {
    if (f.empty()) f.push_back(next_dummy++);
    std::sort(f.begin(), f.end());
    f.erase(std::unique(f.begin(), f.end()), f.end());
  }
  return features;
}

inline void save_features(std::ostream& out, const std::vector<std::vector<int>>& features) {
  for (std::size_t i = 0; i < features.size(); ++i) {
    out << i;
    for (int f : features[i]) out << ' ' << f;
    out << '\n';
  }
}

}  // namespace rollout
