#pragma once

#include <algorithm>
#include <cstdint>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace rollout {

// Directed interference network over dense node ids 0..n-1. in_nbrs[i] lists
// the nodes whose treatment affects i's outcome; it always contains i itself,
// so the direct effect is part of the neighborhood.
struct InterferenceGraph {
  int n = 0;
  std::vector<std::vector<int>> in_nbrs;   // sorted, deduplicated, i included
  std::vector<std::vector<int>> out_nbrs;  // reverse adjacency, sorted
  int max_in_degree = 0;                   // d
  double avg_in_degree = 0.0;              // d-bar

  int degree(int i) const { return static_cast<int>(in_nbrs[static_cast<std::size_t>(i)].size()); }

  bool has_in_edge(int from, int to) const {
    const auto& nb = in_nbrs[static_cast<std::size_t>(to)];
    return std::binary_search(nb.begin(), nb.end(), from);
  }

  // Normalizes raw in-neighbor lists: injects self-loops, sorts, removes
  // duplicates, and derives the reverse adjacency and degree summaries.
  static InterferenceGraph from_in_neighbors(std::vector<std::vector<int>> nbrs) {
    InterferenceGraph g;
    g.n = static_cast<int>(nbrs.size());
    g.in_nbrs = std::move(nbrs);
    long long total = 0;
    for (int i = 0; i < g.n; ++i) {
      auto& nb = g.in_nbrs[static_cast<std::size_t>(i)];
      nb.push_back(i);
      std::sort(nb.begin(), nb.end());
      nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
      if (nb.front() < 0 || nb.back() >= g.n)
        throw std::invalid_argument("graph: node id out of range");
      total += static_cast<long long>(nb.size());
      g.max_in_degree = std::max(g.max_in_degree, static_cast<int>(nb.size()));
    }
    g.avg_in_degree = g.n > 0 ? static_cast<double>(total) / g.n : 0.0;
    g.out_nbrs.assign(static_cast<std::size_t>(g.n), {});
    for (int i = 0; i < g.n; ++i)
      for (int j : g.in_nbrs[static_cast<std::size_t>(i)]) g.out_nbrs[static_cast<std::size_t>(j)].push_back(i);
    for (auto& ob : g.out_nbrs) std::sort(ob.begin(), ob.end());
    return g;
  }
};

// side x side grid, 4-neighbor adjacency, no wraparound. Both directions of
// every grid edge are present and every node carries a self-loop.
inline InterferenceGraph lattice(int side) {
  if (side < 1) throw std::invalid_argument("lattice: side must be >= 1");
  const int n = side * side;
  std::vector<std::vector<int>> nbrs(static_cast<std::size_t>(n));
  auto id = [side](int r, int c) { return r * side + c; };
  for (int r = 0; r < side; ++r) {
    for (int c = 0; c < side; ++c) {
      auto& nb = nbrs[static_cast<std::size_t>(id(r, c))];
      if (r > 0) nb.push_back(id(r - 1, c));
      if (r + 1 < side) nb.push_back(id(r + 1, c));
      if (c > 0) nb.push_back(id(r, c - 1));
      if (c + 1 < side) nb.push_back(id(r, c + 1));
    }
  }
  return InterferenceGraph::from_in_neighbors(std::move(nbrs));
}

namespace detail {

inline std::vector<std::pair<long long, long long>> parse_edge_lines(std::istream& in) {
  std::vector<std::pair<long long, long long>> edges;
  std::string line;
  long long line_no = 0;
  bool saw_content = false;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    saw_content = true;
    std::istringstream ls(line);
    long long src = -1, dst = -1;
    std::string extra;
    if (!(ls >> src >> dst) || src < 0 || dst < 0 || (ls >> extra))
      throw std::runtime_error("edge list: malformed line " + std::to_string(line_no) + ": '" + line + "'");
    edges.emplace_back(src, dst);
  }
  if (!saw_content) throw std::runtime_error("edge list: empty input");
  return edges;
}

inline InterferenceGraph graph_from_edges(const std::vector<std::pair<long long, long long>>& edges,
                                          long long n, bool directed) {
  std::vector<std::vector<int>> nbrs(static_cast<std::size_t>(n));
  for (auto [src, dst] : edges) {
    nbrs[static_cast<std::size_t>(dst)].push_back(static_cast<int>(src));
    if (!directed) nbrs[static_cast<std::size_t>(src)].push_back(static_cast<int>(dst));
  }
  return InterferenceGraph::from_in_neighbors(std::move(nbrs));
}

}  // namespace detail

// Text format: one "src dst" pair per line, '#' comments ignored. An edge
// src->dst means src's treatment affects dst. Ids must be dense 0-based;
// inputs with gaps are rejected (see load_edge_list_compact for relabeling).
inline InterferenceGraph load_edge_list(std::istream& in, bool directed) {
  const auto edges = detail::parse_edge_lines(in);
  long long max_id = 0;
  for (auto [s, d] : edges) max_id = std::max({max_id, s, d});
  std::vector<char> seen(static_cast<std::size_t>(max_id) + 1, 0);
  for (auto [s, d] : edges) {
    seen[static_cast<std::size_t>(s)] = 1;
    seen[static_cast<std::size_t>(d)] = 1;
  }
  for (long long i = 0; i <= max_id; ++i)
    if (!seen[static_cast<std::size_t>(i)])
      throw std::runtime_error("edge list: sparse node ids (id " + std::to_string(i) +
                               " missing); rerun with --compact to relabel");
  return detail::graph_from_edges(edges, max_id + 1, directed);
}

struct RemappedGraph {
  InterferenceGraph graph;
  std::vector<long long> original_id;  // original_id[new] = old
};

// Relabels arbitrary nonnegative ids to dense 0-based ids (sorted order of
// the original ids) and reports the mapping.
inline RemappedGraph load_edge_list_compact(std::istream& in, bool directed) {
  const auto edges = detail::parse_edge_lines(in);
  std::set<long long> ids;
  for (auto [s, d] : edges) {
    ids.insert(s);
    ids.insert(d);
  }
  RemappedGraph out;
  out.original_id.assign(ids.begin(), ids.end());
  std::vector<std::pair<long long, long long>> remapped;
  remapped.reserve(edges.size());
  auto rank = [&out](long long v) {
    return static_cast<long long>(std::lower_bound(out.original_id.begin(), out.original_id.end(), v) -
                                  out.original_id.begin());
  };
  for (auto [s, d] : edges) remapped.emplace_back(rank(s), rank(d));
  out.graph = detail::graph_from_edges(remapped, static_cast<long long>(out.original_id.size()), directed);
  return out;
}

// Self-loops are implicit and omitted on output, so save followed by a
// directed load reproduces the structure exactly.
inline void save_edge_list(std::ostream& out, const InterferenceGraph& g) {
  for (int i = 0; i < g.n; ++i)
    for (int j : g.in_nbrs[static_cast<std::size_t>(i)])
      if (j != i) out << j << ' ' << i << '\n';
}

}  // namespace rollout
