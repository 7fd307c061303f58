#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "rollout/clustering.hpp"
#include "rollout/graph.hpp"
#include "rollout/rng.hpp"

namespace rollout {

inline double comb_double(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return r;
}

// Explicit polynomial potential outcomes: Y_i(z) = sum_S c_{i,S} prod_{j in S} z_j.
// Subsets are sorted id lists; the empty subset carries the baseline Y_i(0).
struct CoefficientModel {
  struct Term {
    std::vector<int> subset;
    double c = 0.0;
  };

  int n = 0;
  int beta = 0;
  std::vector<std::vector<Term>> terms;  // per node, subsets sorted short-lex

  static CoefficientModel from_terms(int n, int beta, std::vector<std::vector<Term>> terms) {
    CoefficientModel m;
    m.n = n;
    m.beta = beta;
    m.terms = std::move(terms);
    if (static_cast<int>(m.terms.size()) != n) throw std::invalid_argument("coefficient model: node count mismatch");
    for (auto& node_terms : m.terms) {
      for (auto& t : node_terms) {
        std::sort(t.subset.begin(), t.subset.end());
        if (std::adjacent_find(t.subset.begin(), t.subset.end()) != t.subset.end())
          throw std::invalid_argument("coefficient model: duplicate ids in subset");
        if (static_cast<int>(t.subset.size()) > beta)
          throw std::invalid_argument("coefficient model: subset larger than model order");
        if (!t.subset.empty() && (t.subset.front() < 0 || t.subset.back() >= n))
          throw std::invalid_argument("coefficient model: subset id out of range");
      }
      std::sort(node_terms.begin(), node_terms.end(), [](const Term& a, const Term& b) {
        if (a.subset.size() != b.subset.size()) return a.subset.size() < b.subset.size();
        return a.subset < b.subset;
      });
      for (std::size_t k = 1; k < node_terms.size(); ++k)
        if (node_terms[k].subset == node_terms[k - 1].subset)
          throw std::invalid_argument("coefficient model: duplicate subset");
    }
    return m;
  }

  void validate_against(const InterferenceGraph& g) const {
    if (g.n != n) throw std::invalid_argument("coefficient model: graph size mismatch");
    for (int i = 0; i < n; ++i)
      for (const auto& t : terms[static_cast<std::size_t>(i)])
        for (int j : t.subset)
          if (!g.has_in_edge(j, i)) throw std::invalid_argument("coefficient model: subset not within in-neighborhood");
  }
};

namespace detail {

// Fiedler-style homophily vector: eigenvector for the second-smallest
// Laplacian eigenvalue, via power iteration on (c*I - L) with the constant
// vector deflated, then affinely mapped onto [-1, 1].
inline std::vector<double> fiedler_homophily(const InterferenceGraph& g, std::uint64_t seed) {
  const int n = g.n;
  std::vector<double> v(static_cast<std::size_t>(n));
  if (n == 1) return {0.0};

  std::vector<std::vector<int>> und(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    for (int j : g.in_nbrs[static_cast<std::size_t>(i)])
      if (j != i) {
        und[static_cast<std::size_t>(i)].push_back(j);
        und[static_cast<std::size_t>(j)].push_back(i);
      }
  int max_deg = 0;
  for (auto& u : und) {
    std::sort(u.begin(), u.end());
    u.erase(std::unique(u.begin(), u.end()), u.end());
    max_deg = std::max(max_deg, static_cast<int>(u.size()));
  }
  const double shift = 2.0 * max_deg + 1.0;

  Rng rng(seed ^ 0xF1ED1E5ULL);
  for (auto& x : v) x = rng.uniform01() - 0.5;

  auto deflate_and_normalize = [n](std::vector<double>& x) {
    double mean = 0.0;
    for (double e : x) mean += e;
    mean /= n;
    double norm = 0.0;
    for (double& e : x) {
      e -= mean;
      norm += e * e;
    }
    norm = std::sqrt(norm);
    if (norm > 0) {
      for (double& e : x) e /= norm;
    }
    return norm;
  };
  deflate_and_normalize(v);

  std::vector<double> w(static_cast<std::size_t>(n));
  const int max_iters = 100000;
  for (int it = 0; it < max_iters; ++it) {
    for (int i = 0; i < n; ++i) {
      const auto& u = und[static_cast<std::size_t>(i)];
      double lap = static_cast<double>(u.size()) * v[static_cast<std::size_t>(i)];
      for (int j : u) lap -= v[static_cast<std::size_t>(j)];
      w[static_cast<std::size_t>(i)] = shift * v[static_cast<std::size_t>(i)] - lap;
    }
    if (deflate_and_normalize(w) == 0.0) break;
    double diff = 0.0;
    // Sign-align before measuring convergence.
    double dot = 0.0;
    for (int i = 0; i < n; ++i) dot += w[static_cast<std::size_t>(i)] * v[static_cast<std::size_t>(i)];
    const double sgn = dot < 0 ? -1.0 : 1.0;
    for (int i = 0; i < n; ++i) diff = std::max(diff, std::abs(sgn * w[static_cast<std::size_t>(i)] - v[static_cast<std::size_t>(i)]));
    v = w;
    if (diff < 1e-8) break;
  }

  const auto [mn_it, mx_it] = std::minmax_element(v.begin(), v.end());
  const double mn = *mn_it, mx = *mx_it;
  if (mx - mn < 1e-30) return std::vector<double>(static_cast<std::size_t>(n), 0.0);
  for (double& e : v) e = 2.0 * (e - mn) / (mx - mn) - 1.0;
  return v;
}

inline double sample_gaussian(Rng& rng) {
  // Box-Muller, one value per call.
  double u1 = rng.uniform01();
  while (u1 <= 0.0) u1 = rng.uniform01();
  const double u2 = rng.uniform01();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

}  // namespace detail

// Symmetric synthetic outcomes: Y_i(z) = Y_i(0) * (1 + delta*z_i +
// sum_k gamma_k * C(t_i,k)/C(d_i,k)) with t_i the treated count in N_i, and
// Y_i(0) = (a + b*h_i + eps_i) * d_i / d_bar. Terms with k > d_i are zero.
// The noise draw happens once at construction, so instances are immutable
// and deterministic afterwards.
struct SymmetricSynthModel {
  const InterferenceGraph* graph = nullptr;
  int beta = 0;
  double a = 1.0;
  double b = 0.0;
  double sigma = 0.1;
  double delta = 0.5;
  std::vector<double> gamma;  // gamma[k-1] for k = 1..beta
  std::uint64_t seed = 0;
  std::vector<double> homophily;  // all-zero when b == 0
  std::vector<double> y0;

  // Per-node falling-factorial weights so that
  // sum_k gamma_k * C(t,k)/C(d_i,k) = sum_k ff_weight[i][k] * t*(t-1)*...*(t-k+1).
  std::vector<std::vector<double>> ff_weight;

  int n() const { return graph->n; }

  double node_outcome(int i, int treated_in_nbhd, bool self_treated) const {
    const auto& w = ff_weight[static_cast<std::size_t>(i)];
    double interaction = 0.0;
    double ff = 1.0;
    for (std::size_t k = 1; k < w.size(); ++k) {
      ff *= static_cast<double>(treated_in_nbhd - static_cast<int>(k) + 1);
      interaction += w[k] * ff;
    }
    return y0[static_cast<std::size_t>(i)] * (1.0 + (self_treated ? delta : 0.0) + interaction);
  }

  // c_{i,S} for a nonempty subset of N_i with |S| = k; the self singleton
  // additionally carries the direct effect.
  double coefficient(int i, int subset_size, bool contains_self) const {
    const int d = graph->degree(i);
    if (subset_size > std::min(beta, d)) return 0.0;
    double c = y0[static_cast<std::size_t>(i)] * gamma[static_cast<std::size_t>(subset_size - 1)] / comb_double(d, subset_size);
    if (subset_size == 1 && contains_self) c += y0[static_cast<std::size_t>(i)] * delta;
    return c;
  }
};

inline std::vector<double> default_gamma(int beta) {
  std::vector<double> g(static_cast<std::size_t>(beta));
  for (int k = 1; k <= beta; ++k) g[static_cast<std::size_t>(k - 1)] = std::pow(0.5, k - 1);
  return g;
}

inline SymmetricSynthModel make_symmetric_model(const InterferenceGraph& graph, int beta, double a, double b,
                                                double sigma, double delta, std::vector<double> gamma,
                                                std::uint64_t seed) {
  if (beta < 1) throw std::invalid_argument("symmetric model: beta must be >= 1");
  if (gamma.empty()) gamma = default_gamma(beta);
  if (static_cast<int>(gamma.size()) != beta) throw std::invalid_argument("symmetric model: gamma length must equal beta");

  SymmetricSynthModel m;
  m.graph = &graph;
  m.beta = beta;
  m.a = a;
  m.b = b;
  m.sigma = sigma;
  m.delta = delta;
  m.gamma = std::move(gamma);
  m.seed = seed;
  m.homophily = b != 0.0 ? detail::fiedler_homophily(graph, seed)
                         : std::vector<double>(static_cast<std::size_t>(graph.n), 0.0);

  Rng rng(seed);
  m.y0.resize(static_cast<std::size_t>(graph.n));
  for (int i = 0; i < graph.n; ++i) {
    const double eps = sigma != 0.0 ? sigma * detail::sample_gaussian(rng) : 0.0;
    m.y0[static_cast<std::size_t>(i)] =
        (a + b * m.homophily[static_cast<std::size_t>(i)] + eps) * graph.degree(i) / graph.avg_in_degree;
  }

  m.ff_weight.resize(static_cast<std::size_t>(graph.n));
  for (int i = 0; i < graph.n; ++i) {
    const int kmax = std::min(beta, graph.degree(i));
    auto& w = m.ff_weight[static_cast<std::size_t>(i)];
    w.assign(static_cast<std::size_t>(kmax) + 1, 0.0);
    double k_factorial = 1.0;
    for (int k = 1; k <= kmax; ++k) {
      k_factorial *= k;
      w[static_cast<std::size_t>(k)] = m.gamma[static_cast<std::size_t>(k - 1)] / (comb_double(graph.degree(i), k) * k_factorial);
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Evaluation and summary quantities. All operations are pure and reentrant.
// ---------------------------------------------------------------------------

inline std::vector<double> evaluate(const CoefficientModel& m, std::span<const std::uint8_t> z) {
  if (static_cast<int>(z.size()) != m.n) throw std::invalid_argument("evaluate: treatment vector length mismatch");
  std::vector<double> y(static_cast<std::size_t>(m.n), 0.0);
  for (int i = 0; i < m.n; ++i) {
    double acc = 0.0;
    for (const auto& t : m.terms[static_cast<std::size_t>(i)]) {
      bool all = true;
      for (int j : t.subset) all = all && z[static_cast<std::size_t>(j)] != 0;
      if (all) acc += t.c;
    }
    y[static_cast<std::size_t>(i)] = acc;
  }
  return y;
}

inline std::vector<double> evaluate(const SymmetricSynthModel& m, std::span<const std::uint8_t> z) {
  if (static_cast<int>(z.size()) != m.n()) throw std::invalid_argument("evaluate: treatment vector length mismatch");
  std::vector<double> y(static_cast<std::size_t>(m.n()));
  for (int i = 0; i < m.n(); ++i) {
    int treated = 0;
    for (int j : m.graph->in_nbrs[static_cast<std::size_t>(i)]) treated += z[static_cast<std::size_t>(j)] != 0;
    y[static_cast<std::size_t>(i)] = m.node_outcome(i, treated, z[static_cast<std::size_t>(i)] != 0);
  }
  return y;
}

inline double tte(const CoefficientModel& m) {
  double acc = 0.0;
  for (const auto& node_terms : m.terms)
    for (const auto& t : node_terms)
      if (!t.subset.empty()) acc += t.c;
  return acc / m.n;
}

inline double tte(const SymmetricSynthModel& m) {
  double acc = 0.0;
  for (int i = 0; i < m.n(); ++i) {
    double g = m.delta;
    const int kmax = std::min(m.beta, m.graph->degree(i));
    for (int k = 1; k <= kmax; ++k) g += m.gamma[static_cast<std::size_t>(k - 1)];
    acc += m.y0[static_cast<std::size_t>(i)] * g;
  }
  return acc / m.n();
}

// Outgoing singleton influences L_j = sum_{i : j in N_i} c_{i,{j}}.
inline std::vector<double> influence_L(const CoefficientModel& m) {
  std::vector<double> L(static_cast<std::size_t>(m.n), 0.0);
  for (const auto& node_terms : m.terms)
    for (const auto& t : node_terms)
      if (t.subset.size() == 1) L[static_cast<std::size_t>(t.subset[0])] += t.c;
  return L;
}

inline std::vector<double> influence_L(const SymmetricSynthModel& m) {
  std::vector<double> L(static_cast<std::size_t>(m.n()), 0.0);
  for (int j = 0; j < m.n(); ++j) {
    double acc = 0.0;
    for (int i : m.graph->out_nbrs[static_cast<std::size_t>(j)])
      acc += m.coefficient(i, 1, i == j);
    L[static_cast<std::size_t>(j)] = acc;
  }
  return L;
}

// L_S = sum_{i : S subseteq N_i} c_{i,S} for an arbitrary nonempty subset.
inline double influence_of_subset(const CoefficientModel& m, std::span<const int> subset) {
  if (subset.empty()) throw std::invalid_argument("influence_of_subset: empty subset");
  std::vector<int> key(subset.begin(), subset.end());
  std::sort(key.begin(), key.end());
  double acc = 0.0;
  for (const auto& node_terms : m.terms)
    for (const auto& t : node_terms)
      if (t.subset == key) acc += t.c;
  return acc;
}

inline double influence_of_subset(const SymmetricSynthModel& m, std::span<const int> subset) {
  if (subset.empty()) throw std::invalid_argument("influence_of_subset: empty subset");
  double acc = 0.0;
  for (int i = 0; i < m.n(); ++i) {
    bool inside = true;
    for (int j : subset) inside = inside && m.graph->has_in_edge(j, i);
    if (!inside) continue;
    bool self = std::find(subset.begin(), subset.end(), i) != subset.end();
    acc += m.coefficient(i, static_cast<int>(subset.size()), self);
  }
  return acc;
}

// Cluster average effects L-bar_pi = (n_c/n) * sum of coefficients whose
// subset lies entirely inside pi.
inline std::vector<double> cluster_influence(const CoefficientModel& m, const Clustering& c) {
  if (c.n != m.n) throw std::invalid_argument("cluster_influence: partition size mismatch");
  std::vector<double> acc(static_cast<std::size_t>(c.n_clusters), 0.0);
  for (const auto& node_terms : m.terms)
    for (const auto& t : node_terms) {
      if (t.subset.empty()) continue;
      const int pi = c.cluster_of(t.subset[0]);
      bool inside = true;
      for (int j : t.subset) inside = inside && c.cluster_of(j) == pi;
      if (inside) acc[static_cast<std::size_t>(pi)] += t.c;
    }
  const double scale = static_cast<double>(c.n_clusters) / m.n;
  for (double& v : acc) v *= scale;
  return acc;
}

inline std::vector<double> cluster_influence(const SymmetricSynthModel& m, const Clustering& c) {
  if (c.n != m.n()) throw std::invalid_argument("cluster_influence: partition size mismatch");
  std::vector<double> acc(static_cast<std::size_t>(c.n_clusters), 0.0);
  std::vector<int> scratch;
  for (int i = 0; i < m.n(); ++i) {
    const int d = m.graph->degree(i);
    scratch.clear();
    for (int j : m.graph->in_nbrs[static_cast<std::size_t>(i)]) scratch.push_back(c.cluster_of(j));
    std::sort(scratch.begin(), scratch.end());
    acc[static_cast<std::size_t>(c.cluster_of(i))] += m.y0[static_cast<std::size_t>(i)] * m.delta;
    const int kmax = std::min(m.beta, d);
    for (std::size_t pos = 0; pos < scratch.size();) {
      std::size_t end = pos;
      while (end < scratch.size() && scratch[end] == scratch[pos]) ++end;
      const int members_here = static_cast<int>(end - pos);
      double sum = 0.0;
      for (int k = 1; k <= std::min(kmax, members_here); ++k)
        sum += m.gamma[static_cast<std::size_t>(k - 1)] * comb_double(members_here, k) / comb_double(d, k);
      acc[static_cast<std::size_t>(scratch[pos])] += m.y0[static_cast<std::size_t>(i)] * sum;
      pos = end;
    }
  }
  const double scale = static_cast<double>(c.n_clusters) / m.n();
  for (double& v : acc) v *= scale;
  return acc;
}

// C(delta(Pi)): effect mass of subsets spanning two or more clusters,
// computed through the identity TTE - (1/n_c) * sum_pi L-bar_pi.
template <typename ModelT>
double cut_effect(const ModelT& m, const Clustering& c) {
  const std::vector<double> bars = cluster_influence(m, c);
  double mean = 0.0;
  for (double v : bars) mean += v;
  mean /= static_cast<double>(bars.size());
  return tte(m) - mean;
}

inline double y_max(const CoefficientModel& m) {
  double best = 0.0;
  for (const auto& node_terms : m.terms) {
    double acc = 0.0;
    for (const auto& t : node_terms) acc += std::abs(t.c);
    best = std::max(best, acc);
  }
  return best;
}

inline double y_max(const SymmetricSynthModel& m) {
  double best = 0.0;
  for (int i = 0; i < m.n(); ++i) {
    const int d = m.graph->degree(i);
    const double y = std::abs(m.y0[static_cast<std::size_t>(i)]);
    const int kmax = std::min(m.beta, d);
    double acc = 1.0;  // baseline
    if (kmax >= 1) {
      acc += std::abs(m.delta + m.gamma[0] / d);        // self singleton
      acc += (d - 1) * std::abs(m.gamma[0]) / d;        // other singletons
      for (int k = 2; k <= kmax; ++k) acc += std::abs(m.gamma[static_cast<std::size_t>(k - 1)]);
    } else {
      acc += std::abs(m.delta);
    }
    best = std::max(best, y * acc);
  }
  return best;
}

inline bool has_negative_coefficient(const CoefficientModel& m) {
  for (const auto& node_terms : m.terms)
    for (const auto& t : node_terms)
      if (t.c < 0.0) return true;
  return false;
}

inline bool has_negative_coefficient(const SymmetricSynthModel& m) {
  bool any_pos = false;
  for (double v : m.y0) {
    if (v < 0.0) return true;  // negative baseline c_{i,empty}
    any_pos = any_pos || v > 0.0;
  }
  if (!any_pos) return false;
  for (double g : m.gamma)
    if (g < 0.0) return true;
  for (int i = 0; i < m.n(); ++i)
    if (m.y0[static_cast<std::size_t>(i)] > 0.0 && m.delta + m.gamma[0] / m.graph->degree(i) < 0.0) return true;
  return false;
}

// Visits every (node, subset, coefficient) triple of the symmetric model,
// used by materialization and the closed-form bias. The subset count guard
// keeps accidental blowups on large graphs from hanging the process.
inline void enumerate_coefficients(const SymmetricSynthModel& m,
                                   const std::function<void(int, std::span<const int>, double)>& visit,
                                   long long guard = 10'000'000) {
  long long total = 0;
  for (int i = 0; i < m.n(); ++i) {
    const int d = m.graph->degree(i);
    for (int k = 0; k <= std::min(m.beta, d); ++k) total += static_cast<long long>(comb_double(d, k));
    if (total > guard) throw std::runtime_error("enumerate_coefficients: subset guard exceeded");
  }
  std::vector<int> subset;
  for (int i = 0; i < m.n(); ++i) {
    const auto& nbrs = m.graph->in_nbrs[static_cast<std::size_t>(i)];
    const int d = static_cast<int>(nbrs.size());
    visit(i, {}, m.y0[static_cast<std::size_t>(i)]);
    const int kmax = std::min(m.beta, d);
    for (int k = 1; k <= kmax; ++k) {
      std::vector<int> idx(static_cast<std::size_t>(k));
      for (int t = 0; t < k; ++t) idx[static_cast<std::size_t>(t)] = t;
      for (;;) {
        subset.clear();
        bool self = false;
        for (int t : idx) {
          subset.push_back(nbrs[static_cast<std::size_t>(t)]);
          self = self || nbrs[static_cast<std::size_t>(t)] == i;
        }
        visit(i, subset, m.coefficient(i, k, self));
        int pos = k - 1;
        while (pos >= 0 && idx[static_cast<std::size_t>(pos)] == d - k + pos) --pos;
        if (pos < 0) break;
        ++idx[static_cast<std::size_t>(pos)];
        for (int t = pos + 1; t < k; ++t) idx[static_cast<std::size_t>(t)] = idx[static_cast<std::size_t>(t - 1)] + 1;
      }
    }
  }
}

// Expands the lazy symmetric form into the explicit coefficient form; the
// two evaluate identically on every treatment vector.
inline CoefficientModel materialize(const SymmetricSynthModel& m, long long guard = 10'000'000) {
  std::vector<std::vector<CoefficientModel::Term>> terms(static_cast<std::size_t>(m.n()));
  enumerate_coefficients(
      m,
      [&terms](int i, std::span<const int> subset, double c) {
        terms[static_cast<std::size_t>(i)].push_back({std::vector<int>(subset.begin(), subset.end()), c});
      },
      guard);
  return CoefficientModel::from_terms(m.n(), m.beta, std::move(terms));
}

inline int model_beta(const CoefficientModel& m) { return m.beta; }
inline int model_beta(const SymmetricSynthModel& m) { return m.beta; }
inline int model_n(const CoefficientModel& m) { return m.n; }
inline int model_n(const SymmetricSynthModel& m) { return m.n(); }

// Either outcomes form behind one name; dispatch stays a std::visit away.
using OutcomesModel = std::variant<CoefficientModel, SymmetricSynthModel>;

inline int model_n(const OutcomesModel& m) {
  return std::visit([](const auto& mm) { return model_n(mm); }, m);
}

inline int model_beta(const OutcomesModel& m) {
  return std::visit([](const auto& mm) { return model_beta(mm); }, m);
}

inline std::vector<double> evaluate(const OutcomesModel& m, std::span<const std::uint8_t> z) {
  return std::visit([z](const auto& mm) { return evaluate(mm, z); }, m);
}

inline double tte(const OutcomesModel& m) {
  return std::visit([](const auto& mm) { return tte(mm); }, m);
}

inline std::vector<double> influence_L(const OutcomesModel& m) {
  return std::visit([](const auto& mm) { return influence_L(mm); }, m);
}

inline std::vector<double> cluster_influence(const OutcomesModel& m, const Clustering& c) {
  return std::visit([&c](const auto& mm) { return cluster_influence(mm, c); }, m);
}

inline double cut_effect(const OutcomesModel& m, const Clustering& c) {
  return std::visit([&c](const auto& mm) { return cut_effect(mm, c); }, m);
}

inline double y_max(const OutcomesModel& m) {
  return std::visit([](const auto& mm) { return y_max(mm); }, m);
}

inline bool has_negative_coefficient(const OutcomesModel& m) {
  return std::visit([](const auto& mm) { return has_negative_coefficient(mm); }, m);
}

}  // namespace rollout
