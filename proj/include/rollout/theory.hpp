#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "rollout/clustering.hpp"
#include "rollout/design.hpp"
#include "rollout/estimators.hpp"
#include "rollout/outcomes.hpp"
#include "rollout/rational.hpp"

namespace rollout {

// Closed-form bias of the two-stage estimator:
// (1/n) sum_i sum_{S != empty} c_{i,S} [ (q/p) Pr(S in U) - 1 ],
// with the kind-specific selection probability. per_size_terms[k] holds the
// contribution of subsets with |S| = k, a useful diagnostic.
struct BiasReport {
  double closed_form = 0.0;
  double bound = 0.0;  // (q-p)/q * C(delta(Pi)), singleton clusters for unit kinds
  std::vector<double> per_size_terms;
};

inline BiasReport bias_closed(const CoefficientModel& model, const DesignSpec& spec) {
  const int n = model.n;
  spec.validate(n);
  if (spec.kind == DesignKind::two_stage_clustered_crd && spec.clustering == nullptr)
    throw std::invalid_argument("bias_closed: clustered design needs a clustering");

  BiasReport report;
  report.per_size_terms.assign(static_cast<std::size_t>(model.beta) + 1, 0.0);
  for (const auto& node_terms : model.terms) {
    for (const auto& t : node_terms) {
      if (t.subset.empty()) continue;
      const double pr = prob_subset_in_u(spec, n, t.subset);
      const double factor = spec.q / spec.p * pr - 1.0;
      report.per_size_terms[t.subset.size()] += t.c * factor / n;
    }
  }
  for (double v : report.per_size_terms) report.closed_form += v;

  const Clustering singles =
      spec.kind == DesignKind::two_stage_clustered_crd ? Clustering{} : singleton_clustering(n);
  const Clustering& pi = spec.kind == DesignKind::two_stage_clustered_crd ? *spec.clustering : singles;
  report.bound = (spec.q - spec.p) / spec.q * cut_effect(model, pi);
  return report;
}

// Symmetric-model path without materialization: within one neighborhood all
// size-k subsets share the coefficient y0 * gamma_k / C(d,k), so only the
// counts of k-subsets touching exactly r clusters are needed. A per-node DP
// over the neighborhood's cluster multiplicities supplies them, which keeps
// the closed form usable on high-degree networks.
inline BiasReport bias_closed(const SymmetricSynthModel& model, const DesignSpec& spec) {
  const int n = model.n();
  spec.validate(n);
  if (spec.kind == DesignKind::two_stage_clustered_crd && spec.clustering == nullptr)
    throw std::invalid_argument("bias_closed: clustered design needs a clustering");

  const int beta = model.beta;
  BiasReport report;
  report.per_size_terms.assign(static_cast<std::size_t>(beta) + 1, 0.0);
  const bool clustered = spec.kind == DesignKind::two_stage_clustered_crd;

  // Selection factor (q/p) Pr(S in U) - 1, indexed by |S| for the unit kinds
  // and by |Pi(S)| for the clustered kind.
  std::vector<double> factor(static_cast<std::size_t>(beta) + 1, 0.0);
  for (int j = 1; j <= beta; ++j)
    factor[static_cast<std::size_t>(j)] =
        spec.q / spec.p * (clustered ? prob_subset_in_u_summary(spec, n, beta, j)
                                     : prob_subset_in_u_summary(spec, n, j, j)) -
        1.0;

  std::vector<int> scratch;
  std::vector<std::vector<double>> ways;
  for (int i = 0; i < n; ++i) {
    const int d = model.graph->degree(i);
    const int kmax = std::min(beta, d);
    const double y0 = model.y0[static_cast<std::size_t>(i)];

    if (!clustered) {
      // All C(d,k) subsets of size k carry the same selection probability.
      for (int k = 1; k <= kmax; ++k)
        report.per_size_terms[static_cast<std::size_t>(k)] +=
            y0 * model.gamma[static_cast<std::size_t>(k - 1)] * factor[static_cast<std::size_t>(k)] / n;
      report.per_size_terms[1] += y0 * model.delta * factor[1] / n;
      continue;
    }

    scratch.clear();
    for (int j : model.graph->in_nbrs[static_cast<std::size_t>(i)])
      scratch.push_back(spec.clustering->cluster_of(j));
    std::sort(scratch.begin(), scratch.end());

    // ways[k][r]: k-subsets of the neighborhood touching exactly r clusters.
    ways.assign(static_cast<std::size_t>(kmax) + 1, std::vector<double>(static_cast<std::size_t>(kmax) + 1, 0.0));
    ways[0][0] = 1.0;
    for (std::size_t pos = 0; pos < scratch.size();) {
      std::size_t end = pos;
      while (end < scratch.size() && scratch[end] == scratch[pos]) ++end;
      const int mult = static_cast<int>(end - pos);
      for (int k = kmax; k >= 0; --k) {
        for (int r = k; r >= 0; --r) {
          const double base = ways[static_cast<std::size_t>(k)][static_cast<std::size_t>(r)];
          if (base == 0.0) continue;
          for (int take = 1; take <= std::min(mult, kmax - k); ++take)
            ways[static_cast<std::size_t>(k + take)][static_cast<std::size_t>(r + 1)] +=
                base * comb_double(mult, take);
        }
      }
      pos = end;
    }

    for (int k = 1; k <= kmax; ++k) {
      const double per_subset = y0 * model.gamma[static_cast<std::size_t>(k - 1)] / comb_double(d, k);
      for (int r = 1; r <= k; ++r)
        report.per_size_terms[static_cast<std::size_t>(k)] +=
            per_subset * ways[static_cast<std::size_t>(k)][static_cast<std::size_t>(r)] *
            factor[static_cast<std::size_t>(r)] / n;
    }
    report.per_size_terms[1] += y0 * model.delta * factor[1] / n;  // direct-effect singleton, r = 1
  }

  for (double v : report.per_size_terms) report.closed_form += v;
  const Clustering singles = clustered ? Clustering{} : singleton_clustering(n);
  report.bound = (spec.q - spec.p) / spec.q * cut_effect(model, clustered ? *spec.clustering : singles);
  return report;
}

inline BiasReport bias_closed(const OutcomesModel& model, const DesignSpec& spec) {
  return std::visit([&spec](const auto& m) { return bias_closed(m, spec); }, model);
}

// Magnitude bound on the bias for nonnegative coefficients.
template <typename ModelT>
double bias_bound(const ModelT& model, const DesignSpec& spec, const Clustering& pi) {
  return (spec.q - spec.p) / spec.q * cut_effect(model, pi);
}

// Three-term variance bound for the clustered two-stage design; the cut
// term carries the constant 2 d^2 Y_max / n_c:
//   1(q<1) * q^3 b^2 Ymax^2 / (p^2 n) * (b/q)^{2b} * (d^2 + 4 b^3)
//   + (q-p) / (p (n_c - 1)) * VarHat(Lbar_pi)
//   + 1(q>p) * 2 d^2 Ymax / n_c * C(delta(Pi)).
struct VarianceReport {
  double extrapolation_term = 0.0;
  double cluster_var_term = 0.0;
  double cut_term = 0.0;
  double total() const { return extrapolation_term + cluster_var_term + cut_term; }
};

template <typename ModelT>
VarianceReport variance_upper_bound(const ModelT& model, const InterferenceGraph& g, const DesignSpec& spec,
                              const Clustering& pi) {
  spec.validate(g.n);
  if (!pi.equal_size) throw std::invalid_argument("variance_upper_bound: requires equal-size clusters");
  if (has_negative_coefficient(model))
    throw std::domain_error("variance_upper_bound: bound assumes nonnegative coefficients");

  const double beta = model_beta(model);
  const double ymax = y_max(model);
  const double d = g.max_in_degree;
  const double p = spec.p, q = spec.q;
  const double n = g.n, nc = pi.n_clusters;

  VarianceReport r;
  if (q < 1.0)
    r.extrapolation_term =
        q * q * q * beta * beta * ymax * ymax / (p * p * n) * std::pow(beta / q, 2.0 * beta) * (d * d + 4.0 * beta * beta * beta);
  if (q > p) {
    if (pi.n_clusters == 1) throw std::invalid_argument("variance_upper_bound: single cluster with q > p");
    const std::vector<double> bars = cluster_influence(model, pi);
    r.cluster_var_term = (q - p) / (p * (nc - 1.0)) * var_hat(bars);
    r.cut_term = 2.0 * d * d * ymax / nc * cut_effect(model, pi);
  }
  return r;
}

// Variance of the CRD average (1/(p|z|)) sum L_i z_i, z ~ CRD(p|z|, |z|):
// (1-p) / (p (|z|-1)) * VarHat(L).
inline double crd_mean_variance(std::span<const double> L, double p) {
  const long long m = static_cast<long long>(L.size());
  if (m < 2) throw std::invalid_argument("crd_mean_variance: need at least two entries");
  const double pm = p * static_cast<double>(m);
  const double r = std::round(pm);
  if (std::abs(pm - r) > 1e-9 || r < 1 || r > static_cast<double>(m - 1))
    throw std::invalid_argument("crd_mean_variance: p*|L| must be an integer in [1, |L|-1]");
  return (1.0 - p) / (p * static_cast<double>(m - 1)) * var_hat(L);
}

// Exact variance of the estimator for beta = 1 under a clustered two-stage
// design:
//   (1-q)/(pn-q) * VarHat_j(L_j) + (q-p)(pn-1)/(p (n_c-1) (pn-q)) * VarHat_pi(Lbar_pi).
// The two coefficients are exposed in exact rational form so the q = 1 and
// q = p limits can be checked symbolically.
struct Beta1VarCoeffs {
  Rat unit_term;
  Rat cluster_term;
};

inline Beta1VarCoeffs var_exact_beta1_coeffs_exact(const Rat& p, const Rat& q, long n, long n_clusters) {
  const Rat pn = p * n;
  if (pn == q) throw std::invalid_argument("var_exact_beta1: pn = q (single eligible unit)");
  Beta1VarCoeffs c;
  c.unit_term = (1 - q) / (pn - q);
  if (q == p) {
    c.cluster_term = 0;
  } else {
    if (n_clusters <= 1) throw std::invalid_argument("var_exact_beta1: single cluster with q > p");
    c.cluster_term = (q - p) * (pn - 1) / (p * Rat(n_clusters - 1) * (pn - q));
  }
  return c;
}

template <typename ModelT>
double var_exact_beta1(const ModelT& model, const DesignSpec& spec) {
  if (model_beta(model) != 1) throw std::invalid_argument("var_exact_beta1: model order must be 1");
  if (spec.kind != DesignKind::two_stage_clustered_crd)
    throw std::invalid_argument("var_exact_beta1: requires a clustered CRD design (use singleton clusters for the unit design)");
  const Clustering& pi = *spec.clustering;
  const std::vector<double> L = influence_L(model);
  spec.validate(static_cast<int>(L.size()));
  const std::vector<double> bars = cluster_influence(model, pi);
  const Beta1VarCoeffs c = var_exact_beta1_coeffs_exact(rat_of(spec.p), rat_of(spec.q),
                                                        static_cast<long>(L.size()), pi.n_clusters);
  return to_double(c.unit_term) * var_hat(L) + to_double(c.cluster_term) * var_hat(bars);
}

// ---------------------------------------------------------------------------
// Exhaustive enumeration oracle. Ground truth for the closed-form bias and
// variance expressions on tiny instances: every stage-1 choice and every
// within-U rollout order is enumerated and probability-weighted in exact
// rational arithmetic. No symmetry of the design distribution is exploited.
// ---------------------------------------------------------------------------

struct OracleMoments {
  Rat expectation;
  Rat variance;
  double expectation_d() const { return to_double(expectation); }
  double variance_d() const { return to_double(variance); }
};

namespace detail {

inline void enumerate_subsets(int total, int choose, const std::function<void(std::span<const int>)>& visit) {
  std::vector<int> idx(static_cast<std::size_t>(choose));
  for (int i = 0; i < choose; ++i) idx[static_cast<std::size_t>(i)] = i;
  if (choose == 0) {
    visit({});
    return;
  }
  for (;;) {
    visit(idx);
    int pos = choose - 1;
    while (pos >= 0 && idx[static_cast<std::size_t>(pos)] == total - choose + pos) --pos;
    if (pos < 0) break;
    ++idx[static_cast<std::size_t>(pos)];
    for (int t = pos + 1; t < choose; ++t) idx[static_cast<std::size_t>(t)] = idx[static_cast<std::size_t>(t - 1)] + 1;
  }
}

}  // namespace detail

inline OracleMoments oracle_moments(const CoefficientModel& model, const DesignSpec& spec) {
  const int n = model.n;
  spec.validate(n);
  if (spec.kind == DesignKind::two_stage_unit_bernoulli)
    throw std::invalid_argument("oracle: CRD kinds only");
  if (n > 8) throw std::invalid_argument("oracle: n <= 8 required");
  const long long u_size = spec.selected_count(n);
  long long fact = 1;
  for (long long i = 2; i <= u_size; ++i) fact *= i;
  if (fact > 40320) throw std::invalid_argument("oracle: |U|! enumeration budget exceeded");

  // Exact per-mask outcome totals; a treatment vector over n <= 8 nodes is a
  // bitmask, and Y only depends on the mask.
  struct MaskTerm {
    unsigned mask;
    Rat c;
  };
  std::vector<MaskTerm> terms;
  for (int i = 0; i < n; ++i)
    for (const auto& t : model.terms[static_cast<std::size_t>(i)]) {
      unsigned mask = 0;
      for (int j : t.subset) mask |= 1u << j;
      terms.push_back({mask, rat_of(t.c)});
    }
  const unsigned num_masks = 1u << n;
  std::vector<Rat> y_sum(num_masks, Rat(0));
  for (unsigned m = 0; m < num_masks; ++m)
    for (const auto& t : terms)
      if ((t.mask & m) == t.mask) y_sum[m] += t.c;

  const long long treated_final = spec.treated_final(n);
  const Rat p_exact = rat_of(static_cast<long>(treated_final), static_cast<long>(n));
  const Rat q_exact = rat_of(static_cast<long>(treated_final), static_cast<long>(u_size));
  const std::vector<Rat> h = h_coeffs_exact(spec.steps, q_exact);
  const Rat scale = q_exact / (Rat(n) * p_exact);

  std::vector<long long> count_at(static_cast<std::size_t>(spec.steps) + 1);
  for (int t = 0; t <= spec.steps; ++t) count_at[static_cast<std::size_t>(t)] = spec.treated_at(n, t);

  Rat sum_est(0), sum_sq(0);
  long long outcome_count = 0;

  auto visit_u = [&](std::vector<int> members) {
    std::sort(members.begin(), members.end());
    do {
      unsigned mask = 0;
      Rat dot(0);
      long long pos = 0;
      for (int t = 0; t <= spec.steps; ++t) {
        for (; pos < count_at[static_cast<std::size_t>(t)]; ++pos) mask |= 1u << members[static_cast<std::size_t>(pos)];
        dot += h[static_cast<std::size_t>(t)] * y_sum[mask];
      }
      const Rat est = scale * dot;
      sum_est += est;
      sum_sq += est * est;
      ++outcome_count;
    } while (std::next_permutation(members.begin(), members.end()));
  };

  switch (spec.kind) {
    case DesignKind::one_stage_crd: {
      std::vector<int> all(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;
      visit_u(std::move(all));
      break;
    }
    case DesignKind::two_stage_unit_crd: {
      detail::enumerate_subsets(n, static_cast<int>(u_size), [&](std::span<const int> idx) {
        visit_u(std::vector<int>(idx.begin(), idx.end()));
      });
      break;
    }
    case DesignKind::two_stage_clustered_crd: {
      const Clustering& pi = *spec.clustering;
      const long long mc = spec.selected_clusters();
      detail::enumerate_subsets(pi.n_clusters, static_cast<int>(mc), [&](std::span<const int> cls) {
        std::vector<int> members;
        for (int c : cls) {
          const auto& mem = pi.members[static_cast<std::size_t>(c)];
          members.insert(members.end(), mem.begin(), mem.end());
        }
        visit_u(std::move(members));
      });
      break;
    }
    default:
      break;
  }

  OracleMoments out;
  out.expectation = sum_est / Rat(static_cast<long>(outcome_count));
  out.variance = sum_sq / Rat(static_cast<long>(outcome_count)) - out.expectation * out.expectation;
  return out;
}

inline double oracle_expectation(const CoefficientModel& model, const DesignSpec& spec) {
  return oracle_moments(model, spec).expectation_d();
}

inline double oracle_variance(const CoefficientModel& model, const DesignSpec& spec) {
  return oracle_moments(model, spec).variance_d();
}

// Minimizing q for the beta = 1 variance over a grid, by direct evaluation
// of the exact formula; requires same-sign influences (the regime where the
// minimum is provably at q = p). Ties break toward the smaller q.
template <typename ModelT>
double beta1_q_optimality(const ModelT& model, const Clustering& pi, double p, std::span<const double> q_grid) {
  if (model_beta(model) != 1) throw std::invalid_argument("beta1_q_optimality: model order must be 1");
  if (q_grid.empty()) throw std::invalid_argument("beta1_q_optimality: empty grid");
  const std::vector<double> L = influence_L(model);
  bool any_pos = false, any_neg = false;
  for (double v : L) {
    any_pos = any_pos || v > 0.0;
    any_neg = any_neg || v < 0.0;
  }
  if (any_pos && any_neg) throw std::invalid_argument("beta1_q_optimality: influences must share a sign");

  const std::vector<double> bars = cluster_influence(model, pi);
  const double var_L = var_hat(L);
  const double var_bar = var_hat(bars);
  const long n = static_cast<long>(L.size());

  double best_q = std::numeric_limits<double>::quiet_NaN();
  double best_v = std::numeric_limits<double>::infinity();
  for (double q : q_grid) {
    if (!(q >= p && q <= 1.0)) throw std::invalid_argument("beta1_q_optimality: grid value outside [p,1]");
    const Beta1VarCoeffs c = var_exact_beta1_coeffs_exact(rat_of(p), rat_of(q), n, pi.n_clusters);
    const double v = to_double(c.unit_term) * var_L + to_double(c.cluster_term) * var_bar;
    if (v < best_v - 1e-15 || (std::abs(v - best_v) <= 1e-15 && q < best_q)) {
      best_v = v;
      best_q = q;
    }
  }
  return best_q;
}

}  // namespace rollout
