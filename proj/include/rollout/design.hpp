#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rollout/clustering.hpp"
#include "rollout/rational.hpp"
#include "rollout/rng.hpp"

namespace rollout {

enum class DesignKind {
  one_stage_crd,
  two_stage_unit_crd,
  two_stage_clustered_crd,
  two_stage_unit_bernoulli,
};

inline const char* design_kind_name(DesignKind k) {
  switch (k) {
    case DesignKind::one_stage_crd: return "one_stage_crd";
    case DesignKind::two_stage_unit_crd: return "unit_crd";
    case DesignKind::two_stage_clustered_crd: return "clustered_crd";
    case DesignKind::two_stage_unit_bernoulli: return "unit_bernoulli";
  }
  return "?";
}

namespace detail {

inline long long checked_integer(double x, const std::string& what) {
  const double r = std::round(x);
  if (std::abs(x - r) > 1e-9 * std::max(1.0, std::abs(x)))
    throw std::invalid_argument("design: " + what + " = " + std::to_string(x) + " is not integral");
  return static_cast<long long>(r);
}

}  // namespace detail

// Randomization scheme: overall treatment budget p, effective budget q on
// the stage-1 subset, and the rollout degree (number of interpolation
// intervals). One-stage designs pin q = p. Treatment counts pn/q and pn/steps
// must come out integral; use snap_q to move a requested q onto the feasible
// grid.
struct DesignSpec {
  DesignKind kind = DesignKind::one_stage_crd;
  double p = 0.0;
  double q = 0.0;
  int steps = 1;
  const Clustering* clustering = nullptr;

  long long treated_final(int n) const { return detail::checked_integer(p * n, "p*n"); }
  long long selected_count(int n) const { return detail::checked_integer(p * n / q, "p*n/q"); }
  long long selected_clusters() const {
    return detail::checked_integer(clustering->n_clusters * p / q, "n_c*p/q");
  }
  long long treated_at(int n, int t) const {
    return detail::checked_integer(static_cast<double>(t) * p * n / steps, "t*p*n/steps");
  }

  void validate(int n) const {
    if (n < 1) throw std::invalid_argument("design: empty population");
    if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("design: p must lie in (0,1]");
    if (!(q >= p && q <= 1.0)) throw std::invalid_argument("design: q must lie in [p,1]");
    if (steps < 1) throw std::invalid_argument("design: steps must be >= 1");
    if (kind == DesignKind::one_stage_crd && q != p)
      throw std::invalid_argument("design: one-stage design requires q = p");
    const long long pn = treated_final(n);
    if (pn < 1 || pn > n) throw std::invalid_argument("design: p*n out of range");
    detail::checked_integer(p * n / steps, "p*n/steps");
    const long long u = selected_count(n);
    if (u < pn || u > n) throw std::invalid_argument("design: p*n/q out of range");
    if (kind == DesignKind::two_stage_clustered_crd) {
      if (clustering == nullptr) throw std::invalid_argument("design: clustered design needs a clustering");
      if (clustering->n != n) throw std::invalid_argument("design: clustering size mismatch");
      if (!clustering->equal_size)
        throw std::invalid_argument("design: clustered design requires equal-size clusters");
      const long long mc = selected_clusters();
      if (mc < 1 || mc > clustering->n_clusters)
        throw std::invalid_argument("design: n_c*p/q out of range");
      if (mc * clustering->cluster_size() != u)
        throw std::invalid_argument("design: cluster size inconsistent with p*n/q");
    }
  }
};

// Feasible q values keep |U| = p*n/q integral (and whole clusters for the
// clustered kind). Returns the nearest feasible value, ties toward smaller q.
inline double snap_q(DesignKind kind, double p, double requested_q, int n, int n_clusters = 0) {
  const long long pn = detail::checked_integer(p * n, "p*n");
  double best = -1.0, best_dist = std::numeric_limits<double>::infinity();
  if (kind == DesignKind::two_stage_clustered_crd) {
    if (n_clusters < 1 || n % n_clusters != 0) throw std::invalid_argument("snap_q: bad cluster count");
    const long long size = n / n_clusters;
    for (long long mc = 1; mc <= n_clusters; ++mc) {
      const long long u = mc * size;
      if (u < pn) continue;
      // q = p*n/u keeps n_c*p/q = mc integral by construction.
      const double q = static_cast<double>(pn) / static_cast<double>(u);
      const double dist = std::abs(q - requested_q);
      if (dist < best_dist - 1e-15 || (std::abs(dist - best_dist) <= 1e-15 && q < best)) {
        best = q;
        best_dist = dist;
      }
    }
  } else {
    for (long long u = pn; u <= n; ++u) {
      const double q = static_cast<double>(pn) / static_cast<double>(u);
      const double dist = std::abs(q - requested_q);
      if (dist < best_dist - 1e-15 || (std::abs(dist - best_dist) <= 1e-15 && q < best)) {
        best = q;
        best_dist = dist;
      }
    }
  }
  if (best < 0.0) throw std::invalid_argument("snap_q: no feasible q");
  return best;
}

constexpr int kNeverTreated = std::numeric_limits<int>::max();

// One sampled monotone rollout: the stage-1 subset indicator plus each
// selected node's first treated step (kNeverTreated for the rest).
struct RolloutRealization {
  int n = 0;
  int steps = 0;
  std::vector<std::uint8_t> selected;
  std::vector<int> treat_time;

  std::vector<std::uint8_t> z_at(int t) const {
    std::vector<std::uint8_t> z(static_cast<std::size_t>(n), 0);
    for (int i = 0; i < n; ++i) z[static_cast<std::size_t>(i)] = treat_time[static_cast<std::size_t>(i)] <= t ? 1 : 0;
    return z;
  }

  long long treated_count_at(int t) const {
    long long c = 0;
    for (int i = 0; i < n; ++i) c += treat_time[static_cast<std::size_t>(i)] <= t;
    return c;
  }
};

// Stage 1 only: the eligible subset U (and, for the clustered kind, the
// chosen clusters). Kept separate so nested Monte Carlo can redraw stage 2
// conditioned on a fixed U.
struct StageOneDraw {
  std::vector<int> members;  // sorted
};

inline StageOneDraw sample_stage1(const DesignSpec& spec, int n, Rng& rng) {
  spec.validate(n);
  StageOneDraw draw;
  switch (spec.kind) {
    case DesignKind::one_stage_crd: {
      draw.members.resize(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) draw.members[static_cast<std::size_t>(i)] = i;
      break;
    }
    case DesignKind::two_stage_unit_crd: {
      const long long u = spec.selected_count(n);
      std::vector<int> perm = random_permutation(n, rng);
      draw.members.assign(perm.begin(), perm.begin() + u);
      std::sort(draw.members.begin(), draw.members.end());
      break;
    }
    case DesignKind::two_stage_clustered_crd: {
      const long long mc = spec.selected_clusters();
      std::vector<int> cperm = random_permutation(spec.clustering->n_clusters, rng);
      for (long long c = 0; c < mc; ++c) {
        const auto& mem = spec.clustering->members[static_cast<std::size_t>(cperm[static_cast<std::size_t>(c)])];
        draw.members.insert(draw.members.end(), mem.begin(), mem.end());
      }
      std::sort(draw.members.begin(), draw.members.end());
      break;
    }
    case DesignKind::two_stage_unit_bernoulli: {
      const double marginal = spec.p / spec.q;
      for (int i = 0; i < n; ++i)
        if (rng.uniform01() < marginal) draw.members.push_back(i);
      break;
    }
  }
  return draw;
}

// Stage 2: a uniform permutation of U treated in prefixes. Prefix counts
// realize CRD(t*p*n/steps, |U|) at every step with monotone nesting; the
// Bernoulli variant scales counts to the realized |U| with floor rounding.
inline RolloutRealization sample_stage2(const DesignSpec& spec, int n, const StageOneDraw& stage1, Rng& rng) {
  RolloutRealization r;
  r.n = n;
  r.steps = spec.steps;
  r.selected.assign(static_cast<std::size_t>(n), 0);
  r.treat_time.assign(static_cast<std::size_t>(n), kNeverTreated);
  for (int i : stage1.members) r.selected[static_cast<std::size_t>(i)] = 1;

  std::vector<int> order = stage1.members;
  shuffle(order, rng);

  const long long u = static_cast<long long>(order.size());
  std::vector<long long> count_at(static_cast<std::size_t>(spec.steps) + 1, 0);
  for (int t = 1; t <= spec.steps; ++t) {
    if (spec.kind == DesignKind::two_stage_unit_bernoulli)
      count_at[static_cast<std::size_t>(t)] =
          static_cast<long long>(std::floor(static_cast<double>(t) * spec.q * static_cast<double>(u) / spec.steps + 1e-9));
    else
      count_at[static_cast<std::size_t>(t)] = spec.treated_at(n, t);
  }
  for (int t = 1; t <= spec.steps; ++t) {
    for (long long pos = count_at[static_cast<std::size_t>(t - 1)]; pos < count_at[static_cast<std::size_t>(t)]; ++pos)
      r.treat_time[static_cast<std::size_t>(order[static_cast<std::size_t>(pos)])] = t;
  }
  return r;
}

inline RolloutRealization sample(const DesignSpec& spec, int n, Rng& rng) {
  const StageOneDraw stage1 = sample_stage1(spec, n, rng);
  return sample_stage2(spec, n, stage1, rng);
}

// Pr(z_i^t = 1) = (p/q) * (t*q/steps) = t*p/steps for every node.
inline double marginal_treated(const DesignSpec& spec, int n, int i, int t) {
  spec.validate(n);
  if (i < 0 || i >= n) throw std::invalid_argument("marginal_treated: node out of range");
  if (t < 0 || t > spec.steps) throw std::invalid_argument("marginal_treated: step out of range");
  return static_cast<double>(t) * spec.p / spec.steps;
}

// Pr(S subseteq U) from the subset size and the number of clusters touched.
inline double prob_subset_in_u_summary(const DesignSpec& spec, int n, int subset_size, int clusters_touched) {
  spec.validate(n);
  if (subset_size < 1) throw std::invalid_argument("prob_subset_in_u: empty subset");
  switch (spec.kind) {
    case DesignKind::one_stage_crd:
      return 1.0;
    case DesignKind::two_stage_unit_crd:
      return bracket(spec.selected_count(n), n, subset_size);
    case DesignKind::two_stage_clustered_crd:
      return bracket(spec.selected_clusters(), spec.clustering->n_clusters, clusters_touched);
    case DesignKind::two_stage_unit_bernoulli:
      return std::pow(spec.p / spec.q, subset_size);
  }
  return 0.0;
}

inline double prob_subset_in_u(const DesignSpec& spec, int n, std::span<const int> subset) {
  int touched = 1;
  if (spec.kind == DesignKind::two_stage_clustered_crd) touched = pi_count(*spec.clustering, subset);
  return prob_subset_in_u_summary(spec, n, static_cast<int>(subset.size()), touched);
}

// Definition checks used by tests and the verifier: treatment restriction,
// per-round counts, and monotonicity (monotonicity is structural here since
// treat times are single integers, but the count law is not).
inline void check_realization(const DesignSpec& spec, const RolloutRealization& r) {
  for (int i = 0; i < r.n; ++i)
    if (!r.selected[static_cast<std::size_t>(i)] && r.treat_time[static_cast<std::size_t>(i)] != kNeverTreated)
      throw std::runtime_error("realization: treated node outside U");
  long long u = 0;
  for (auto s : r.selected) u += s;
  for (int t = 0; t <= r.steps; ++t) {
    long long expect;
    if (spec.kind == DesignKind::two_stage_unit_bernoulli)
      expect = static_cast<long long>(std::floor(static_cast<double>(t) * spec.q * static_cast<double>(u) / spec.steps + 1e-9));
    else
      expect = spec.treated_at(r.n, t);
    if (r.treated_count_at(t) != expect)
      throw std::runtime_error("realization: per-round treated count mismatch at step " + std::to_string(t));
  }
  auto z_prev = r.z_at(0);
  for (int t = 1; t <= r.steps; ++t) {
    auto z = r.z_at(t);
    for (int i = 0; i < r.n; ++i)
      if (z[static_cast<std::size_t>(i)] < z_prev[static_cast<std::size_t>(i)])
        throw std::runtime_error("realization: monotonicity violated");
    z_prev = std::move(z);
  }
}

}  // namespace rollout
