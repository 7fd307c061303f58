#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "rollout/graph.hpp"
#include "rollout/rational.hpp"

namespace rollout {

// What an experimenter records from one rollout: the per-step outcome totals
// feeding the interpolation estimators, and the final-step per-node outcomes
// and assignments needed by the non-interpolation baselines.
struct RolloutObservations {
  int n = 0;
  std::vector<double> sums;  // length steps+1, sums[t] = sum_i Y_i(z^t)
  std::vector<std::uint8_t> final_z;
  std::vector<double> per_node_final;
};

// Extrapolation weights h_{t,q} = l_t(1) - l_t(0) for the Lagrange basis on
// the evaluation points t*q/steps. Evaluated in exact rational arithmetic;
// the products cancel catastrophically in floating point.
inline std::vector<Rat> h_coeffs_exact(int steps, const Rat& q) {
  if (steps < 1) throw std::invalid_argument("h_coeffs: steps must be >= 1");
  if (!(q > 0 && q <= 1)) throw std::invalid_argument("h_coeffs: q must lie in (0,1]");
  const Rat beta_over_q = Rat(steps) / q;
  std::vector<Rat> h(static_cast<std::size_t>(steps) + 1);
  for (int t = 0; t <= steps; ++t) {
    Rat at_one(1);
    for (int s = 0; s <= steps; ++s) {
      if (s == t) continue;
      at_one *= (beta_over_q - s) / Rat(t - s);
    }
    // l_t(0) is 1 at t = 0 and 0 otherwise (the s = 0 factor vanishes).
    if (t == 0) at_one -= 1;
    h[static_cast<std::size_t>(t)] = at_one;
  }
  return h;
}

inline std::vector<double> h_coeffs(int steps, double q) {
  const std::vector<Rat> exact = h_coeffs_exact(steps, rat_of(q));
  std::vector<double> h(exact.size());
  for (std::size_t t = 0; t < exact.size(); ++t) h[t] = to_double(exact[t]);
  return h;
}

// Two-stage polynomial interpolation estimator:
// (q / (n p)) * sum_t h_{t,q} * sum_i Y_i(z^t).
inline double pi_two_stage(const RolloutObservations& obs, double p, double q) {
  const int steps = static_cast<int>(obs.sums.size()) - 1;
  if (steps < 1) throw std::invalid_argument("pi_two_stage: need at least two observation steps");
  const std::vector<double> h = h_coeffs(steps, q);
  double dot = 0.0;
  for (std::size_t t = 0; t < obs.sums.size(); ++t) dot += h[t] * obs.sums[t];
  return q / (static_cast<double>(obs.n) * p) * dot;
}

// One-stage estimator; identical to the two-stage form at q = p.
inline double pi_one_stage(const RolloutObservations& obs, double p) {
  return pi_two_stage(obs, p, p);
}

// Difference in means. Undefined (nullopt) when either group is empty; the
// harness records such replications as dropped.
inline std::optional<double> dm(std::span<const double> outcomes, std::span<const std::uint8_t> z) {
  if (outcomes.size() != z.size()) throw std::invalid_argument("dm: length mismatch");
  double sum1 = 0.0, sum0 = 0.0;
  long long n1 = 0, n0 = 0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (z[i]) {
      sum1 += outcomes[i];
      ++n1;
    } else {
      sum0 += outcomes[i];
      ++n0;
    }
  }
  if (n1 == 0 || n0 == 0) return std::nullopt;
  return sum1 / static_cast<double>(n1) - sum0 / static_cast<double>(n0);
}

// Thresholded difference in means DM(gamma): treated nodes need at least a
// gamma fraction of their neighborhood treated, control nodes at most 1-gamma.
inline std::optional<double> dm_threshold(const InterferenceGraph& g, std::span<const double> outcomes,
                                          std::span<const std::uint8_t> z, double gamma) {
  if (static_cast<int>(outcomes.size()) != g.n || outcomes.size() != z.size())
    throw std::invalid_argument("dm_threshold: length mismatch");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("dm_threshold: gamma must lie in [0,1]");
  double sum1 = 0.0, sum0 = 0.0;
  long long n1 = 0, n0 = 0;
  for (int i = 0; i < g.n; ++i) {
    const auto& nb = g.in_nbrs[static_cast<std::size_t>(i)];
    int treated = 0;
    for (int j : nb) treated += z[static_cast<std::size_t>(j)] != 0;
    const double d = static_cast<double>(nb.size());
    if (z[static_cast<std::size_t>(i)]) {
      if (treated >= gamma * d - 1e-12) {
        sum1 += outcomes[static_cast<std::size_t>(i)];
        ++n1;
      }
    } else {
      if (treated <= (1.0 - gamma) * d + 1e-12) {
        sum0 += outcomes[static_cast<std::size_t>(i)];
        ++n0;
      }
    }
  }
  if (n1 == 0 || n0 == 0) return std::nullopt;
  return sum1 / static_cast<double>(n1) - sum0 / static_cast<double>(n0);
}

namespace detail {

// Exposure probabilities under the final step of a one-stage CRD(pn, n):
// probability that an entire in-neighborhood is treated resp. untreated.
struct ExposureProbs {
  std::vector<double> treated;
  std::vector<double> untreated;
};

inline long long exposure_round(double p, int n) {
  const double x = p * n;
  const double r = std::round(x);
  if (std::abs(x - r) > 1e-9) throw std::invalid_argument("exposure probabilities: p*n must be integral");
  return static_cast<long long>(r);
}

inline ExposureProbs exposure_probs(const InterferenceGraph& g, double p) {
  const long long pn = exposure_round(p, g.n);
  ExposureProbs e;
  e.treated.resize(static_cast<std::size_t>(g.n));
  e.untreated.resize(static_cast<std::size_t>(g.n));
  // Degrees repeat heavily, so evaluate each distinct one once.
  std::map<int, std::pair<double, double>> by_degree;
  for (int i = 0; i < g.n; ++i) {
    const int d = g.degree(i);
    auto it = by_degree.find(d);
    if (it == by_degree.end())
      it = by_degree.emplace(d, std::make_pair(bracket(pn, g.n, d), bracket(g.n - pn, g.n, d))).first;
    e.treated[static_cast<std::size_t>(i)] = it->second.first;
    e.untreated[static_cast<std::size_t>(i)] = it->second.second;
  }
  return e;
}

}  // namespace detail

// Horvitz-Thompson under the final step of a one-stage CRD(pn, n). Nodes
// whose neighborhood is neither fully treated nor fully untreated contribute
// zero. A zero exposure probability for any node (degree too large for the
// budget) is a configuration error rather than a dropped replication.
inline double ht(const InterferenceGraph& g, std::span<const double> outcomes, std::span<const std::uint8_t> z,
                 double p) {
  if (static_cast<int>(outcomes.size()) != g.n || outcomes.size() != z.size())
    throw std::invalid_argument("ht: length mismatch");
  const auto probs = detail::exposure_probs(g, p);
  double acc = 0.0;
  for (int i = 0; i < g.n; ++i) {
    const auto& nb = g.in_nbrs[static_cast<std::size_t>(i)];
    bool all1 = true, all0 = true;
    for (int j : nb) {
      all1 = all1 && z[static_cast<std::size_t>(j)];
      all0 = all0 && !z[static_cast<std::size_t>(j)];
    }
    const double pt = probs.treated[static_cast<std::size_t>(i)];
    const double pu = probs.untreated[static_cast<std::size_t>(i)];
    if (pt <= 0.0 || pu <= 0.0)
      throw std::invalid_argument("ht: zero exposure probability (degree exceeds budget)");
    if (all1) acc += outcomes[static_cast<std::size_t>(i)] / pt;
    if (all0) acc -= outcomes[static_cast<std::size_t>(i)] / pu;
  }
  return acc / static_cast<double>(g.n);
}

// Hajek: the self-normalized variant of ht. Undefined when either exposure
// group is empty in the realization.
inline std::optional<double> hajek(const InterferenceGraph& g, std::span<const double> outcomes,
                                   std::span<const std::uint8_t> z, double p) {
  if (static_cast<int>(outcomes.size()) != g.n || outcomes.size() != z.size())
    throw std::invalid_argument("hajek: length mismatch");
  const auto probs = detail::exposure_probs(g, p);
  double num1 = 0.0, den1 = 0.0, num0 = 0.0, den0 = 0.0;
  for (int i = 0; i < g.n; ++i) {
    const auto& nb = g.in_nbrs[static_cast<std::size_t>(i)];
    bool all1 = true, all0 = true;
    for (int j : nb) {
      all1 = all1 && z[static_cast<std::size_t>(j)];
      all0 = all0 && !z[static_cast<std::size_t>(j)];
    }
    const double pt = probs.treated[static_cast<std::size_t>(i)];
    const double pu = probs.untreated[static_cast<std::size_t>(i)];
    if (pt <= 0.0 || pu <= 0.0)
      throw std::invalid_argument("hajek: zero exposure probability (degree exceeds budget)");
    if (all1) {
      num1 += outcomes[static_cast<std::size_t>(i)] / pt;
      den1 += 1.0 / pt;
    }
    if (all0) {
      num0 += outcomes[static_cast<std::size_t>(i)] / pu;
      den0 += 1.0 / pu;
    }
  }
  if (den1 == 0.0 || den0 == 0.0) return std::nullopt;
  return num1 / den1 - num0 / den0;
}

}  // namespace rollout
