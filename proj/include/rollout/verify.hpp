#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "rollout/harness.hpp"
#include "rollout/theory.hpp"

namespace rollout {

// ---------------------------------------------------------------------------
// Random tiny instances: small graph, rational coefficients, and a feasible
// CRD design. Everything the enumeration oracle can ground-truth.
// ---------------------------------------------------------------------------

struct TinyInstance {
  InterferenceGraph graph;
  std::shared_ptr<Clustering> clustering;  // stable address; spec points here when clustered
  CoefficientModel model;
  DesignSpec spec;
};

struct TinyInstanceOptions {
  bool nonnegative = false;
  int force_beta = 0;         // 0: random in {1,2,3}
  bool force_clustered = false;
  bool force_unit = false;
  int max_u = 6;              // cap on |U| to keep |U|! enumeration fast
};

inline TinyInstance random_tiny_instance(std::uint64_t seed, const TinyInstanceOptions& opt = {}) {
  Rng rng(seed);
  for (;;) {
    const int n_choices[] = {4, 6, 8};
    const int n = n_choices[rng.below(3)];
    const int beta = opt.force_beta > 0 ? opt.force_beta : 1 + static_cast<int>(rng.below(3));

    std::vector<std::vector<int>> nbrs(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (i != j && rng.uniform01() < 0.35) nbrs[static_cast<std::size_t>(i)].push_back(j);
    InterferenceGraph graph = InterferenceGraph::from_in_neighbors(std::move(nbrs));

    // Equal-size clusters over a random permutation.
    std::vector<int> divisors;
    for (int s = 1; s <= n; ++s)
      if (n % s == 0) divisors.push_back(s);
    const int cluster_size = divisors[rng.below(divisors.size())];
    const int n_clusters = n / cluster_size;
    std::vector<int> perm = random_permutation(n, rng);
    std::vector<int> assign(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) assign[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = i / cluster_size;
    auto clustering = std::make_shared<Clustering>(Clustering::from_assignment(std::move(assign)));

    // Sparse rational coefficients over in-neighborhood subsets.
    auto rat_coeff = [&rng, &opt]() {
      const int num = static_cast<int>(rng.below(13)) - 6;  // -6..6
      const int den = 1 << rng.below(3);                    // 1, 2, 4
      double v = static_cast<double>(num) / den;
      if (opt.nonnegative) v = std::abs(v);
      return v;
    };
    std::vector<std::vector<CoefficientModel::Term>> terms(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      terms[static_cast<std::size_t>(i)].push_back({{}, rat_coeff()});
      const auto& nb = graph.in_nbrs[static_cast<std::size_t>(i)];
      const int d = static_cast<int>(nb.size());
      for (unsigned mask = 1; mask < (1u << d); ++mask) {
        const int size = __builtin_popcount(mask);
        if (size > beta) continue;
        if (rng.uniform01() > 0.5) continue;
        std::vector<int> subset;
        for (int b = 0; b < d; ++b)
          if (mask & (1u << b)) subset.push_back(nb[static_cast<std::size_t>(b)]);
        terms[static_cast<std::size_t>(i)].push_back({std::move(subset), rat_coeff()});
      }
    }
    CoefficientModel model = CoefficientModel::from_terms(n, beta, std::move(terms));

    // Feasible budgets: |U| a multiple of the cluster size for the clustered
    // kind, final treated count a multiple of the number of rollout steps.
    const bool clustered = opt.force_clustered || (!opt.force_unit && rng.below(2) == 0);
    std::vector<long long> u_options;
    if (clustered) {
      for (int mc = 1; mc <= n_clusters; ++mc)
        if (static_cast<long long>(mc) * cluster_size <= opt.max_u) u_options.push_back(static_cast<long long>(mc) * cluster_size);
    } else {
      for (int u = 1; u <= std::min(n, opt.max_u); ++u) u_options.push_back(u);
    }
    if (u_options.empty()) continue;
    const long long u = u_options[rng.below(u_options.size())];
    std::vector<long long> t_options;
    for (long long t = beta; t <= u; t += beta) t_options.push_back(t);
    if (t_options.empty()) continue;
    const long long t_final = t_options[rng.below(t_options.size())];

    TinyInstance inst{std::move(graph), std::move(clustering), std::move(model), {}};
    inst.spec.kind = clustered ? DesignKind::two_stage_clustered_crd : DesignKind::two_stage_unit_crd;
    inst.spec.p = static_cast<double>(t_final) / n;
    inst.spec.q = static_cast<double>(t_final) / static_cast<double>(u);
    inst.spec.steps = beta;
    if (clustered) inst.spec.clustering = inst.clustering.get();
    try {
      inst.spec.validate(n);
    } catch (const std::exception&) {
      continue;
    }
    return inst;
  }
}

// ---------------------------------------------------------------------------
// Named checks. verify() bundles them as a CI entry point; each check is
// exposed separately so tests can target (and deliberately break) them.
// ---------------------------------------------------------------------------

struct CheckResult {
  std::string name;
  bool passed = true;
  std::string detail;

  CheckResult() = default;
  CheckResult(std::string n, bool p = true, std::string d = {})
      : name(std::move(n)), passed(p), detail(std::move(d)) {}
};

using HProvider = std::function<std::vector<double>(int, double)>;

inline CheckResult check_lagrange_exactness(const HProvider& h_provider, int max_beta = 6,
                                            int polys_per_setting = 50) {
  CheckResult res{"lagrange_exactness"};
  Rng rng(0xACCE55);
  for (int beta = 1; beta <= max_beta && res.passed; ++beta) {
    for (double q : {0.2, 0.4, 0.6, 0.8, 1.0}) {
      const std::vector<double> h = h_provider(beta, q);
      for (int trial = 0; trial < polys_per_setting; ++trial) {
        std::vector<double> coef(static_cast<std::size_t>(beta) + 1);
        for (double& c : coef) c = 4.0 * rng.uniform01() - 2.0;
        auto f = [&coef](double x) {
          double acc = 0.0, pw = 1.0;
          for (double c : coef) {
            acc += c * pw;
            pw *= x;
          }
          return acc;
        };
        double lhs = 0.0, scale = 1.0;
        for (int t = 0; t <= beta; ++t) {
          const double term = h[static_cast<std::size_t>(t)] * f(static_cast<double>(t) * q / beta);
          lhs += term;
          scale += std::abs(term);
        }
        const double rhs = f(1.0) - f(0.0);
        // The weights grow like (beta/q)^beta, so the identity is judged
        // relative to the summed term magnitudes.
        if (std::abs(lhs - rhs) > 1e-9 * scale) {
          std::ostringstream msg;
          msg << "beta=" << beta << " q=" << q << " lhs=" << lhs << " rhs=" << rhs;
          return {"lagrange_exactness", false, msg.str()};
        }
      }
    }
  }
  return res;
}

inline CheckResult check_h_bound(int max_beta = 8) {
  for (int beta = 1; beta <= max_beta; ++beta) {
    for (double q : {0.1, 0.2, 0.25, 0.5, 0.75, 1.0}) {
      const Rat q_exact = rat_of(q);
      const std::vector<Rat> h = h_coeffs_exact(beta, q_exact);
      Rat cap(1);
      for (int i = 0; i < beta; ++i) cap *= Rat(beta) / q_exact;
      Rat sum(0);
      for (const Rat& v : h) {
        sum += v;
        if (abs(v) > cap) {
          std::ostringstream msg;
          msg << "|h| exceeds (beta/q)^beta at beta=" << beta << " q=" << q;
          return {"h_bound", false, msg.str()};
        }
      }
      if (sum != 0) return {"h_bound", false, "sum of h coefficients is nonzero"};
    }
  }
  return {"h_bound"};
}

inline CheckResult check_definition1_realizations(int draws_per_kind = 200) {
  Rng seeder(0xDEF1);
  const int n = 12;
  std::vector<int> assign(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) assign[static_cast<std::size_t>(i)] = i / 3;
  const Clustering clustering = Clustering::from_assignment(std::move(assign));

  std::vector<DesignSpec> specs;
  specs.push_back({DesignKind::one_stage_crd, 0.5, 0.5, 2, nullptr});
  specs.push_back({DesignKind::two_stage_unit_crd, 0.25, 0.5, 3, nullptr});
  specs.push_back({DesignKind::two_stage_clustered_crd, 0.25, 0.5, 3, &clustering});
  specs.push_back({DesignKind::two_stage_unit_bernoulli, 0.25, 0.5, 3, nullptr});
  for (const auto& spec : specs) {
    for (int k = 0; k < draws_per_kind; ++k) {
      Rng rng(seeder.next_u64());
      const RolloutRealization r = sample(spec, n, rng);
      try {
        check_realization(spec, r);
      } catch (const std::exception& ex) {
        return {"definition1_realizations", false,
                std::string(design_kind_name(spec.kind)) + ": " + ex.what()};
      }
    }
  }
  return {"definition1_realizations"};
}

inline CheckResult check_bracket_count(int max_m = 12) {
  for (int m = 1; m <= max_m; ++m) {
    for (int k = 0; k <= m; ++k) {
      for (int r = 0; r <= m; ++r) {
        // Count r-subsets fully inside a fixed k-subset among all r-subsets.
        const Rat expected = r > k ? Rat(0)
                                   : Rat(binomial_exact(static_cast<unsigned long>(k), static_cast<unsigned long>(r))) /
                                         Rat(binomial_exact(static_cast<unsigned long>(m), static_cast<unsigned long>(r)));
        if (bracket_exact(k, m, r) != expected) {
          std::ostringstream msg;
          msg << "bracket(" << k << "," << m << "," << r << ") != C(k,r)/C(m,r)";
          return {"bracket_count", false, msg.str()};
        }
      }
    }
  }
  return {"bracket_count"};
}

inline CheckResult check_bias_oracle(int instances = 8, std::uint64_t seed = 0xB1A5) {
  for (int k = 0; k < instances; ++k) {
    const TinyInstance inst = random_tiny_instance(seed + static_cast<std::uint64_t>(k));
    const OracleMoments om = oracle_moments(inst.model, inst.spec);
    const double oracle_bias = om.expectation_d() - tte(inst.model);
    const double closed = bias_closed(inst.model, inst.spec).closed_form;
    if (std::abs(oracle_bias - closed) > 1e-10) {
      std::ostringstream msg;
      msg << "instance " << k << ": oracle bias " << oracle_bias << " vs closed form " << closed;
      return {"bias_oracle", false, msg.str()};
    }
  }
  return {"bias_oracle"};
}

inline CheckResult check_beta1_variance_oracle(int instances = 8, std::uint64_t seed = 0xBE7A1) {
  TinyInstanceOptions opt;
  opt.force_beta = 1;
  opt.force_clustered = true;
  for (int k = 0; k < instances; ++k) {
    const TinyInstance inst = random_tiny_instance(seed + static_cast<std::uint64_t>(k), opt);
    double exact;
    try {
      exact = var_exact_beta1(inst.model, inst.spec);
    } catch (const std::exception&) {
      continue;  // degenerate pn = q draws are excluded by the formula itself
    }
    const double oracle = oracle_moments(inst.model, inst.spec).variance_d();
    if (std::abs(oracle - exact) > 1e-10) {
      std::ostringstream msg;
      msg << "instance " << k << ": oracle variance " << oracle << " vs exact " << exact;
      return {"beta1_variance_oracle", false, msg.str()};
    }
  }
  return {"beta1_variance_oracle"};
}

inline CheckResult check_variance_bound_dominance(int instances = 8, std::uint64_t seed = 0x7403) {
  TinyInstanceOptions opt;
  opt.nonnegative = true;
  opt.force_clustered = true;
  for (int k = 0; k < instances; ++k) {
    const TinyInstance inst = random_tiny_instance(seed + static_cast<std::uint64_t>(k), opt);
    const double oracle = oracle_moments(inst.model, inst.spec).variance_d();
    const double bound = variance_upper_bound(inst.model, inst.graph, inst.spec, *inst.clustering).total();
    if (oracle > bound * (1.0 + 1e-9) + 1e-12) {
      std::ostringstream msg;
      msg << "instance " << k << ": oracle variance " << oracle << " exceeds bound " << bound;
      return {"variance_bound_dominance", false, msg.str()};
    }
  }
  return {"variance_bound_dominance"};
}

inline CheckResult check_unbiasedness_qp(int instances = 6, std::uint64_t seed = 0x0B1A) {
  for (int k = 0; k < instances; ++k) {
    TinyInstance inst = random_tiny_instance(seed + static_cast<std::uint64_t>(k));
    // Force q = p: everyone is selected.
    const long long t_final = inst.spec.treated_final(inst.model.n);
    inst.spec.kind = DesignKind::two_stage_unit_crd;
    inst.spec.clustering = nullptr;
    inst.spec.p = static_cast<double>(t_final) / inst.model.n;
    inst.spec.q = inst.spec.p;
    const OracleMoments om = oracle_moments(inst.model, inst.spec);
    if (std::abs(om.expectation_d() - tte(inst.model)) > 1e-10) {
      std::ostringstream msg;
      msg << "instance " << k << ": E[estimate] " << om.expectation_d() << " vs TTE " << tte(inst.model);
      return {"unbiasedness", false, msg.str()};
    }
  }
  return {"unbiasedness"};
}

// Per-realization estimator identities: q = 1 collapses to the endpoint
// difference, and beta = 1 matches the two-point form, exactly in rational
// arithmetic and to near machine precision in doubles.
inline CheckResult check_estimator_equivalences(int trials = 40, std::uint64_t seed = 0xE9) {
  Rng rng(seed);
  for (int trial = 0; trial < trials; ++trial) {
    const int beta = 1 + static_cast<int>(rng.below(4));
    const int n = 4 + 2 * static_cast<int>(rng.below(3));
    RolloutObservations obs;
    obs.n = n;
    obs.sums.resize(static_cast<std::size_t>(beta) + 1);
    for (double& s : obs.sums) s = 20.0 * rng.uniform01() - 10.0;
    const double p = (1.0 + static_cast<double>(rng.below(static_cast<std::uint64_t>(n - 1)))) / n;

    {  // q = 1
      const double two_stage = pi_two_stage(obs, p, 1.0);
      const double endpoint = 1.0 / (n * p) * (obs.sums[static_cast<std::size_t>(beta)] - obs.sums[0]);
      if (two_stage != endpoint)
        return {"q1_equivalence", false, "double-path mismatch at trial " + std::to_string(trial)};
      const std::vector<Rat> h = h_coeffs_exact(beta, Rat(1));
      for (int t = 0; t <= beta; ++t) {
        const Rat expect = t == 0 ? Rat(-1) : (t == beta ? Rat(1) : Rat(0));
        if (h[static_cast<std::size_t>(t)] != expect)
          return {"q1_equivalence", false, "h(q=1) not the endpoint difference"};
      }
    }
    {  // beta = 1 reduction, checked exactly in rationals
      RolloutObservations obs1;
      obs1.n = n;
      obs1.sums = {obs.sums[0], obs.sums[1]};
      const double q = std::max(p, rng.uniform01());
      const std::vector<Rat> h = h_coeffs_exact(1, rat_of(q));
      const Rat exact_two_stage =
          rat_of(q) / (Rat(n) * rat_of(p)) * (h[0] * rat_of(obs1.sums[0]) + h[1] * rat_of(obs1.sums[1]));
      const Rat exact_endpoint = (rat_of(obs1.sums[1]) - rat_of(obs1.sums[0])) / (Rat(n) * rat_of(p));
      if (exact_two_stage != exact_endpoint)
        return {"beta1_equivalence", false, "rational identity failed at trial " + std::to_string(trial)};
      const double d2 = pi_two_stage(obs1, p, q);
      const double d1 = pi_one_stage(obs1, p);
      if (std::abs(pi_two_stage(obs1, p, p) - d1) != 0.0)
        return {"beta1_equivalence", false, "one-stage form is not the q=p two-stage form"};
      const double endpoint = (obs1.sums[1] - obs1.sums[0]) / (n * p);
      if (std::abs(d2 - endpoint) > 1e-12 * std::max(1.0, std::abs(endpoint)))
        return {"beta1_equivalence", false, "double-path drift at trial " + std::to_string(trial)};
    }
  }
  return {"q1_and_beta1_equivalences"};
}

struct VerifyReport {
  std::vector<CheckResult> checks;
  bool all_passed = true;
};

// CI entry point: the full invariant suite over exhaustive oracles. The full
// variant enlarges instance counts; both are deterministic.
inline VerifyReport verify(bool full = false) {
  VerifyReport report;
  auto add = [&report](CheckResult r) {
    report.all_passed = report.all_passed && r.passed;
    report.checks.push_back(std::move(r));
  };
  const int scale = full ? 3 : 1;
  add(check_lagrange_exactness([](int steps, double q) { return h_coeffs(steps, q); }, full ? 8 : 6,
                               50 * scale));
  add(check_h_bound(8));
  add(check_definition1_realizations(200 * scale));
  add(check_bracket_count(12));
  add(check_bias_oracle(8 * scale));
  add(check_beta1_variance_oracle(8 * scale));
  add(check_variance_bound_dominance(8 * scale));
  add(check_unbiasedness_qp(6 * scale));
  add(check_estimator_equivalences(40 * scale));
  return report;
}

inline void print_verify_report(std::ostream& out, const VerifyReport& report) {
  for (const auto& c : report.checks) {
    out << (c.passed ? "PASS " : "FAIL ") << c.name;
    if (!c.passed) out << ": " << c.detail;
    out << '\n';
  }
  out << (report.all_passed ? "verify: all checks passed" : "verify: FAILURES PRESENT") << '\n';
}

}  // namespace rollout
