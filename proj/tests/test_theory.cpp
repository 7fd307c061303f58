#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>
#include <vector>

#include "rollout/theory.hpp"
#include "rollout/verify.hpp"

using namespace rollout;

TEST_CASE("bracket values", "[theory]") {
  REQUIRE(bracket(3, 7, 0) == 1.0);
  REQUIRE(bracket(2, 4, 2) == Catch::Approx(1.0 / 6.0));
  REQUIRE(bracket(5, 5, 3) == 1.0);
  REQUIRE(bracket(2, 6, 4) == 0.0);  // r > k
  REQUIRE_THROWS_AS(bracket(5, 4, 1), std::invalid_argument);
  REQUIRE_THROWS_AS(bracket(3, 4, -1), std::invalid_argument);
}

TEST_CASE("bracket equals the subset-counting ratio", "[theory]") {
  const CheckResult res = check_bracket_count(12);
  INFO(res.detail);
  REQUIRE(res.passed);
}

TEST_CASE("bias closed form special cases", "[theory]") {
  // q = p is unbiased.
  TinyInstance inst = random_tiny_instance(51);
  const long long t_final = inst.spec.treated_final(inst.model.n);
  inst.spec.kind = DesignKind::two_stage_unit_crd;
  inst.spec.clustering = nullptr;
  inst.spec.q = inst.spec.p = static_cast<double>(t_final) / inst.model.n;
  REQUIRE(bias_closed(inst.model, inst.spec).closed_form == Catch::Approx(0.0).margin(1e-12));

  // beta = 1 models are unbiased under any CRD kind.
  TinyInstanceOptions opt;
  opt.force_beta = 1;
  const TinyInstance inst1 = random_tiny_instance(52, opt);
  REQUIRE(bias_closed(inst1.model, inst1.spec).closed_form == Catch::Approx(0.0).margin(1e-12));

  // A clustering with no cut edges has no bias under the clustered design.
  std::istringstream in("0 1\n2 3\n4 5\n6 7\n");
  const InterferenceGraph g = load_edge_list(in, false);
  const Clustering comp = Clustering::from_assignment({0, 0, 1, 1, 2, 2, 3, 3});
  REQUIRE(cut_edges(g, comp) == 0);
  const SymmetricSynthModel m = make_symmetric_model(g, 2, 1.0, 0.0, 0.1, 0.5, {}, 77);
  DesignSpec spec{DesignKind::two_stage_clustered_crd, 0.25, 0.5, 2, &comp};
  REQUIRE(bias_closed(m, spec).closed_form == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("bias oracle equivalence", "[theory]") {
  const CheckResult res = check_bias_oracle(10, 4242);
  INFO(res.detail);
  REQUIRE(res.passed);
}

TEST_CASE("bias bound magnitude relation", "[theory]") {
  // The (q-p)/q * C(delta(Pi)) product understates the exact bias by the
  // finite-population factor n_c/(n_c-1): for order-2 models every cut subset
  // touches exactly two clusters, where (q/p) Pr(S in U) - 1 equals
  // -(n_c - m_c)/(n_c - 1). The product is the n_c -> infinity limit.
  const InterferenceGraph g = lattice(4);
  const Clustering blocks = grid_clustering(4, 2);
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    const SymmetricSynthModel m = make_symmetric_model(g, 2, 1.0, 0.0, 0.1, 0.5, {}, seed);
    DesignSpec spec{DesignKind::two_stage_clustered_crd, 0.25, 0.5, 2, &blocks};
    const BiasReport rep = bias_closed(materialize(m), spec);
    const double nc = blocks.n_clusters;
    REQUIRE(std::abs(rep.closed_form) ==
            Catch::Approx(rep.bound * nc / (nc - 1.0)).margin(1e-10));
    REQUIRE(std::abs(rep.closed_form) <= rep.bound * nc / (nc - 1.0) + 1e-12);
    REQUIRE(bias_bound(m, spec, blocks) == Catch::Approx(rep.bound).margin(1e-12));
  }

  // The bound grows with the cut effect and matches the bias scale on a
  // larger cluster count (slack 100/99 on the coarse lattice blocks).
  const InterferenceGraph big = lattice(10);
  const Clustering coarse = grid_clustering(10, 5);
  const SymmetricSynthModel m = make_symmetric_model(big, 2, 1.0, 0.0, 0.0, 0.5, {}, 5);
  DesignSpec spec{DesignKind::two_stage_clustered_crd, 0.3, 0.6, 2, &coarse};
  const BiasReport rep = bias_closed(materialize(m), spec);
  const double nc = coarse.n_clusters;
  REQUIRE(std::abs(rep.closed_form) == Catch::Approx(rep.bound * nc / (nc - 1.0)).margin(1e-10));

  // q = p and no-cut clusterings give a zero bound.
  std::istringstream in("0 1\n2 3\n4 5\n6 7\n");
  const InterferenceGraph paired = load_edge_list(in, false);
  const Clustering comp = Clustering::from_assignment({0, 0, 1, 1, 2, 2, 3, 3});
  const SymmetricSynthModel pm = make_symmetric_model(paired, 2, 1.0, 0.0, 0.0, 0.5, {}, 3);
  DesignSpec nocut{DesignKind::two_stage_clustered_crd, 0.25, 0.5, 2, &comp};
  REQUIRE(bias_bound(pm, nocut, comp) == Catch::Approx(0.0).margin(1e-12));
  DesignSpec qp{DesignKind::two_stage_clustered_crd, 0.25, 0.25, 2, &comp};
  REQUIRE(bias_bound(pm, qp, comp) == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("variance bound structure", "[theory]") {
  std::istringstream in("0 1\n1 2\n2 3\n3 0\n");
  const InterferenceGraph g = load_edge_list(in, false);
  const Clustering pairs = Clustering::from_assignment({0, 0, 1, 1});
  const SymmetricSynthModel m = make_symmetric_model(g, 2, 1.0, 0.0, 0.0, 0.5, {}, 11);

  DesignSpec q1{DesignKind::two_stage_clustered_crd, 0.5, 1.0, 2, &pairs};
  const VarianceReport r1 = variance_upper_bound(m, g, q1, pairs);
  REQUIRE(r1.extrapolation_term == 0.0);
  REQUIRE(r1.cluster_var_term >= 0.0);

  DesignSpec qp{DesignKind::two_stage_clustered_crd, 0.5, 0.5, 2, &pairs};
  const VarianceReport r2 = variance_upper_bound(m, g, qp, pairs);
  REQUIRE(r2.cluster_var_term == 0.0);
  REQUIRE(r2.cut_term == 0.0);
  REQUIRE(r2.extrapolation_term > 0.0);

  // Negative coefficients are refused.
  CoefficientModel neg = CoefficientModel::from_terms(4, 1, {{{{}, 1.0}, {{0}, -1.0}}, {}, {}, {}});
  DesignSpec spec{DesignKind::two_stage_clustered_crd, 0.5, 1.0, 1, &pairs};
  REQUIRE_THROWS_AS(variance_upper_bound(neg, g, spec, pairs), std::domain_error);
}

TEST_CASE("variance bound dominates the oracle variance", "[theory]") {
  const CheckResult res = check_variance_bound_dominance(10, 808);
  INFO(res.detail);
  REQUIRE(res.passed);
}

TEST_CASE("beta-1 exact variance limits", "[theory]") {
  // q = 1: (1-p)/(p(n_c-1)) on the cluster term, zero on the unit term.
  const Rat p(1, 4);
  const Beta1VarCoeffs at_one = var_exact_beta1_coeffs_exact(p, Rat(1), 16, 8);
  REQUIRE(at_one.unit_term == 0);
  REQUIRE(at_one.cluster_term == (1 - p) / (p * Rat(7)));

  // q = p: (1-p)/(p(n-1)) on the unit term, zero on the cluster term.
  const Beta1VarCoeffs at_p = var_exact_beta1_coeffs_exact(p, p, 16, 8);
  REQUIRE(at_p.cluster_term == 0);
  REQUIRE(at_p.unit_term == (1 - p) / (p * Rat(15)));

  REQUIRE_THROWS_AS(var_exact_beta1_coeffs_exact(Rat(1, 2), Rat(3, 4), 16, 1), std::invalid_argument);
  REQUIRE_THROWS_AS(var_exact_beta1_coeffs_exact(Rat(1, 8), Rat(1, 2), 4, 2), std::invalid_argument);  // pn = q impossible... pn=0.5
}

TEST_CASE("beta-1 exact variance equals the oracle", "[theory]") {
  const CheckResult res = check_beta1_variance_oracle(10, 31337);
  INFO(res.detail);
  REQUIRE(res.passed);

  // Singleton clusters: the clustered design degenerates to the unit design.
  TinyInstanceOptions opt;
  opt.force_beta = 1;
  opt.force_clustered = true;
  for (std::uint64_t seed = 400; seed < 410; ++seed) {
    TinyInstance inst = random_tiny_instance(seed, opt);
    if (inst.clustering->n_clusters != inst.model.n) continue;
    double exact;
    try {
      exact = var_exact_beta1(inst.model, inst.spec);
    } catch (const std::exception&) {
      continue;
    }
    REQUIRE(oracle_moments(inst.model, inst.spec).variance_d() == Catch::Approx(exact).margin(1e-10));
  }
}

TEST_CASE("crd mean variance", "[theory]") {
  const std::vector<double> constant = {3.0, 3.0, 3.0, 3.0};
  REQUIRE(crd_mean_variance(constant, 0.5) == 0.0);

  // L = [0,2], p = 1/2: CRD(1,2) picks one of the two entries; the scaled
  // sum (1/(p*2)) sum L_i z_i takes values {0, 2} with equal probability,
  // so the variance is 1.
  const std::vector<double> pair = {0.0, 2.0};
  REQUIRE(crd_mean_variance(pair, 0.5) == Catch::Approx(1.0));

  // |L| = 5 random vectors against direct enumeration of CRD(pm, m).
  Rng rng(606);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> L(5);
    for (double& v : L) v = 6.0 * rng.uniform01() - 3.0;
    const double p = 0.4;  // pm = 2 of 5
    double mean = 0.0, sq = 0.0;
    int count = 0;
    for (int a = 0; a < 5; ++a)
      for (int b = a + 1; b < 5; ++b) {
        const double est = (L[static_cast<std::size_t>(a)] + L[static_cast<std::size_t>(b)]) / 2.0;
        mean += est;
        sq += est * est;
        ++count;
      }
    mean /= count;
    const double enumerated = sq / count - mean * mean;
    REQUIRE(crd_mean_variance(L, p) == Catch::Approx(enumerated).margin(1e-12));
  }

  REQUIRE_THROWS_AS(crd_mean_variance(pair, 0.3), std::invalid_argument);   // p|L| not integral
  REQUIRE_THROWS_AS(crd_mean_variance(pair, 1.0), std::invalid_argument);   // degenerate
}

TEST_CASE("oracle expectation at q = p is the TTE", "[theory]") {
  const CheckResult res = check_unbiasedness_qp(6, 5050);
  INFO(res.detail);
  REQUIRE(res.passed);
}

TEST_CASE("oracle variance of a constant-outcome model is zero", "[theory]") {
  // Baselines only: every estimate is exactly zero.
  CoefficientModel m = CoefficientModel::from_terms(
      4, 1, {{{{}, 2.0}}, {{{}, 2.0}}, {{{}, 2.0}}, {{{}, 2.0}}});
  DesignSpec spec{DesignKind::two_stage_unit_crd, 0.25, 0.5, 1, nullptr};
  const OracleMoments om = oracle_moments(m, spec);
  REQUIRE(om.expectation == 0);
  REQUIRE(om.variance == 0);
}

TEST_CASE("oracle budget guards", "[theory]") {
  CoefficientModel m = CoefficientModel::from_terms(
      4, 1, {{{{}, 1.0}}, {{{}, 1.0}}, {{{}, 1.0}}, {{{}, 1.0}}});
  DesignSpec bern{DesignKind::two_stage_unit_bernoulli, 0.25, 0.5, 1, nullptr};
  REQUIRE_THROWS_AS(oracle_moments(m, bern), std::invalid_argument);
}

TEST_CASE("q optimality at beta = 1", "[theory]") {
  // 8-cycle so that p*n = 2 keeps the formula away from |U| = 1.
  std::istringstream in("0 1\n1 2\n2 3\n3 4\n4 5\n5 6\n6 7\n7 0\n");
  const InterferenceGraph g = load_edge_list(in, false);
  const SymmetricSynthModel m = make_symmetric_model(g, 1, 1.0, 0.0, 0.05, 0.5, {}, 44);
  const Clustering pairs = Clustering::from_assignment({0, 0, 1, 1, 2, 2, 3, 3});
  const std::vector<double> grid = {0.25, 0.5, 0.75, 1.0};
  REQUIRE(beta1_q_optimality(m, pairs, 0.25, grid) == Catch::Approx(0.25));

  // Constant influences: every grid value ties at zero variance; the
  // smallest q wins the tie.
  std::vector<std::vector<CoefficientModel::Term>> terms(8);
  for (int i = 0; i < 8; ++i) terms[static_cast<std::size_t>(i)] = {{{}, 0.0}, {{i}, 1.0}};
  CoefficientModel constant = CoefficientModel::from_terms(8, 1, std::move(terms));
  REQUIRE(beta1_q_optimality(constant, pairs, 0.25, grid) == Catch::Approx(0.25));

  // Singleton clusters: variance is nondecreasing in q.
  const auto L = influence_L(m);
  const double var_L = var_hat(L);
  double prev = -1.0;
  for (double q : grid) {
    const Beta1VarCoeffs c = var_exact_beta1_coeffs_exact(rat_of(0.25), rat_of(q), 8, 8);
    const double v = to_double(c.unit_term) * var_L + to_double(c.cluster_term) * var_L;
    REQUIRE(v >= prev - 1e-12);
    prev = v;
  }

  // Mixed signs are refused.
  std::vector<std::vector<CoefficientModel::Term>> mixed_terms(8);
  for (int i = 0; i < 8; ++i)
    mixed_terms[static_cast<std::size_t>(i)] = {{{}, 0.0}, {{i}, i == 0 ? 1.0 : (i == 1 ? -1.0 : 0.0)}};
  CoefficientModel mixed = CoefficientModel::from_terms(8, 1, std::move(mixed_terms));
  REQUIRE_THROWS_AS(beta1_q_optimality(mixed, pairs, 0.25, grid), std::invalid_argument);
}

TEST_CASE("oracle rejects oversized instances", "[theory]") {
  std::vector<std::vector<CoefficientModel::Term>> terms(10);
  for (int i = 0; i < 10; ++i) terms[static_cast<std::size_t>(i)] = {{{}, 1.0}};
  CoefficientModel big = CoefficientModel::from_terms(10, 1, std::move(terms));
  DesignSpec spec{DesignKind::two_stage_unit_crd, 0.5, 1.0, 1, nullptr};
  REQUIRE_THROWS_AS(oracle_moments(big, spec), std::invalid_argument);
}

TEST_CASE("exact order-1 variance rejects other model orders", "[theory]") {
  const InterferenceGraph g = lattice(2);
  const SymmetricSynthModel m = make_symmetric_model(g, 2, 1.0, 0.0, 0.0, 0.5, {}, 1);
  const Clustering singles = singleton_clustering(4);
  DesignSpec spec{DesignKind::two_stage_clustered_crd, 0.25, 0.5, 1, &singles};
  REQUIRE_THROWS_AS(var_exact_beta1(m, spec), std::invalid_argument);
}

TEST_CASE("symmetric bias path agrees with the materialized path", "[theory]") {
  const InterferenceGraph g = lattice(6);
  const Clustering blocks = grid_clustering(6, 3);
  for (int beta : {1, 2, 3}) {
    const SymmetricSynthModel m = make_symmetric_model(g, beta, 1.0, 0.0, 0.1, 0.5, {}, 60 + beta);
    const CoefficientModel c = materialize(m);
    std::vector<DesignSpec> specs = {
        {DesignKind::two_stage_unit_crd, 0.25, 0.75, 3, nullptr},
        {DesignKind::two_stage_clustered_crd, 0.25, 0.5, 3, &blocks},
        {DesignKind::two_stage_unit_bernoulli, 0.25, 0.5, 3, nullptr},
    };
    for (const auto& spec : specs) {
      const BiasReport lazy = bias_closed(m, spec);
      const BiasReport expl = bias_closed(c, spec);
      REQUIRE(lazy.closed_form == Catch::Approx(expl.closed_form).margin(1e-12));
      for (std::size_t k = 1; k < lazy.per_size_terms.size(); ++k)
        REQUIRE(lazy.per_size_terms[k] == Catch::Approx(expl.per_size_terms[k]).margin(1e-12));
    }
  }
}
