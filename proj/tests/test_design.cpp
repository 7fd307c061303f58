#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <vector>

#include "rollout/design.hpp"

using namespace rollout;

namespace {

Clustering pairs_clustering(int n) {
  std::vector<int> assign(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) assign[static_cast<std::size_t>(i)] = i / 2;
  return Clustering::from_assignment(std::move(assign));
}

}  // namespace

TEST_CASE("design validation", "[design]") {
  DesignSpec bad_q{DesignKind::two_stage_unit_crd, 0.5, 0.25, 1, nullptr};
  REQUIRE_THROWS_AS(bad_q.validate(8), std::invalid_argument);

  DesignSpec one_stage{DesignKind::one_stage_crd, 0.25, 0.5, 2, nullptr};
  REQUIRE_THROWS_AS(one_stage.validate(8), std::invalid_argument);

  DesignSpec frac{DesignKind::two_stage_unit_crd, 0.25, 0.3, 2, nullptr};
  REQUIRE_THROWS_AS(frac.validate(8), std::invalid_argument);  // p*n/q = 20/3

  DesignSpec no_clustering{DesignKind::two_stage_clustered_crd, 0.25, 0.5, 2, nullptr};
  REQUIRE_THROWS_AS(no_clustering.validate(8), std::invalid_argument);

  Clustering unequal = Clustering::from_assignment({0, 0, 0, 1, 1, 1, 1, 1});
  DesignSpec uneq{DesignKind::two_stage_clustered_crd, 0.25, 0.5, 2, &unequal};
  REQUIRE_THROWS_AS(uneq.validate(8), std::invalid_argument);

  Clustering pairs = pairs_clustering(8);
  DesignSpec ok{DesignKind::two_stage_clustered_crd, 0.25, 0.5, 2, &pairs};
  REQUIRE_NOTHROW(ok.validate(8));
}

TEST_CASE("one-stage CRD hits every support", "[design]") {
  DesignSpec spec{DesignKind::one_stage_crd, 0.5, 0.5, 1, nullptr};
  std::map<std::vector<int>, int> support_counts;
  Rng rng(421);
  const int draws = 6000;
  for (int k = 0; k < draws; ++k) {
    const RolloutRealization r = sample(spec, 4, rng);
    REQUIRE(r.treated_count_at(1) == 2);
    std::vector<int> treated;
    for (int i = 0; i < 4; ++i)
      if (r.treat_time[static_cast<std::size_t>(i)] == 1) treated.push_back(i);
    ++support_counts[treated];
  }
  REQUIRE(support_counts.size() == 6);  // all C(4,2) subsets occur
  for (const auto& [subset, count] : support_counts) {
    // Rough uniformity: 3 binomial standard errors around draws/6.
    const double expect = draws / 6.0;
    const double se = std::sqrt(draws * (1.0 / 6.0) * (5.0 / 6.0));
    REQUIRE(std::abs(count - expect) <= 3.0 * se);
  }
}

TEST_CASE("two-stage unit CRD counts and nesting", "[design]") {
  DesignSpec spec{DesignKind::two_stage_unit_crd, 0.25, 0.5, 2, nullptr};
  Rng rng(7);
  for (int k = 0; k < 100; ++k) {
    const RolloutRealization r = sample(spec, 8, rng);
    long long selected = 0;
    for (auto s : r.selected) selected += s;
    REQUIRE(selected == 4);
    REQUIRE(r.treated_count_at(1) == 1);
    REQUIRE(r.treated_count_at(2) == 2);
    REQUIRE_NOTHROW(check_realization(spec, r));
  }
}

TEST_CASE("clustered CRD selects whole clusters", "[design]") {
  Clustering pairs = pairs_clustering(8);
  DesignSpec spec{DesignKind::two_stage_clustered_crd, 0.25, 0.5, 2, &pairs};
  Rng rng(13);
  for (int k = 0; k < 100; ++k) {
    const RolloutRealization r = sample(spec, 8, rng);
    long long selected = 0;
    for (auto s : r.selected) selected += s;
    REQUIRE(selected == 4);
    for (int c = 0; c < pairs.n_clusters; ++c) {
      const auto& mem = pairs.members[static_cast<std::size_t>(c)];
      REQUIRE(r.selected[static_cast<std::size_t>(mem[0])] == r.selected[static_cast<std::size_t>(mem[1])]);
    }
    REQUIRE_NOTHROW(check_realization(spec, r));
  }
}

TEST_CASE("bernoulli stage 1 and floor counts", "[design]") {
  DesignSpec spec{DesignKind::two_stage_unit_bernoulli, 0.25, 0.5, 2, nullptr};
  Rng rng(29);
  long long selected_total = 0;
  const int draws = 20000;
  for (int k = 0; k < draws; ++k) {
    const RolloutRealization r = sample(spec, 8, rng);
    REQUIRE_NOTHROW(check_realization(spec, r));
    for (auto s : r.selected) selected_total += s;
  }
  const double marginal = static_cast<double>(selected_total) / (8.0 * draws);
  const double se = std::sqrt(0.5 * 0.5 / (8.0 * draws));
  REQUIRE(std::abs(marginal - 0.5) <= 3.0 * se);
}

TEST_CASE("q = p makes stage 1 deterministic", "[design]") {
  DesignSpec spec{DesignKind::two_stage_unit_crd, 0.5, 0.5, 2, nullptr};
  Rng rng(5);
  const RolloutRealization r = sample(spec, 8, rng);
  for (auto s : r.selected) REQUIRE(s == 1);
}

TEST_CASE("treatment marginals", "[design]") {
  DesignSpec spec{DesignKind::two_stage_unit_crd, 0.25, 0.5, 2, nullptr};
  REQUIRE(marginal_treated(spec, 8, 0, 0) == 0.0);
  REQUIRE(marginal_treated(spec, 8, 3, 1) == Catch::Approx(0.125));
  REQUIRE(marginal_treated(spec, 8, 3, 2) == Catch::Approx(0.25));

  DesignSpec one_stage{DesignKind::one_stage_crd, 0.5, 0.5, 2, nullptr};
  REQUIRE(marginal_treated(one_stage, 8, 0, 2) == Catch::Approx(0.5));

  // Empirical check of the 0.125 value.
  Rng rng(61);
  const int draws = 40000;
  long long hits = 0;
  for (int k = 0; k < draws; ++k) {
    const RolloutRealization r = sample(spec, 8, rng);
    hits += r.treat_time[3] <= 1;
  }
  const double se = std::sqrt(0.125 * 0.875 / draws);
  REQUIRE(std::abs(static_cast<double>(hits) / draws - 0.125) <= 3.0 * se);
}

TEST_CASE("subset selection probabilities", "[design]") {
  DesignSpec unit{DesignKind::two_stage_unit_crd, 0.25, 0.5, 1, nullptr};
  const std::vector<int> singleton = {2};
  REQUIRE(prob_subset_in_u(unit, 8, singleton) == Catch::Approx(0.5));

  // n = 4, |U| = 2, |S| = 2: C(2,2)/C(4,2) = 1/6.
  DesignSpec small{DesignKind::two_stage_unit_crd, 0.25, 0.5, 1, nullptr};
  const std::vector<int> pair = {0, 3};
  REQUIRE(prob_subset_in_u(small, 4, pair) == Catch::Approx(1.0 / 6.0));

  Clustering pairs = pairs_clustering(8);
  DesignSpec clustered{DesignKind::two_stage_clustered_crd, 0.25, 0.5, 2, &pairs};
  const std::vector<int> within = {0, 1};
  REQUIRE(prob_subset_in_u(clustered, 8, within) == Catch::Approx(0.5));
  const std::vector<int> across = {0, 2};
  REQUIRE(prob_subset_in_u(clustered, 8, across) == Catch::Approx(0.5 * 1.0 / 3.0));

  DesignSpec bern{DesignKind::two_stage_unit_bernoulli, 0.25, 0.5, 2, nullptr};
  REQUIRE(prob_subset_in_u(bern, 8, pair) == Catch::Approx(0.25));

  DesignSpec one{DesignKind::one_stage_crd, 0.25, 0.25, 1, nullptr};
  REQUIRE(prob_subset_in_u(one, 8, pair) == 1.0);

  // Empirical agreement for the unit pair case.
  Rng rng(83);
  const int draws = 40000;
  long long hits = 0;
  for (int k = 0; k < draws; ++k) {
    const RolloutRealization r = sample(small, 4, rng);
    hits += r.selected[0] && r.selected[3];
  }
  const double truth = 1.0 / 6.0;
  const double se = std::sqrt(truth * (1 - truth) / draws);
  REQUIRE(std::abs(static_cast<double>(hits) / draws - truth) <= 3.0 * se);
}

TEST_CASE("stage-1 marginals are p/q for every node", "[design]") {
  Clustering pairs = pairs_clustering(8);
  for (const DesignSpec& spec :
       {DesignSpec{DesignKind::two_stage_unit_crd, 0.25, 0.5, 2, nullptr},
        DesignSpec{DesignKind::two_stage_clustered_crd, 0.25, 0.5, 2, &pairs}}) {
    Rng rng(static_cast<std::uint64_t>(spec.kind) * 1000 + 101);
    std::vector<long long> hits(8, 0);
    const int draws = 20000;
    for (int k = 0; k < draws; ++k) {
      const StageOneDraw s1 = sample_stage1(spec, 8, rng);
      for (int i : s1.members) ++hits[static_cast<std::size_t>(i)];
    }
    const double se = std::sqrt(0.5 * 0.5 / draws);
    for (int i = 0; i < 8; ++i)
      REQUIRE(std::abs(static_cast<double>(hits[static_cast<std::size_t>(i)]) / draws - 0.5) <= 3.0 * se);
  }
}

TEST_CASE("q snapping", "[design]") {
  // p = 0.25, n = 8: feasible |U| in {2..8}, q = 2/|U|.
  REQUIRE(snap_q(DesignKind::two_stage_unit_crd, 0.25, 0.5, 8) == Catch::Approx(0.5));
  // 0.45 sits exactly between 0.4 and 0.5; ties resolve toward the smaller q.
  REQUIRE(snap_q(DesignKind::two_stage_unit_crd, 0.25, 0.45, 8) == Catch::Approx(0.4));
  REQUIRE(snap_q(DesignKind::two_stage_unit_crd, 0.25, 0.29, 8) == Catch::Approx(2.0 / 7.0));

  const double snapped = snap_q(DesignKind::two_stage_clustered_crd, 0.25, 0.7, 8, 4);
  Clustering pairs = pairs_clustering(8);
  DesignSpec spec{DesignKind::two_stage_clustered_crd, 0.25, snapped, 2, &pairs};
  REQUIRE_NOTHROW(spec.validate(8));
}
