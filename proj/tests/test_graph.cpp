#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "rollout/graph.hpp"

using namespace rollout;

TEST_CASE("lattice(2) is the 2x2 corner case", "[graph]") {
  const InterferenceGraph g = lattice(2);
  REQUIRE(g.n == 4);
  long long total = 0;
  for (int i = 0; i < 4; ++i) {
    REQUIRE(g.degree(i) == 3);  // self + 2 neighbors
    total += g.degree(i);
  }
  REQUIRE(total == 12);
  REQUIRE(g.max_in_degree == 3);
}

TEST_CASE("lattice(3) degrees by position", "[graph]") {
  const InterferenceGraph g = lattice(3);
  REQUIRE(g.degree(4) == 5);  // center
  for (int corner : {0, 2, 6, 8}) REQUIRE(g.degree(corner) == 3);
}

TEST_CASE("lattice degree sum identity", "[graph]") {
  for (int s : {1, 2, 3, 5, 10, 17, 33, 50}) {
    const InterferenceGraph g = lattice(s);
    long long total = 0;
    for (int i = 0; i < g.n; ++i) total += g.degree(i);
    REQUIRE(total == static_cast<long long>(s) * s + 4LL * s * (s - 1));
    REQUIRE(g.avg_in_degree == Catch::Approx(static_cast<double>(total) / (s * s)));
  }
}

TEST_CASE("lattice rejects side 0", "[graph]") {
  REQUIRE_THROWS_AS(lattice(0), std::invalid_argument);
}

TEST_CASE("edge list loading symmetrizes and adds self-loops", "[graph]") {
  std::istringstream in("0 1\n");
  const InterferenceGraph g = load_edge_list(in, false);
  REQUIRE(g.n == 2);
  REQUIRE(g.in_nbrs[0] == std::vector<int>{0, 1});
  REQUIRE(g.in_nbrs[1] == std::vector<int>{0, 1});
}

TEST_CASE("directed edge list keeps direction", "[graph]") {
  std::istringstream in("0 1\n1 2\n");
  const InterferenceGraph g = load_edge_list(in, true);
  REQUIRE(g.n == 3);
  REQUIRE(g.in_nbrs[2] == std::vector<int>{1, 2});
  REQUIRE(g.in_nbrs[0] == std::vector<int>{0});
}

TEST_CASE("duplicate edges collapse", "[graph]") {
  std::istringstream a("0 1\n0 1\n"), b("0 1\n");
  const InterferenceGraph ga = load_edge_list(a, true);
  const InterferenceGraph gb = load_edge_list(b, true);
  REQUIRE(ga.in_nbrs == gb.in_nbrs);
}

TEST_CASE("edge list comments and errors", "[graph]") {
  std::istringstream ok("# comment\n0 1\n\n1 0\n");
  REQUIRE_NOTHROW(load_edge_list(ok, true));

  std::istringstream bad("0 1\nx y\n");
  REQUIRE_THROWS_WITH(load_edge_list(bad, true), Catch::Matchers::ContainsSubstring("line 2"));

  std::istringstream empty("# nothing\n");
  REQUIRE_THROWS_WITH(load_edge_list(empty, true), Catch::Matchers::ContainsSubstring("empty"));

  std::istringstream extra("0 1 2\n");
  REQUIRE_THROWS_AS(load_edge_list(extra, true), std::runtime_error);
}

TEST_CASE("sparse ids are rejected, compact remaps them", "[graph]") {
  std::istringstream sparse("0 2\n");
  REQUIRE_THROWS_WITH(load_edge_list(sparse, true), Catch::Matchers::ContainsSubstring("compact"));

  std::istringstream again("5 9\n9 5\n");
  const RemappedGraph r = load_edge_list_compact(again, true);
  REQUIRE(r.graph.n == 2);
  REQUIRE(r.original_id == std::vector<long long>{5, 9});
  REQUIRE(r.graph.in_nbrs[0] == std::vector<int>{0, 1});
}

TEST_CASE("save then load reproduces the structure", "[graph]") {
  const InterferenceGraph g = lattice(4);
  std::ostringstream out;
  save_edge_list(out, g);
  std::istringstream in(out.str());
  const InterferenceGraph g2 = load_edge_list(in, true);
  REQUIRE(g2.in_nbrs == g.in_nbrs);

  std::istringstream random_in("0 1\n2 0\n1 2\n2 1\n");
  const InterferenceGraph h = load_edge_list(random_in, true);
  std::ostringstream out2;
  save_edge_list(out2, h);
  std::istringstream in2(out2.str());
  REQUIRE(load_edge_list(in2, true).in_nbrs == h.in_nbrs);
}
