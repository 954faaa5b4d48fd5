#include <doctest.h>

#include <algorithm>
#include <random>

#include "cost.hpp"
#include "test_util.hpp"
#include "topology.hpp"

using namespace sensdecay;

TEST_CASE("index sets sort, deduplicate and reject nonpositive members") {
  const IndexSet s = IndexSet::of({3, 1, 3, 2});
  CHECK(s.members == std::vector<int>{1, 2, 3});
  CHECK(s.contains(2));
  CHECK_FALSE(s.contains(4));
  CHECK_THROWS_AS((void)IndexSet::of({0}), Error);
}

TEST_CASE("vehicle chain cost induces a path graph") {
  const auto g = build_graph(build_chain_cost(5, 0.1, 0.1));
  REQUIRE(g.node_count == 5);
  CHECK(g.neighbors(1) == std::vector<int>{2});
  CHECK(g.neighbors(3) == std::vector<int>{2, 4});
  CHECK(g.neighbors(5) == std::vector<int>{4});
}

TEST_CASE("block-diagonal cost gives an edgeless graph") {
  const auto g = build_graph(testutil::pattern_cost(4, {}));
  for (int i = 1; i <= 4; ++i) CHECK(g.neighbors(i).empty());
}

TEST_CASE("dense coupling on three nodes gives the complete graph") {
  const auto g = build_graph(testutil::pattern_cost(3, {{1, 2}, {1, 3}, {2, 3}}));
  CHECK(g.neighbors(1) == std::vector<int>{2, 3});
  CHECK(g.neighbors(2) == std::vector<int>{1, 3});
  CHECK(g.neighbors(3) == std::vector<int>{1, 2});
}

TEST_CASE("asymmetric coupling beyond tolerance is rejected") {
  auto cost = testutil::pattern_cost(2, {{1, 2}});
  cost.set_state_block(1, 2, 0.5 * Eigen::MatrixXd::Identity(1, 1));  // mirror stays -1
  CHECK_THROWS_AS((void)build_graph(cost), Error);
}

TEST_CASE("blocks below the relative zero tolerance do not create edges") {
  auto cost = testutil::pattern_cost(2, {});
  const double tiny = 0.5 * kZeroBlockRelTol;  // max entry of this cost is 1
  cost.set_state_block(1, 2, tiny * Eigen::MatrixXd::Identity(1, 1));
  cost.set_state_block(2, 1, tiny * Eigen::MatrixXd::Identity(1, 1));
  CHECK(build_graph(cost).neighbors(1).empty());
}

TEST_CASE("mis-sized blocks are rejected at installation") {
  auto cost = testutil::pattern_cost(2, {});
  CHECK_THROWS_AS(cost.set_state_block(1, 2, Eigen::MatrixXd::Identity(2, 2)), Error);
}

TEST_CASE("graph distance on a chain of 25") {
  std::vector<std::pair<int, int>> edges;
  for (int i = 1; i < 25; ++i) edges.push_back({i, i + 1});
  const auto g = build_graph(testutil::pattern_cost(25, edges));
  CHECK(graph_distance(g, 12, IndexSet::of({1})) == 11);
  CHECK(graph_distance(g, 12, IndexSet::of({12, 20})) == 0);
  CHECK_THROWS_AS((void)graph_distance(g, 1, IndexSet{}), Error);
}

TEST_CASE("distance across components is unreachable") {
  const auto g = build_graph(testutil::pattern_cost(4, {{1, 2}, {3, 4}}));
  CHECK_FALSE(graph_distance(g, 1, IndexSet::of({3})).has_value());
  CHECK(graph_distance(g, 1, IndexSet::of({2, 4})) == 1);
}

TEST_CASE("level sets on a chain of five") {
  const auto g = build_graph(build_chain_cost(5, 0.1, 0.1));
  const auto shells = level_sets(g, 3);
  REQUIRE(shells.size() == 3);
  CHECK(shells[0].members == std::vector<int>{3});
  CHECK(shells[1].members == std::vector<int>{2, 4});
  CHECK(shells[2].members == std::vector<int>{1, 5});
}

TEST_CASE("level sets of a single node and of a star") {
  const auto single = build_graph(testutil::pattern_cost(1, {}));
  const auto s0 = level_sets(single, 1);
  REQUIRE(s0.size() == 1);
  CHECK(s0[0].members == std::vector<int>{1});

  const auto star = build_graph(testutil::pattern_cost(4, {{1, 2}, {1, 3}, {1, 4}}));
  const auto shells = level_sets(star, 1);
  REQUIRE(shells.size() == 2);
  CHECK(shells[0].members == std::vector<int>{1});
  CHECK(shells[1].members == std::vector<int>{2, 3, 4});
}

TEST_CASE("random graphs: distance symmetry, adjacency rule, shell partition") {
  std::mt19937 rng(42);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  for (int trial = 0; trial < 25; ++trial) {
    const int s = 2 + static_cast<int>(coin(rng) * 8);
    std::vector<std::pair<int, int>> edges;
    for (int i = 1; i <= s; ++i) {
      for (int j = i + 1; j <= s; ++j) {
        if (coin(rng) < 0.35) edges.push_back({i, j});
      }
    }
    const auto cost = testutil::pattern_cost(s, edges);
    const auto g = build_graph(cost);

    for (int i = 1; i <= s; ++i) {
      for (int j = 1; j <= s; ++j) {
        const auto dij = graph_distance(g, i, IndexSet::of({j}));
        CHECK(dij == graph_distance(g, j, IndexSet::of({i})));
        if (i != j) {
          // distance >= 2 exactly when the coupling block vanishes
          const bool far = !dij || *dij >= 2;
          const bool zero_block = cost.state_block(i, j) == nullptr;
          CHECK(far == zero_block);
        }
      }
    }

    const auto shells = level_sets(g, 1);
    std::vector<int> seen;
    for (const auto& shell : shells) {
      for (int n : shell.members) seen.push_back(n);
    }
    std::sort(seen.begin(), seen.end());
    CHECK(std::adjacent_find(seen.begin(), seen.end()) == seen.end());
    const auto dist = distances_from(g, 1);
    std::size_t reachable = 0;
    for (const auto& d : dist) {
      if (d) ++reachable;
    }
    CHECK(seen.size() == reachable);
  }
}
