#pragma once

#include <optional>
#include <vector>

#include "errors.hpp"

namespace sensdecay {

class QuadraticCost;

/// Sorted, duplicate-free set of 1-based node indices.
struct IndexSet {
  std::vector<int> members;

  static IndexSet of(std::vector<int> nodes);

  bool empty() const { return members.empty(); }
  std::size_t size() const { return members.size(); }
  bool contains(int node) const;
};

/// Coupling structure of the cost: one node per subsystem, an edge wherever
/// the corresponding off-diagonal cost block is nonzero. Immutable after
/// construction; safe for concurrent reads.
struct InterconnectionGraph {
  int node_count = 0;
  std::vector<std::vector<int>> adjacency;  // adjacency[i] = sorted 1-based neighbors of node i+1
  std::vector<int> state_dims;
  std::vector<int> control_dims;

  const std::vector<int>& neighbors(int node) const;
  void require_valid_node(int node) const;
};

/// Relative tolerance below which a cost block counts as zero (no edge).
inline constexpr double kZeroBlockRelTol = 1e-12;

InterconnectionGraph build_graph(const QuadraticCost& cost);

/// Per-node BFS distances from `source`; empty optional marks unreachable nodes.
std::vector<std::optional<int>> distances_from(const InterconnectionGraph& g, int source);

/// Shortest-path distance from node i to the closest member of `target`.
std::optional<int> graph_distance(const InterconnectionGraph& g, int node, const IndexSet& target);

/// Distance shells around `source`: result[k] holds the nodes at distance
/// exactly k. Shells partition the connected component of the source.
std::vector<IndexSet> level_sets(const InterconnectionGraph& g, int source);

}  // namespace sensdecay
