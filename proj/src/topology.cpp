#include "topology.hpp"

#include <algorithm>
#include <deque>

#include "cost.hpp"

namespace sensdecay {

IndexSet IndexSet::of(std::vector<int> nodes) {
  for (int n : nodes) {
    if (n < 1) fail(ErrorCode::InvalidArgument, "index set members must be >= 1");
  }
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
  return IndexSet{std::move(nodes)};
}

bool IndexSet::contains(int node) const {
  return std::binary_search(members.begin(), members.end(), node);
}

const std::vector<int>& InterconnectionGraph::neighbors(int node) const {
  require_valid_node(node);
  return adjacency[node - 1];
}

void InterconnectionGraph::require_valid_node(int node) const {
  if (node < 1 || node > node_count) {
    fail(ErrorCode::InvalidArgument,
         "node " + std::to_string(node) + " outside 1.." + std::to_string(node_count));
  }
}

InterconnectionGraph build_graph(const QuadraticCost& cost) {
  cost.validate_symmetric();
  const int s = cost.node_count();
  InterconnectionGraph g;
  g.node_count = s;
  g.adjacency.assign(s, {});
  g.state_dims = cost.state_dims();
  g.control_dims = cost.control_dims();

  const double tol = kZeroBlockRelTol * cost.max_abs_entry();
  for (int i = 1; i <= s; ++i) {
    for (int j = i + 1; j <= s; ++j) {
      const Eigen::MatrixXd* bij = cost.state_block(i, j);
      const Eigen::MatrixXd* bji = cost.state_block(j, i);
      double mag = 0.0;
      if (bij) mag = std::max(mag, bij->cwiseAbs().maxCoeff());
      if (bji) mag = std::max(mag, bji->cwiseAbs().maxCoeff());
      if (mag > tol) {
        g.adjacency[i - 1].push_back(j);
        g.adjacency[j - 1].push_back(i);
      }
    }
  }
  for (auto& nbrs : g.adjacency) std::sort(nbrs.begin(), nbrs.end());
  return g;
}

std::vector<std::optional<int>> distances_from(const InterconnectionGraph& g, int source) {
  g.require_valid_node(source);
  std::vector<std::optional<int>> dist(g.node_count);
  std::deque<int> queue;
  dist[source - 1] = 0;
  queue.push_back(source);
  while (!queue.empty()) {
    int v = queue.front();
    queue.pop_front();
    for (int w : g.adjacency[v - 1]) {
      if (!dist[w - 1]) {
        dist[w - 1] = *dist[v - 1] + 1;
        queue.push_back(w);
      }
    }
  }
  return dist;
}

std::optional<int> graph_distance(const InterconnectionGraph& g, int node, const IndexSet& target) {
  if (target.empty()) fail(ErrorCode::InvalidArgument, "graph_distance: empty target set");
  g.require_valid_node(node);
  for (int t : target.members) g.require_valid_node(t);

  auto dist = distances_from(g, node);
  std::optional<int> best;
  for (int t : target.members) {
    if (dist[t - 1] && (!best || *dist[t - 1] < *best)) best = dist[t - 1];
  }
  return best;
}

std::vector<IndexSet> level_sets(const InterconnectionGraph& g, int source) {
  auto dist = distances_from(g, source);
  int max_d = 0;
  for (const auto& d : dist) {
    if (d) max_d = std::max(max_d, *d);
  }
  std::vector<IndexSet> shells(max_d + 1);
  for (int node = 1; node <= g.node_count; ++node) {
    if (dist[node - 1]) shells[*dist[node - 1]].members.push_back(node);
  }
  return shells;  // members are already sorted: nodes visited in ascending order
}

}  // namespace sensdecay
