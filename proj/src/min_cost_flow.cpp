#include "hexfleet/min_cost_flow.hpp"

#include <algorithm>
#include <functional>
#include <limits>
#include <queue>

#include "hexfleet/errors.hpp"

namespace hexfleet {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
// Path costs within this distance of zero count as non-improving.
constexpr double kCostEpsilon = 1e-9;
}  // namespace

MinCostFlow::MinCostFlow(int nodes) : head_(nodes, -1) {}

int MinCostFlow::add_arc(int from, int to, long long capacity, double cost) {
  require(from >= 0 && from < node_count() && to >= 0 && to < node_count(), "min-cost flow arc endpoint out of range");
  require(capacity >= 0, "min-cost flow arc capacity must be non-negative");
  const int id = static_cast<int>(to_.size());
  // Forward arc at even index, residual twin at id ^ 1.
  to_.push_back(to);
  capacity_.push_back(capacity);
  cost_.push_back(cost);
  next_.push_back(head_[from]);
  head_[from] = id;
  to_.push_back(from);
  capacity_.push_back(0);
  cost_.push_back(-cost);
  next_.push_back(head_[to]);
  head_[to] = id + 1;
  return id;
}

bool MinCostFlow::seed_potentials(int source) {
  const int n = node_count();
  potential_.assign(n, kInf);
  potential_[source] = 0.0;
  for (int pass = 0; pass < n; ++pass) {
    bool changed = false;
    for (int arc = 0; arc < static_cast<int>(to_.size()); ++arc) {
      if (capacity_[arc] <= 0) continue;
      const int from = to_[arc ^ 1];
      if (potential_[from] == kInf) continue;
      const double candidate = potential_[from] + cost_[arc];
      if (candidate < potential_[to_[arc]] - kCostEpsilon) {
        potential_[to_[arc]] = candidate;
        changed = true;
      }
    }
    if (!changed) return true;
  }
  return false;
}

void MinCostFlow::shortest_paths(int source) {
  const int n = node_count();
  dist_.assign(n, kInf);
  parent_arc_.assign(n, -1);
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
  dist_[source] = 0.0;
  queue.emplace(0.0, source);
  while (!queue.empty()) {
    const auto [d, u] = queue.top();
    queue.pop();
    if (d > dist_[u]) continue;
    for (int arc = head_[u]; arc != -1; arc = next_[arc]) {
      if (capacity_[arc] <= 0) continue;
      const int v = to_[arc];
      const double reduced = std::max(0.0, cost_[arc] + potential_[u] - potential_[v]);
      if (dist_[u] + reduced < dist_[v]) {
        dist_[v] = dist_[u] + reduced;
        parent_arc_[v] = arc;
        queue.emplace(dist_[v], v);
      }
    }
  }
}

MinCostFlow::Result MinCostFlow::solve(int source, int sink, bool only_improving) {
  require(source != sink, "min-cost flow source and sink must differ");
  Result result;
  if (!seed_potentials(source)) throw ContractViolation("min-cost flow network has a negative cycle");
  // Nodes unreachable at the start stay unreachable; give them a finite
  // potential so reduced costs stay well defined.
  for (auto& p : potential_) {
    if (p == kInf) p = 0.0;
  }

  while (true) {
    shortest_paths(source);
    if (dist_[sink] == kInf) break;
    for (int v = 0; v < node_count(); ++v) {
      if (dist_[v] < kInf) potential_[v] += dist_[v];
    }
    const double path_cost = potential_[sink] - potential_[source];
    if (only_improving && path_cost >= -kCostEpsilon) break;

    long long bottleneck = std::numeric_limits<long long>::max();
    for (int v = sink; v != source; v = to_[parent_arc_[v] ^ 1]) {
      bottleneck = std::min(bottleneck, capacity_[parent_arc_[v]]);
    }
    double cost = 0.0;
    for (int v = sink; v != source; v = to_[parent_arc_[v] ^ 1]) {
      const int arc = parent_arc_[v];
      capacity_[arc] -= bottleneck;
      capacity_[arc ^ 1] += bottleneck;
      cost += cost_[arc];
    }
    result.flow += bottleneck;
    result.cost += cost * static_cast<double>(bottleneck);
    ++result.augmentations;
  }
  return result;
}

}  // namespace hexfleet
