#pragma once

#include <vector>

namespace hexfleet {

// Successive-shortest-path min-cost flow with integral capacities and real
// arc costs. Costs may be negative as long as the initial network has no
// negative cycle; Bellman-Ford seeds the node potentials, Dijkstra on reduced
// costs finds every later augmenting path.
class MinCostFlow {
 public:
  explicit MinCostFlow(int nodes);

  // Returns the arc index used by flow().
  int add_arc(int from, int to, long long capacity, double cost);

  struct Result {
    long long flow = 0;
    double cost = 0.0;
    int augmentations = 0;
  };

  // Pushes flow from source to sink along cheapest paths. With
  // `only_improving`, stops as soon as the cheapest path costs >= 0, which
  // yields a minimum-cost flow of unconstrained value; otherwise a
  // minimum-cost maximum flow.
  Result solve(int source, int sink, bool only_improving);

  long long flow(int arc) const { return capacity_[arc ^ 1]; }
  int node_count() const { return static_cast<int>(head_.size()); }

 private:
  bool seed_potentials(int source);
  void shortest_paths(int source);

  std::vector<int> head_;
  std::vector<int> next_;
  std::vector<int> to_;
  std::vector<long long> capacity_;
  std::vector<double> cost_;
  std::vector<double> potential_;
  std::vector<double> dist_;
  std::vector<int> parent_arc_;
};

}  // namespace hexfleet
