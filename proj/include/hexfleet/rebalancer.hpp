#pragma once

#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "hexfleet/city.hpp"
#include "hexfleet/policy_tables.hpp"
#include "hexfleet/sim.hpp"

namespace hexfleet {

// Supply minus outgoing demand per (t, h), with |delta| < threshold masked
// to zero.
struct ImbalanceMatrix {
  int horizon = 0;
  int zones = 0;
  double threshold = 0.0;
  std::vector<double> delta;

  double at(TimeStep t, ZoneId h) const { return delta[static_cast<std::size_t>(t) * zones + h]; }
};

ImbalanceMatrix compute_imbalance(std::span<const int> supply, const CityMatrices& matrices, double threshold);
ImbalanceMatrix compute_imbalance(const EpisodeTrace& trace, const CityMatrices& matrices, double threshold);

struct RebalanceNode {
  TimeStep t = 0;
  ZoneId zone = 0;
  long long magnitude = 0;  // |delta|
};

struct RebalanceEdge {
  int excess = 0;   // index into RebalancingGraph::excess
  int deficit = 0;  // index into RebalancingGraph::deficit
  double utility = 0.0;
  // Terms of the utility for audit: value of waiting at the deficit cell,
  // relocation cost, value of waiting at the excess cell.
  double deficit_wait_value = 0.0;
  double relocation_cost = 0.0;
  double excess_wait_value = 0.0;
};

// Bipartite graph from supply-excess cells to supply-deficit cells. An edge
// exists when a driver leaving the excess cell reaches the deficit zone no
// later than the deficit timestep. Nodes are ordered by (t, zone); edges by
// (excess t, excess zone, deficit t, deficit zone).
struct RebalancingGraph {
  std::vector<RebalanceNode> excess;
  std::vector<RebalanceNode> deficit;
  std::vector<RebalanceEdge> edges;
};

RebalancingGraph build_graph(const ImbalanceMatrix& imbalance, const CityMatrices& matrices,
                             const PolicyTables& tables);

struct FlowSolution {
  std::vector<long long> flow;  // per edge
  double objective = 0.0;
};

// Integral flow maximizing the summed edge utility subject to the node
// magnitudes. MaxFulfillment uses unit utilities (maximum flow). Solved per
// weakly connected component.
FlowSolution solve_rebalance(const RebalancingGraph& graph, ObjectiveMode objective);

// Same optimum, solved as one network without component splitting.
FlowSolution solve_rebalance_monolithic(const RebalancingGraph& graph, ObjectiveMode objective);

// Rebalance matrix zeta, T x m x m. Rows of excess cells hold the stay
// probability on the diagonal and relocation probabilities elsewhere; all
// other rows are zero.
struct RebalanceMatrix {
  int horizon = 0;
  int zones = 0;
  std::vector<double> zeta;

  double at(TimeStep t, ZoneId h, ZoneId g) const {
    return zeta[(static_cast<std::size_t>(t) * zones + h) * zones + g];
  }
};

RebalanceMatrix flow_to_rebalance_matrix(const FlowSolution& flow, const RebalancingGraph& graph,
                                         const ImbalanceMatrix& imbalance);

// Graph, utilities and flows as a JSON audit document.
nlohmann::json rebalance_to_json(const RebalancingGraph& graph, const FlowSolution& flow);

}  // namespace hexfleet
