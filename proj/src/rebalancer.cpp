#include "hexfleet/rebalancer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "hexfleet/errors.hpp"
#include "hexfleet/min_cost_flow.hpp"

namespace hexfleet {

namespace {

class DisjointSets {
 public:
  explicit DisjointSets(int n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }
  int find(int x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent_[std::max(a, b)] = std::min(a, b);
  }

 private:
  std::vector<int> parent_;
};

bool edge_usable(const RebalanceEdge& e, ObjectiveMode objective) {
  return objective == ObjectiveMode::MaxFulfillment || e.utility > 0.0;
}

double edge_weight(const RebalanceEdge& e, ObjectiveMode objective) {
  return objective == ObjectiveMode::MaxFulfillment ? 1.0 : e.utility;
}

// Solves the flow problem restricted to `edge_ids`, writing into `flow`.
void solve_subnetwork(const RebalancingGraph& graph, std::span<const int> edge_ids, ObjectiveMode objective,
                      std::vector<long long>& flow) {
  if (edge_ids.empty()) return;
  // Compact node numbering: source, excess nodes, deficit nodes, sink.
  std::vector<int> excess_slot(graph.excess.size(), -1);
  std::vector<int> deficit_slot(graph.deficit.size(), -1);
  std::vector<int> excess_used;
  std::vector<int> deficit_used;
  for (const int id : edge_ids) {
    const auto& e = graph.edges[id];
    if (excess_slot[e.excess] < 0) {
      excess_slot[e.excess] = 0;
      excess_used.push_back(e.excess);
    }
    if (deficit_slot[e.deficit] < 0) {
      deficit_slot[e.deficit] = 0;
      deficit_used.push_back(e.deficit);
    }
  }
  std::sort(excess_used.begin(), excess_used.end());
  std::sort(deficit_used.begin(), deficit_used.end());
  int next = 1;
  for (const int i : excess_used) excess_slot[i] = next++;
  for (const int j : deficit_used) deficit_slot[j] = next++;
  const int source = 0;
  const int sink = next;

  MinCostFlow network(sink + 1);
  for (const int i : excess_used) network.add_arc(source, excess_slot[i], graph.excess[i].magnitude, 0.0);
  std::vector<int> arc_of(edge_ids.size());
  for (std::size_t k = 0; k < edge_ids.size(); ++k) {
    const auto& e = graph.edges[edge_ids[k]];
    const long long cap = std::min(graph.excess[e.excess].magnitude, graph.deficit[e.deficit].magnitude);
    arc_of[k] = network.add_arc(excess_slot[e.excess], deficit_slot[e.deficit], cap, -edge_weight(e, objective));
  }
  for (const int j : deficit_used) network.add_arc(deficit_slot[j], sink, graph.deficit[j].magnitude, 0.0);

  network.solve(source, sink, /*only_improving=*/true);
  for (std::size_t k = 0; k < edge_ids.size(); ++k) flow[edge_ids[k]] = network.flow(arc_of[k]);
}

double objective_of(const RebalancingGraph& graph, const std::vector<long long>& flow, ObjectiveMode objective) {
  double total = 0.0;
  for (std::size_t k = 0; k < graph.edges.size(); ++k) {
    if (flow[k] != 0) total += static_cast<double>(flow[k]) * edge_weight(graph.edges[k], objective);
  }
  return total;
}

}  // namespace

ImbalanceMatrix compute_imbalance(std::span<const int> supply, const CityMatrices& matrices, double threshold) {
  const int horizon = matrices.horizon();
  const int m = matrices.zones();
  if (supply.size() != static_cast<std::size_t>(horizon) * m) {
    throw ConfigError(fmt::format("supply has {} cells, expected {} x {}", supply.size(), horizon, m));
  }
  require(threshold >= 0.0, "imbalance threshold must be non-negative");
  ImbalanceMatrix out{horizon, m, threshold, std::vector<double>(supply.size(), 0.0)};
  for (int t = 0; t < horizon; ++t) {
    for (int h = 0; h < m; ++h) {
      const auto cell = static_cast<std::size_t>(t) * m + h;
      const double raw = static_cast<double>(supply[cell]) - static_cast<double>(matrices.outgoing_demand(t, h));
      out.delta[cell] = std::abs(raw) < threshold ? 0.0 : raw;
    }
  }
  return out;
}

ImbalanceMatrix compute_imbalance(const EpisodeTrace& trace, const CityMatrices& matrices, double threshold) {
  if (trace.horizon != matrices.horizon() || trace.zones != matrices.zones()) {
    throw ConfigError("trace and city matrices have different dimensions");
  }
  return compute_imbalance(trace.supply, matrices, threshold);
}

RebalancingGraph build_graph(const ImbalanceMatrix& imbalance, const CityMatrices& matrices,
                             const PolicyTables& tables) {
  const int horizon = imbalance.horizon;
  const int m = imbalance.zones;
  if (matrices.horizon() != horizon || matrices.zones() != m || tables.horizon() != horizon ||
      tables.zones() != m) {
    throw ConfigError("imbalance, city matrices and policy tables have different dimensions");
  }
  RebalancingGraph graph;
  for (int t = 0; t < horizon; ++t) {
    for (int h = 0; h < m; ++h) {
      const double d = imbalance.at(t, h);
      if (d > 0.0) graph.excess.push_back({t, h, std::llround(d)});
      if (d < 0.0) graph.deficit.push_back({t, h, std::llround(-d)});
    }
  }
  for (int i = 0; i < static_cast<int>(graph.excess.size()); ++i) {
    const auto& src = graph.excess[i];
    const double stay_value = tables.q_independent(src.t, src.zone, src.zone);
    // Deficits are ordered by t, so start at the first one strictly later.
    const auto first = std::upper_bound(graph.deficit.begin(), graph.deficit.end(), src.t,
                                        [](TimeStep t, const RebalanceNode& n) { return t < n.t; });
    for (auto it = first; it != graph.deficit.end(); ++it) {
      const auto& dst = *it;
      if (dst.zone == src.zone) continue;
      if (src.t + matrices.travel_time(src.t, src.zone, dst.zone) > dst.t) continue;
      RebalanceEdge e;
      e.excess = i;
      e.deficit = static_cast<int>(it - graph.deficit.begin());
      e.deficit_wait_value = tables.q_independent(dst.t, dst.zone, dst.zone);
      e.relocation_cost = matrices.relocation_cost(src.t, src.zone, dst.zone);
      e.excess_wait_value = stay_value;
      e.utility = e.deficit_wait_value - e.relocation_cost - e.excess_wait_value;
      graph.edges.push_back(e);
    }
  }
  return graph;
}

FlowSolution solve_rebalance(const RebalancingGraph& graph, ObjectiveMode objective) {
  FlowSolution out;
  out.flow.assign(graph.edges.size(), 0);
  const int ne = static_cast<int>(graph.excess.size());
  DisjointSets sets(ne + static_cast<int>(graph.deficit.size()));
  for (const auto& e : graph.edges) {
    if (edge_usable(e, objective)) sets.unite(e.excess, ne + e.deficit);
  }
  // Group usable edges by component root; roots are the smallest member, so
  // components come out in node order.
  std::vector<std::vector<int>> by_root(ne + graph.deficit.size());
  for (int k = 0; k < static_cast<int>(graph.edges.size()); ++k) {
    const auto& e = graph.edges[k];
    if (edge_usable(e, objective)) by_root[sets.find(e.excess)].push_back(k);
  }
  for (const auto& component : by_root) solve_subnetwork(graph, component, objective, out.flow);
  out.objective = objective_of(graph, out.flow, objective);
  return out;
}

FlowSolution solve_rebalance_monolithic(const RebalancingGraph& graph, ObjectiveMode objective) {
  FlowSolution out;
  out.flow.assign(graph.edges.size(), 0);
  std::vector<int> usable;
  for (int k = 0; k < static_cast<int>(graph.edges.size()); ++k) {
    if (edge_usable(graph.edges[k], objective)) usable.push_back(k);
  }
  solve_subnetwork(graph, usable, objective, out.flow);
  out.objective = objective_of(graph, out.flow, objective);
  return out;
}

RebalanceMatrix flow_to_rebalance_matrix(const FlowSolution& flow, const RebalancingGraph& graph,
                                         const ImbalanceMatrix& imbalance) {
  require(flow.flow.size() == graph.edges.size(), "flow solution does not match the graph");
  const int m = imbalance.zones;
  RebalanceMatrix z{imbalance.horizon, m, std::vector<double>(static_cast<std::size_t>(imbalance.horizon) * m * m, 0.0)};
  std::vector<long long> outflow(graph.excess.size(), 0);
  for (std::size_t k = 0; k < graph.edges.size(); ++k) {
    require(flow.flow[k] >= 0, "negative edge flow");
    outflow[graph.edges[k].excess] += flow.flow[k];
  }
  for (std::size_t i = 0; i < graph.excess.size(); ++i) {
    const auto& node = graph.excess[i];
    const double delta = imbalance.at(node.t, node.zone);
    if (static_cast<double>(outflow[i]) > delta) {
      throw ContractViolation(fmt::format("outflow {} exceeds excess {} at (t={}, h={})", outflow[i], delta, node.t,
                                          node.zone));
    }
    const auto row = (static_cast<std::size_t>(node.t) * m + node.zone) * m;
    z.zeta[row + node.zone] = (delta - static_cast<double>(outflow[i])) / delta;
  }
  for (std::size_t k = 0; k < graph.edges.size(); ++k) {
    if (flow.flow[k] == 0) continue;
    const auto& e = graph.edges[k];
    const auto& src = graph.excess[e.excess];
    const auto& dst = graph.deficit[e.deficit];
    const auto row = (static_cast<std::size_t>(src.t) * m + src.zone) * m;
    // Flows from one cell to the same zone at different deficit times share
    // a destination entry.
    z.zeta[row + dst.zone] += static_cast<double>(flow.flow[k]) / imbalance.at(src.t, src.zone);
  }
  return z;
}

nlohmann::json rebalance_to_json(const RebalancingGraph& graph, const FlowSolution& flow) {
  auto node_json = [](const RebalanceNode& n) {
    return nlohmann::json{{"t", n.t}, {"zone", n.zone}, {"magnitude", n.magnitude}};
  };
  nlohmann::json doc;
  doc["format_version"] = 1;
  doc["excess"] = nlohmann::json::array();
  doc["deficit"] = nlohmann::json::array();
  doc["edges"] = nlohmann::json::array();
  for (const auto& n : graph.excess) doc["excess"].push_back(node_json(n));
  for (const auto& n : graph.deficit) doc["deficit"].push_back(node_json(n));
  for (std::size_t k = 0; k < graph.edges.size(); ++k) {
    const auto& e = graph.edges[k];
    doc["edges"].push_back({{"excess", e.excess},
                            {"deficit", e.deficit},
                            {"utility", e.utility},
                            {"deficit_wait_value", e.deficit_wait_value},
                            {"relocation_cost", e.relocation_cost},
                            {"excess_wait_value", e.excess_wait_value},
                            {"flow", k < flow.flow.size() ? flow.flow[k] : 0}});
  }
  doc["objective"] = flow.objective;
  return doc;
}

}  // namespace hexfleet
