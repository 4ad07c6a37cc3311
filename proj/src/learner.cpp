#include "hexfleet/learner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <fmt/format.h>
#include <fmt/os.h>

#include "hexfleet/errors.hpp"

namespace hexfleet {

namespace {

constexpr std::uint64_t kTrainStream = 0x7a1e;
constexpr int kCheckpointVersion = 1;

std::vector<ZoneId> argmax_table(const PolicyTables& tables) {
  std::vector<ZoneId> best(static_cast<std::size_t>(tables.horizon()) * tables.zones());
  for (int t = 0; t < tables.horizon(); ++t) {
    for (int h = 0; h < tables.zones(); ++h) best[tables.zone_cell(t, h)] = tables.best_destination(t, h);
  }
  return best;
}

struct PendingUpdate {
  std::size_t cell;
  double value;
};

// Q_I updates from the independent cohorts (exploratory and exploitative
// independent actions) of one episode, computed against the current table.
std::vector<PendingUpdate> independent_updates(const PolicyTables& tables, const EpisodeTrace& trace,
                                               const CityMatrices& matrices, const QUpdateParams& params) {
  const int m = trace.zones;
  std::vector<std::uint64_t> wait_keys;
  std::vector<std::uint64_t> move_keys;
  for (const auto& rec : trace.actions) {
    if (rec.source != ActionSource::Explore && rec.source != ActionSource::Independent) continue;
    const auto zone_cell = trace.zone_cell(rec.t, rec.origin);
    if (rec.is_wait()) {
      wait_keys.push_back(zone_cell * m + rec.end_zone);
    } else {
      move_keys.push_back(zone_cell * m + rec.target);
    }
  }
  std::sort(wait_keys.begin(), wait_keys.end());
  std::sort(move_keys.begin(), move_keys.end());

  std::vector<PendingUpdate> out;
  std::vector<int> outcomes(m, 0);
  for (std::size_t i = 0; i < wait_keys.size();) {
    const auto zone_cell = wait_keys[i] / m;
    std::fill(outcomes.begin(), outcomes.end(), 0);
    while (i < wait_keys.size() && wait_keys[i] / m == zone_cell) ++outcomes[wait_keys[i++] % m];
    const auto t = static_cast<TimeStep>(zone_cell / m);
    const auto h = static_cast<ZoneId>(zone_cell % m);
    out.push_back({tables.pair_cell(t, h, h), update_q_wait(tables, t, h, outcomes, matrices, params)});
  }
  for (std::size_t i = 0; i < move_keys.size();) {
    const auto key = move_keys[i];
    int count = 0;
    while (i < move_keys.size() && move_keys[i] == key) {
      ++count;
      ++i;
    }
    const auto zone_cell = key / m;
    const auto t = static_cast<TimeStep>(zone_cell / m);
    const auto h = static_cast<ZoneId>(zone_cell % m);
    const auto g = static_cast<ZoneId>(key % m);
    out.push_back({tables.pair_cell(t, h, g), update_q_relocate(tables, t, h, g, count, matrices, params)});
  }
  return out;
}

template <typename T>
void read_field(const nlohmann::json& doc, const char* key, T& out) {
  if (!doc.contains(key)) return;
  try {
    out = doc.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("config field '{}': {}", key, e.what()));
  }
}

std::vector<double> read_table(const nlohmann::json& doc, const char* key, std::size_t expected) {
  auto values = doc.at(key).get<std::vector<double>>();
  if (values.size() != expected) {
    throw DataError(fmt::format("checkpoint table '{}' has {} entries, expected {}", key, values.size(), expected));
  }
  return values;
}

}  // namespace

std::vector<double> exploration_ring_probabilities(const HexGrid& grid, ZoneId h, double b, double c, int k_max) {
  if (!grid.valid(h)) throw std::domain_error(fmt::format("zone {} outside grid", h));
  if (k_max < 0) throw ConfigError("max exploration ring must be non-negative");
  if (!(b > 0.0) || !(c > 0.0)) throw ConfigError("exploration kernel parameters must be positive");
  std::vector<double> p(k_max + 1, 0.0);
  double total = 0.0;
  for (int k = 0; k <= k_max; ++k) {
    if (grid.ring(h, k).empty()) continue;
    p[k] = b * std::exp(-static_cast<double>(k) * k / (2.0 * c * c));
    total += p[k];
  }
  for (auto& x : p) x /= total;
  return p;
}

Action sample_exploration(const HexGrid& grid, ZoneId h, double b, double c, int k_max, Rng& rng) {
  const auto p = exploration_ring_probabilities(grid, h, b, c, k_max);
  const auto k = static_cast<int>(sample_weighted(rng, p, 1.0));
  const auto ring = grid.ring(h, k);
  const auto g = ring[uniform_index(rng, ring.size())];
  return Action::toward(h, g);
}

Action best_independent_action(const PolicyTables& tables, TimeStep t, ZoneId h) {
  return Action::toward(h, tables.best_destination(t, h));
}

Decision sample_coordinated_action(const PolicyTables& tables, TimeStep t, ZoneId h, Rng& rng) {
  const int m = tables.zones();
  const auto row = std::span(tables.q_coordinated_data()).subspan(tables.pair_cell(t, h, 0), m);
  double total = 0.0;
  for (int g = 0; g < m; ++g) {
    if (row[g] < 0.0) {
      throw ContractViolation(fmt::format("negative coordinated weight {} at (t={}, h={}, g={})", row[g], t, h, g));
    }
    total += row[g];
  }
  if (total <= 0.0) return {best_independent_action(tables, t, h), ActionSource::Independent};
  const auto g = static_cast<ZoneId>(sample_weighted(rng, row, total));
  return {Action::toward(h, g), ActionSource::Coordinated};
}

double update_q_wait(const PolicyTables& tables, TimeStep t, ZoneId h, std::span<const int> outcomes,
                     const CityMatrices& matrices, const QUpdateParams& params) {
  const int m = tables.zones();
  require(static_cast<int>(outcomes.size()) == m, "wait outcomes must have one entry per zone");
  long long cohort = 0;
  double utility = 0.0;
  for (ZoneId g = 0; g < m; ++g) {
    const int w = outcomes[g];
    if (w == 0) continue;
    require(w > 0, "negative wait count");
    cohort += w;
    double future = 0.0;
    double reward = 0.0;
    if (g == h) {
      reward = wait_reward(0.0, false, params.mode);
      future = tables.best_value(t + 1, h);
    } else {
      reward = wait_reward(matrices.reward(t, h, g), true, params.mode);
      future = tables.best_value(t + matrices.travel_time(t, h, g), g);
    }
    utility += w * (reward + params.gamma * future);
  }
  require(cohort >= 1, fmt::format("empty wait cohort at (t={}, h={})", t, h));
  return (1.0 - params.alpha) * tables.q_independent(t, h, h) + params.alpha / static_cast<double>(cohort) * utility;
}

double update_q_relocate(const PolicyTables& tables, TimeStep t, ZoneId h, ZoneId g, int count,
                         const CityMatrices& matrices, const QUpdateParams& params) {
  require(g != h, "relocation must change zone");
  require(count >= 1, fmt::format("empty relocation cohort at (t={}, h={}, g={})", t, h, g));
  const double reward = relocation_reward(matrices.relocation_cost(t, h, g), params.mode);
  const double future = tables.best_value(t + matrices.travel_time(t, h, g), g);
  const double utility = count * (reward + params.gamma * future);
  return (1.0 - params.alpha) * tables.q_independent(t, h, g) + params.alpha / count * utility;
}

void update_q_c(PolicyTables& tables, const RebalanceMatrix& zeta, double alpha) {
  auto& q = tables.q_coordinated_data();
  require(zeta.zeta.size() == q.size(), "rebalance matrix does not match the policy tables");
  for (std::size_t i = 0; i < q.size(); ++i) q[i] = (1.0 - alpha) * q[i] + alpha * zeta.zeta[i];
}

double coordination_target(double delta, int supply, int demand, double xi) {
  if (delta > 0.0) {
    require(supply > 0, "supply excess without supply");
    return delta / supply;
  }
  if (delta < 0.0 && xi > 0.0) {
    require(demand > 0, "supply deficit without demand");
    return -delta / demand;
  }
  return 0.0;
}

void update_degree_of_coordination(PolicyTables& tables, const ImbalanceMatrix& imbalance,
                                   std::span<const int> supply, const CityMatrices& matrices, double alpha) {
  const auto cells = static_cast<std::size_t>(tables.horizon()) * tables.zones();
  require(imbalance.delta.size() == cells && supply.size() == cells,
          "imbalance and supply must match the policy tables");
  for (int t = 0; t < tables.horizon(); ++t) {
    for (int h = 0; h < tables.zones(); ++h) {
      const auto cell = tables.zone_cell(t, h);
      double& xi = tables.coordination(t, h);
      const double mu = coordination_target(imbalance.delta[cell], supply[cell], matrices.outgoing_demand(t, h), xi);
      xi = std::clamp((1.0 - alpha) * xi + alpha * mu, 0.0, 1.0);
    }
  }
}

void TrainConfig::validate() const {
  if (episodes < 1) throw ConfigError("episodes must be at least 1");
  if (independent_episodes < 0 || independent_episodes > episodes) {
    throw ConfigError("independent_episodes must lie in [0, episodes]");
  }
  if (coordinated_episodes < 0 || coordinated_episodes > episodes) {
    throw ConfigError("coordinated_episodes must lie in [0, episodes]");
  }
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in (0, 1]");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in (0, 1]");
  if (!(epsilon_initial >= 0.0 && epsilon_initial <= 1.0)) throw ConfigError("epsilon_initial must lie in [0, 1]");
  if (!(epsilon_final >= 0.0 && epsilon_final <= epsilon_initial)) {
    throw ConfigError("epsilon_final must lie in [0, epsilon_initial]");
  }
  if (epsilon_final == 0.0 && epsilon_initial > 0.0 && episodes > 1) {
    throw ConfigError("an exponential schedule cannot reach epsilon_final = 0; use a small positive value");
  }
  if (!(kernel_b > 0.0 && kernel_b <= 1.0)) throw ConfigError("kernel_b must lie in (0, 1]");
  if (!(kernel_c > 0.0)) throw ConfigError("kernel_c must be positive");
  if (max_ring < 0) throw ConfigError("max_ring must be non-negative");
  if (!(imbalance_threshold >= 0.0)) throw ConfigError("imbalance_threshold must be non-negative");
  if (workers < 1) throw ConfigError("workers must be at least 1");
}

double TrainConfig::epsilon(int episode) const {
  if (episodes <= 1 || epsilon_initial == epsilon_final) return epsilon_initial;
  const double decay = std::log(epsilon_initial / epsilon_final) / (episodes - 1);
  return std::max(epsilon_final, epsilon_initial * std::exp(-decay * episode));
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"episodes", c.episodes},
          {"independent_episodes", c.independent_episodes},
          {"coordinated_episodes", c.coordinated_episodes},
          {"alpha", c.alpha},
          {"gamma", c.gamma},
          {"epsilon_initial", c.epsilon_initial},
          {"epsilon_final", c.epsilon_final},
          {"kernel_b", c.kernel_b},
          {"kernel_c", c.kernel_c},
          {"max_ring", c.max_ring},
          {"imbalance_threshold", c.imbalance_threshold},
          {"objective", to_string(c.mode)},
          {"seed", c.seed},
          {"workers", c.workers},
          {"continue_independent_learning", c.continue_independent_learning}};
}

TrainConfig train_config_from_json(const nlohmann::json& doc, TrainConfig c) {
  if (!doc.is_object()) throw ConfigError("training config must be a JSON object");
  static const char* const kKeys[] = {"episodes",       "independent_episodes", "coordinated_episodes",
                                      "alpha",          "gamma",                "epsilon_initial",
                                      "epsilon_final",  "kernel_b",             "kernel_c",
                                      "max_ring",       "imbalance_threshold",  "objective",
                                      "seed",           "workers",              "continue_independent_learning"};
  for (const auto& [key, value] : doc.items()) {
    if (std::find(std::begin(kKeys), std::end(kKeys), key) == std::end(kKeys)) {
      throw ConfigError(fmt::format("unknown training config field '{}'", key));
    }
  }
  read_field(doc, "episodes", c.episodes);
  read_field(doc, "independent_episodes", c.independent_episodes);
  read_field(doc, "coordinated_episodes", c.coordinated_episodes);
  read_field(doc, "alpha", c.alpha);
  read_field(doc, "gamma", c.gamma);
  read_field(doc, "epsilon_initial", c.epsilon_initial);
  read_field(doc, "epsilon_final", c.epsilon_final);
  read_field(doc, "kernel_b", c.kernel_b);
  read_field(doc, "kernel_c", c.kernel_c);
  read_field(doc, "max_ring", c.max_ring);
  read_field(doc, "imbalance_threshold", c.imbalance_threshold);
  read_field(doc, "seed", c.seed);
  read_field(doc, "workers", c.workers);
  read_field(doc, "continue_independent_learning", c.continue_independent_learning);
  if (doc.contains("objective")) {
    std::string mode;
    read_field(doc, "objective", mode);
    c.mode = objective_from_string(mode);
  }
  return c;
}

TrainingPolicy::TrainingPolicy(const HexGrid& grid, const PolicyTables& tables, const TrainConfig& config,
                               double epsilon, bool coordination)
    : grid_(&grid),
      tables_(&tables),
      config_(&config),
      epsilon_(epsilon),
      coordination_(coordination),
      best_(argmax_table(tables)) {}

Decision TrainingPolicy::decide(TimeStep t, ZoneId h, int, Rng& rng) const {
  if (epsilon_ > 0.0 && uniform01(rng) < epsilon_) {
    return {sample_exploration(*grid_, h, config_->kernel_b, config_->kernel_c, config_->max_ring, rng),
            ActionSource::Explore};
  }
  const double xi = coordination_ ? tables_->coordination(t, h) : 0.0;
  if (xi > 0.0 && uniform01(rng) < xi) return sample_coordinated_action(*tables_, t, h, rng);
  return {Action::toward(h, best_[tables_->zone_cell(t, h)]), ActionSource::Independent};
}

ExploitationPolicy::ExploitationPolicy(const PolicyTables& tables) : tables_(&tables), best_(argmax_table(tables)) {}

Decision ExploitationPolicy::decide(TimeStep t, ZoneId h, int, Rng& rng) const {
  const double xi = tables_->coordination(t, h);
  if (xi > 0.0 && uniform01(rng) < xi) return sample_coordinated_action(*tables_, t, h, rng);
  return {Action::toward(h, best_[tables_->zone_cell(t, h)]), ActionSource::Independent};
}

std::vector<double> ExploitationPolicy::recommendation_distribution(TimeStep t, ZoneId h) const {
  const int m = tables_->zones();
  std::vector<double> p(m, 0.0);
  const double xi = tables_->coordination(t, h);
  const ZoneId best = best_[tables_->zone_cell(t, h)];
  double total = 0.0;
  for (int g = 0; g < m; ++g) total += tables_->q_coordinated(t, h, g);
  if (xi > 0.0 && total > 0.0) {
    for (int g = 0; g < m; ++g) p[g] = xi * tables_->q_coordinated(t, h, g) / total;
    p[best] += 1.0 - xi;
  } else {
    p[best] = 1.0;
  }
  return p;
}

double learn_from_episode(PolicyTables& tables, const EpisodeTrace& trace, const CityMatrices& matrices,
                          const TrainConfig& config, int episode) {
  const QUpdateParams params{config.alpha, config.gamma, config.mode};
  std::vector<PendingUpdate> pending;
  if (config.independent_active(episode)) pending = independent_updates(tables, trace, matrices, params);

  double objective = 0.0;
  if (config.coordination_active(episode)) {
    // The graph reads Q_I before this episode's independent updates land.
    const auto imbalance = compute_imbalance(trace, matrices, config.imbalance_threshold);
    const auto graph = build_graph(imbalance, matrices, tables);
    const auto flow = solve_rebalance(graph, config.mode);
    objective = flow.objective;
    update_q_c(tables, flow_to_rebalance_matrix(flow, graph, imbalance), config.alpha);
    update_degree_of_coordination(tables, imbalance, trace.supply, matrices, config.alpha);
  }

  auto& q = tables.q_independent_data();
  for (const auto& u : pending) q[u.cell] = u.value;
  return objective;
}

TrainResult train(const Scenario& scenario, int drivers, const TrainConfig& config, const EpisodeCallback& on_episode) {
  config.validate();
  if (drivers < 1) throw ConfigError("training needs at least one driver");
  const auto& mx = scenario.matrices;
  if (scenario.grid.size() != mx.zones()) throw DataError("scenario grid and matrices disagree on the zone count");

  TrainResult result{PolicyTables(mx.horizon(), mx.zones()), {}};
  result.metrics.reserve(config.episodes);
  for (int e = 0; e < config.episodes; ++e) {
    const double epsilon = config.epsilon(e);
    const TrainingPolicy policy(scenario.grid, result.tables, config, epsilon, config.coordination_active(e));
    const auto trace =
        run_episode(mx, drivers, policy, config.mode, derive_seed(config.seed, {kTrainStream, static_cast<std::uint64_t>(e)}),
                    config.workers);

    EpisodeMetrics metrics;
    metrics.episode = e;
    metrics.mean_earnings = trace.mean_earnings();
    metrics.fulfillment_pct = trace.fulfillment_pct();
    metrics.epsilon = epsilon;
    metrics.coordinated_actions = std::count_if(trace.actions.begin(), trace.actions.end(), [](const ActionRecord& r) {
      return r.source == ActionSource::Coordinated;
    });
    metrics.rebalance_objective = learn_from_episode(result.tables, trace, mx, config, e);
    metrics.active_coordination_cells = result.tables.active_coordination_cells();
    result.metrics.push_back(metrics);
    if (on_episode) on_episode(metrics);
  }
  return result;
}

nlohmann::json checkpoint_to_json(const Checkpoint& checkpoint) {
  const auto& t = checkpoint.tables;
  return {{"format_version", kCheckpointVersion},
          {"horizon", t.horizon()},
          {"zones", t.zones()},
          {"episodes_completed", checkpoint.episodes_completed},
          {"config", to_json(checkpoint.config)},
          {"q_independent", t.q_independent_data()},
          {"q_coordinated", t.q_coordinated_data()},
          {"coordination", t.coordination_data()}};
}

Checkpoint checkpoint_from_json(const nlohmann::json& doc) {
  try {
    const int version = doc.at("format_version").get<int>();
    if (version != kCheckpointVersion) throw DataError(fmt::format("unsupported checkpoint format_version {}", version));
    const int horizon = doc.at("horizon").get<int>();
    const int zones = doc.at("zones").get<int>();
    if (horizon < 1 || zones < 1) throw DataError("checkpoint dimensions must be positive");
    Checkpoint out{PolicyTables(horizon, zones), train_config_from_json(doc.at("config")),
                   doc.at("episodes_completed").get<int>()};
    const auto pairs = static_cast<std::size_t>(horizon) * zones * zones;
    out.tables.q_independent_data() = read_table(doc, "q_independent", pairs);
    out.tables.q_coordinated_data() = read_table(doc, "q_coordinated", pairs);
    out.tables.coordination_data() = read_table(doc, "coordination", static_cast<std::size_t>(horizon) * zones);
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(fmt::format("malformed checkpoint: {}", e.what()));
  }
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError(fmt::format("cannot write checkpoint {}", path.string()));
  out << checkpoint_to_json(checkpoint).dump() << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot open checkpoint {}", path.string()));
  try {
    return checkpoint_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(fmt::format("checkpoint {} is not valid JSON: {}", path.string(), e.what()));
  }
}

void write_training_log(const std::vector<EpisodeMetrics>& metrics, const std::filesystem::path& path) {
  auto out = fmt::output_file(path.string());
  out.print("episode,mean_earnings,fulfillment_pct,epsilon,active_coordination_cells,coordinated_actions,"
            "rebalance_objective\n");
  for (const auto& m : metrics) {
    out.print("{},{:.6f},{:.4f},{:.6f},{},{},{:.6f}\n", m.episode, m.mean_earnings, m.fulfillment_pct, m.epsilon,
              m.active_coordination_cells, m.coordinated_actions, m.rebalance_objective);
  }
}

}  // namespace hexfleet
