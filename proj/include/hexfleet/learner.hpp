#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "hexfleet/city.hpp"
#include "hexfleet/hex_grid.hpp"
#include "hexfleet/policy_tables.hpp"
#include "hexfleet/rebalancer.hpp"
#include "hexfleet/sim.hpp"

namespace hexfleet {

// Exploration distance kernel Pr[K = k] ~ b * exp(-k^2 / (2 c^2)) over
// k = 0..k_max, with rings that are empty around h given weight zero, then
// normalized. Throws ConfigError when every ring is empty.
std::vector<double> exploration_ring_probabilities(const HexGrid& grid, ZoneId h, double b, double c, int k_max);

// Samples a ring distance from the kernel, then a zone uniformly on that
// ring. Distance 0 is a wait.
Action sample_exploration(const HexGrid& grid, ZoneId h, double b, double c, int k_max, Rng& rng);

Action best_independent_action(const PolicyTables& tables, TimeStep t, ZoneId h);

// Draws a destination proportionally to the Q_C(t, h, .) row. A zero row
// falls back to the independent argmax, reported with source Independent.
// Throws ContractViolation on a negative entry.
Decision sample_coordinated_action(const PolicyTables& tables, TimeStep t, ZoneId h, Rng& rng);

struct QUpdateParams {
  double alpha = 0.01;
  double gamma = 0.99;
  ObjectiveMode mode = ObjectiveMode::MaxEarnings;
};

// New value of Q_I(t, h, h) given the cohort of drivers that waited at
// (t, h): outcomes[g] counts waits that ended with a ride to g, and
// outcomes[h] counts unsuccessful waits. Future values are read from
// `tables` (the pre-update snapshot). Requires a non-empty cohort.
double update_q_wait(const PolicyTables& tables, TimeStep t, ZoneId h, std::span<const int> outcomes,
                     const CityMatrices& matrices, const QUpdateParams& params);

// New value of Q_I(t, h, g) for a cohort of `count` drivers relocating
// from h to g (g != h, count >= 1).
double update_q_relocate(const PolicyTables& tables, TimeStep t, ZoneId h, ZoneId g, int count,
                         const CityMatrices& matrices, const QUpdateParams& params);

// Q_C <- (1 - alpha) Q_C + alpha zeta, elementwise.
void update_q_c(PolicyTables& tables, const RebalanceMatrix& zeta, double alpha);

// Target of the coordination update for one cell: delta / S for an excess,
// |delta| / demand for a deficit whose current xi is positive, else 0.
double coordination_target(double delta, int supply, int demand, double xi);

// xi <- clamp((1 - alpha) xi + alpha mu, 0, 1) over all cells.
void update_degree_of_coordination(PolicyTables& tables, const ImbalanceMatrix& imbalance,
                                   std::span<const int> supply, const CityMatrices& matrices, double alpha);

struct TrainConfig {
  int episodes = 200;
  int independent_episodes = 160;
  int coordinated_episodes = 60;
  double alpha = 0.01;
  double gamma = 0.99;
  double epsilon_initial = 1.0;
  double epsilon_final = 0.01;
  double kernel_b = 0.7;
  double kernel_c = 1.0;
  int max_ring = 3;
  double imbalance_threshold = 2.0;
  ObjectiveMode mode = ObjectiveMode::MaxEarnings;
  std::uint64_t seed = 0;
  int workers = 1;
  // Keep updating Q_I after the first independent_episodes episodes.
  bool continue_independent_learning = true;

  void validate() const;
  double epsilon(int episode) const;
  bool coordination_active(int episode) const { return episode >= episodes - coordinated_episodes; }
  bool independent_active(int episode) const {
    return episode < independent_episodes || continue_independent_learning;
  }
};

nlohmann::json to_json(const TrainConfig& config);
// Missing keys keep their defaults; unknown keys are a ConfigError.
TrainConfig train_config_from_json(const nlohmann::json& doc, TrainConfig base = {});

// Epsilon-greedy training behavior for one episode.
class TrainingPolicy final : public PolicyOracle {
 public:
  TrainingPolicy(const HexGrid& grid, const PolicyTables& tables, const TrainConfig& config, double epsilon,
                 bool coordination);
  Decision decide(TimeStep t, ZoneId h, int driver, Rng& rng) const override;

 private:
  const HexGrid* grid_;
  const PolicyTables* tables_;
  const TrainConfig* config_;
  double epsilon_;
  bool coordination_;
  std::vector<ZoneId> best_;  // independent argmax per (t, h)
};

// Pure exploitation: the coordinated table with probability xi(t, h), the
// independent argmax otherwise.
class ExploitationPolicy final : public PolicyOracle {
 public:
  explicit ExploitationPolicy(const PolicyTables& tables);
  Decision decide(TimeStep t, ZoneId h, int driver, Rng& rng) const override;

  // Probability of each destination for a driver idle at (t, h).
  std::vector<double> recommendation_distribution(TimeStep t, ZoneId h) const;

 private:
  const PolicyTables* tables_;
  std::vector<ZoneId> best_;
};

struct EpisodeMetrics {
  int episode = 0;
  double mean_earnings = 0.0;
  double fulfillment_pct = 0.0;
  double epsilon = 0.0;
  int active_coordination_cells = 0;
  long long coordinated_actions = 0;
  double rebalance_objective = 0.0;
};

struct TrainResult {
  PolicyTables tables;
  std::vector<EpisodeMetrics> metrics;
};

using EpisodeCallback = std::function<void(const EpisodeMetrics&)>;

// Runs config.episodes simulated episodes with n drivers, learning after
// each from its trace.
TrainResult train(const Scenario& scenario, int drivers, const TrainConfig& config,
                  const EpisodeCallback& on_episode = {});

// Applies the end-of-episode learning step to `tables` for the given trace.
// Returns the rebalancing objective (0 when coordination is inactive).
double learn_from_episode(PolicyTables& tables, const EpisodeTrace& trace, const CityMatrices& matrices,
                          const TrainConfig& config, int episode);

struct Checkpoint {
  PolicyTables tables;
  TrainConfig config;
  int episodes_completed = 0;
};

nlohmann::json checkpoint_to_json(const Checkpoint& checkpoint);
Checkpoint checkpoint_from_json(const nlohmann::json& doc);
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

void write_training_log(const std::vector<EpisodeMetrics>& metrics, const std::filesystem::path& path);

}  // namespace hexfleet
