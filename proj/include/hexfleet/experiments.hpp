#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hexfleet/eval.hpp"
#include "hexfleet/learner.hpp"

namespace hexfleet {

struct SweepGrids {
  std::vector<int> supply;                 // driver counts
  std::vector<int> independent_episodes;   // crossed with coordinated_episodes
  std::vector<int> coordinated_episodes;
  bool objectives = false;                 // train and evaluate both objectives
  std::vector<double> strategic_fractions;
  std::vector<int> heatmap_times;
};

// Run configuration shared by the CLI subcommands. Every field can be
// overridden from the command line.
struct ExperimentConfig {
  std::filesystem::path scenario;
  int drivers = 200;
  TrainConfig train;
  std::vector<std::uint64_t> eval_seeds{1, 2, 3, 4, 5};
  EvalOptions eval;
  NaivePolicyParams naive;
  SweepGrids sweep;
  int jobs = 1;  // concurrent sweep points

  void validate() const;
};

// Relative `scenario` paths resolve against `base_dir`. Unknown keys are a
// ConfigError.
ExperimentConfig experiment_config_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& config);

struct SweepPointResult {
  std::string name;
  bool ok = false;
  std::string error;
  std::optional<EvalReport> report;
};

struct SuiteSummary {
  std::vector<SweepPointResult> points;
  int failures() const;
};

// Runs every configured sweep point (train, then evaluate) on up to
// config.jobs threads. Each point writes <out_dir>/<name>.csv; heatmaps are
// taken from the base configuration's trained tables. A failing point is
// recorded and the suite continues.
SuiteSummary run_experiment_suite(const ExperimentConfig& config, const Scenario& scenario,
                                  const std::filesystem::path& out_dir);

void write_report_csv(const EvalReport& report, const std::filesystem::path& path);

}  // namespace hexfleet
