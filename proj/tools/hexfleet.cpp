// hexfleet command-line driver: scenario construction, training, evaluation,
// experiment sweeps and the environment server.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "hexfleet/env_server.hpp"
#include "hexfleet/errors.hpp"
#include "hexfleet/eval.hpp"
#include "hexfleet/experiments.hpp"
#include "hexfleet/ingest.hpp"
#include "hexfleet/learner.hpp"
#include "hexfleet/scenario_io.hpp"

namespace fs = std::filesystem;
using namespace hexfleet;

namespace {

enum ExitCode { kOk = 0, kConfigError = 2, kDataError = 3, kInternalError = 4 };

// Command-line values that override the config file when given.
struct Overrides {
  std::optional<std::string> config;
  std::optional<std::string> scenario;
  std::optional<int> drivers;
  std::optional<std::uint64_t> seed;
  std::optional<int> episodes;
  std::optional<int> independent_episodes;
  std::optional<int> coordinated_episodes;
  std::optional<double> alpha;
  std::optional<double> gamma;
  std::optional<double> epsilon_final;
  std::optional<double> threshold;
  std::optional<std::string> objective;
  std::optional<int> workers;
  std::optional<int> jobs;
  std::optional<int> warmup;

  ExperimentConfig resolve() const {
    ExperimentConfig c = config ? load_experiment_config(*config) : ExperimentConfig{};
    if (scenario) c.scenario = *scenario;
    if (drivers) c.drivers = *drivers;
    if (seed) c.train.seed = *seed;
    if (episodes) c.train.episodes = *episodes;
    if (independent_episodes) c.train.independent_episodes = *independent_episodes;
    if (coordinated_episodes) c.train.coordinated_episodes = *coordinated_episodes;
    if (alpha) c.train.alpha = *alpha;
    if (gamma) c.train.gamma = *gamma;
    if (epsilon_final) c.train.epsilon_final = *epsilon_final;
    if (threshold) c.train.imbalance_threshold = *threshold;
    if (objective) c.train.mode = objective_from_string(*objective);
    if (workers) {
      c.train.workers = *workers;
      c.eval.workers = *workers;
    }
    if (jobs) c.jobs = *jobs;
    if (warmup) c.eval.warmup_steps = *warmup;
    if (c.scenario.empty()) throw ConfigError("no scenario given (use --scenario or the config file)");
    c.validate();
    return c;
  }
};

void add_config_options(CLI::App& cmd, Overrides& o, bool training) {
  cmd.add_option("--config", o.config, "JSON config file");
  cmd.add_option("--scenario", o.scenario, "Scenario JSON file");
  cmd.add_option("--drivers", o.drivers, "Number of drivers");
  cmd.add_option("--objective", o.objective, "max_earnings or max_fulfillment");
  cmd.add_option("--workers", o.workers, "Threads per episode");
  cmd.add_option("--warmup", o.warmup, "Warm-up timesteps excluded from the second fulfillment figure");
  if (!training) return;
  cmd.add_option("--episodes", o.episodes, "Training episodes");
  cmd.add_option("--independent-episodes", o.independent_episodes, "Independent-learning episodes");
  cmd.add_option("--coordinated-episodes", o.coordinated_episodes, "Coordinated-learning episodes");
  cmd.add_option("--alpha", o.alpha, "Learning rate");
  cmd.add_option("--gamma", o.gamma, "Discount factor");
  cmd.add_option("--epsilon-final", o.epsilon_final, "Exploration rate of the last episode");
  cmd.add_option("--threshold", o.threshold, "Imbalance threshold");
}

std::vector<std::uint64_t> seed_range(std::uint64_t first, int runs) {
  if (runs < 1) throw ConfigError("--runs must be at least 1");
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < runs; ++i) seeds.push_back(first + static_cast<std::uint64_t>(i));
  return seeds;
}

void write_json(const nlohmann::json& doc, const std::optional<std::string>& path) {
  if (!path) {
    std::cout << doc.dump(2) << '\n';
    return;
  }
  std::ofstream out(*path);
  if (!out) throw DataError(fmt::format("cannot write {}", *path));
  out << doc.dump(2) << '\n';
}

ColumnMapping load_columns(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open column mapping {}", path));
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(fmt::format("column mapping {} is not valid JSON: {}", path, e.what()));
  }
  ColumnMapping c;
  const std::pair<const char*, std::string*> fields[] = {
      {"pickup_time", &c.pickup_time}, {"dropoff_time", &c.dropoff_time}, {"pickup_lon", &c.pickup_lon},
      {"pickup_lat", &c.pickup_lat},   {"dropoff_lon", &c.dropoff_lon},   {"dropoff_lat", &c.dropoff_lat},
      {"fare", &c.fare},               {"distance", &c.distance}};
  for (const auto& [key, value] : doc.items()) {
    bool known = false;
    for (const auto& [name, slot] : fields) {
      if (key != name) continue;
      if (!value.is_string()) throw ConfigError(fmt::format("column mapping '{}' must be a string", key));
      *slot = value.get<std::string>();
      known = true;
    }
    if (!known) throw ConfigError(fmt::format("unknown column mapping field '{}'", key));
  }
  return c;
}

// "zone:peak:amplitude[:width[:in|out]]"
Hotspot parse_hotspot(const std::string& text) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto colon = text.find(':', start);
    parts.push_back(text.substr(start, colon - start));
    if (colon == std::string::npos) break;
    start = colon + 1;
  }
  if (parts.size() < 3 || parts.size() > 5) {
    throw ConfigError(fmt::format("hotspot '{}' must look like zone:peak:amplitude[:width[:in|out]]", text));
  }
  try {
    Hotspot h;
    h.zone = std::stoi(parts[0]);
    h.peak_time = std::stod(parts[1]);
    h.amplitude = std::stod(parts[2]);
    if (parts.size() >= 4) h.width = std::stod(parts[3]);
    if (parts.size() == 5) {
      if (parts[4] == "in") {
        h.direction = HotspotDirection::Inbound;
      } else if (parts[4] == "out") {
        h.direction = HotspotDirection::Outbound;
      } else {
        throw ConfigError(fmt::format("hotspot direction '{}' must be in or out", parts[4]));
      }
    }
    return h;
  } catch (const std::logic_error&) {
    throw ConfigError(fmt::format("hotspot '{}' has a non-numeric field", text));
  }
}

int run(int argc, char** argv) {
  CLI::App app{"Fleet repositioning simulator and learner"};
  app.require_subcommand(1);

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Build a scenario from trip-record CSV");
  std::string csv_path, ingest_out;
  int grid_radius = 9;
  int slice_minutes = 5;
  double hex_size = 1.0;
  double cost_per_mile = 0.5;
  std::optional<std::string> trip_date, columns_path;
  ingest->add_option("--csv", csv_path, "Trip CSV file")->required();
  ingest->add_option("--grid-radius", grid_radius, "Radius of the hexagonal zone grid");
  ingest->add_option("--slice-min", slice_minutes, "Timestep length in minutes");
  ingest->add_option("--hex-size", hex_size, "Hex center-to-vertex size in miles");
  ingest->add_option("--cost-per-mile", cost_per_mile, "Driving cost per mile");
  ingest->add_option("--date", trip_date, "Keep only pickups on this day (YYYY-MM-DD)");
  ingest->add_option("--columns", columns_path, "JSON column mapping");
  ingest->add_option("--out", ingest_out, "Scenario output path")->required();

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic city");
  SyntheticCityParams sp;
  std::vector<std::string> hotspots;
  std::string synth_out;
  synth->add_option("--seed", sp.seed, "Random seed")->required();
  synth->add_option("--radius", sp.radius, "Grid radius");
  synth->add_option("--horizon", sp.horizon, "Timesteps");
  synth->add_option("--base-rate", sp.base_rate, "Poisson rate per (t, origin, destination)");
  synth->add_option("--fare-per-hop", sp.fare_per_hop, "Fare per hex hop");
  synth->add_option("--cost-per-hop", sp.cost_per_hop, "Driving cost per hex hop");
  synth->add_option("--slice-min", sp.slice_minutes, "Timestep length in minutes");
  synth->add_option("--hotspot", hotspots, "zone:peak:amplitude[:width[:in|out]] (repeatable)");
  synth->add_option("--out", synth_out, "Scenario output path")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "Train policy tables");
  Overrides train_o;
  std::string checkpoint_out;
  std::optional<std::string> log_path;
  add_config_options(*train_cmd, train_o, true);
  train_cmd->add_option("--seed", train_o.seed, "Random seed")->required();
  train_cmd->add_option("--out", checkpoint_out, "Checkpoint output path")->required();
  train_cmd->add_option("--log", log_path, "Per-episode training log CSV");

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "Evaluate trained tables without exploration");
  Overrides eval_o;
  std::string eval_checkpoint;
  std::uint64_t eval_seed = 0;
  int eval_runs = 5;
  std::optional<std::string> eval_out, trace_dir;
  add_config_options(*eval_cmd, eval_o, false);
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--seed", eval_seed, "First evaluation seed")->required();
  eval_cmd->add_option("--runs", eval_runs, "Number of evaluation episodes (seeds seed, seed+1, ...)");
  eval_cmd->add_option("--out", eval_out, "Report JSON path (stdout when omitted)");
  eval_cmd->add_option("--trace-dir", trace_dir, "Write per-(t, h) and per-driver CSVs of the first run");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Run the configured experiment sweeps");
  Overrides sweep_o;
  std::string sweep_out;
  add_config_options(*sweep, sweep_o, true);
  sweep->add_option("--seed", sweep_o.seed, "Random seed")->required();
  sweep->add_option("--jobs", sweep_o.jobs, "Concurrent sweep points");
  sweep->add_option("--out", sweep_out, "Output directory")->required();

  // generalize
  auto* gen = app.add_subcommand("generalize", "Generalization error of base tables against reference tables");
  Overrides gen_o;
  std::string base_checkpoint, reference_checkpoint;
  std::uint64_t gen_seed = 0;
  int gen_runs = 5;
  add_config_options(*gen, gen_o, false);
  gen->add_option("--base", base_checkpoint, "Checkpoint trained elsewhere")->required();
  gen->add_option("--reference", reference_checkpoint, "Checkpoint trained on the test scenario")->required();
  gen->add_option("--seed", gen_seed, "First evaluation seed")->required();
  gen->add_option("--runs", gen_runs, "Number of evaluation episodes");

  // export-heatmap
  auto* heat = app.add_subcommand("export-heatmap", "Export coordinated wait probabilities per zone");
  std::string heat_checkpoint, heat_scenario, heat_out;
  std::vector<int> heat_times;
  heat->add_option("--checkpoint", heat_checkpoint, "Checkpoint file")->required();
  heat->add_option("--scenario", heat_scenario, "Scenario file (for zone coordinates)")->required();
  heat->add_option("--t", heat_times, "Timesteps to export (repeatable)")->required();
  heat->add_option("--out", heat_out, "Output directory")->required();

  // serve-env
  auto* serve = app.add_subcommand("serve-env", "Serve the environment protocol on stdin/stdout");
  std::string serve_scenario;
  int serve_drivers = 0;
  std::string serve_objective = "max_earnings";
  int serve_workers = 1;
  serve->add_option("--scenario", serve_scenario, "Scenario file")->required();
  serve->add_option("--drivers", serve_drivers, "Number of drivers")->required();
  serve->add_option("--objective", serve_objective, "max_earnings or max_fulfillment");
  serve->add_option("--workers", serve_workers, "Threads per step");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  if (*ingest) {
    const auto columns = columns_path ? load_columns(*columns_path) : ColumnMapping{};
    CsvReadStats read_stats;
    const auto records = read_trip_csv(csv_path, columns, trip_date, &read_stats);
    BinningOptions options;
    options.slice_minutes = slice_minutes;
    options.hex_size_miles = hex_size;
    options.cost_per_mile = cost_per_mile;
    const auto grid = HexGrid::filled_hexagon(grid_radius);
    const auto binned = bin_trips(records, grid, options);
    Scenario scenario{grid, impute_fixed_effects(binned), slice_minutes};
    scenario.validate();
    save_scenario(scenario, ingest_out);
    fmt::print(stderr,
               "rows {} malformed {} retained {} outside_box {} outside_grid {} same_zone {} invalid_time {}\n",
               read_stats.rows, read_stats.malformed, binned.stats.retained, binned.stats.outside_box,
               binned.stats.outside_grid, binned.stats.same_zone, binned.stats.invalid_time);
    return kOk;
  }

  if (*synth) {
    for (const auto& h : hotspots) sp.hotspots.push_back(parse_hotspot(h));
    save_scenario(generate_synthetic_city(sp), synth_out);
    return kOk;
  }

  if (*train_cmd) {
    const auto config = train_o.resolve();
    const auto scenario = load_scenario(config.scenario);
    const auto result = train(scenario, config.drivers, config.train, [](const EpisodeMetrics& m) {
      fmt::print(stderr, "episode {:4d}  mean earnings {:10.3f}  fulfillment {:6.2f}%  epsilon {:.4f}\n", m.episode,
                 m.mean_earnings, m.fulfillment_pct, m.epsilon);
    });
    save_checkpoint({result.tables, config.train, config.train.episodes}, checkpoint_out);
    if (log_path) write_training_log(result.metrics, *log_path);
    return kOk;
  }

  if (*eval_cmd) {
    const auto checkpoint = load_checkpoint(eval_checkpoint);
    if (!eval_o.objective) eval_o.objective = to_string(checkpoint.config.mode);
    const auto config = eval_o.resolve();
    const auto scenario = load_scenario(config.scenario);
    auto options = config.eval;
    options.slice_minutes = scenario.slice_minutes;
    const auto seeds = seed_range(eval_seed, eval_runs);
    const auto report = evaluate(checkpoint.tables, scenario, config.drivers, seeds, config.train.mode, options);
    write_json(to_json(report), eval_out);
    if (trace_dir) {
      fs::create_directories(*trace_dir);
      const ExploitationPolicy policy(checkpoint.tables);
      const auto trace =
          run_episode(scenario.matrices, config.drivers, policy, config.train.mode, seeds.front(), options.workers);
      write_trace_csv(trace, fs::path(*trace_dir) / "trace.csv");
      write_driver_earnings_csv(trace, fs::path(*trace_dir) / "driver_earnings.csv");
    }
    return kOk;
  }

  if (*sweep) {
    const auto config = sweep_o.resolve();
    const auto scenario = load_scenario(config.scenario);
    const auto summary = run_experiment_suite(config, scenario, sweep_out);
    for (const auto& p : summary.points) {
      fmt::print(stderr, "{:<32} {}\n", p.name, p.ok ? "ok" : "FAILED: " + p.error);
    }
    return kOk;
  }

  if (*gen) {
    const auto base = load_checkpoint(base_checkpoint);
    const auto reference = load_checkpoint(reference_checkpoint);
    if (!gen_o.objective) gen_o.objective = to_string(reference.config.mode);
    const auto config = gen_o.resolve();
    const auto scenario = load_scenario(config.scenario);
    auto options = config.eval;
    options.slice_minutes = scenario.slice_minutes;
    const auto g = generalization_error(base.tables, reference.tables, scenario, config.drivers,
                                        seed_range(gen_seed, gen_runs), config.train.mode, options);
    write_json({{"reference_fulfillment_pct", g.reference_fulfillment},
                {"baseline_fulfillment_pct", g.baseline_fulfillment},
                {"generalization_error_pct", g.error_pct}},
               std::nullopt);
    return kOk;
  }

  if (*heat) {
    const auto checkpoint = load_checkpoint(heat_checkpoint);
    const auto scenario = load_scenario(heat_scenario);
    fs::create_directories(heat_out);
    for (const int t : heat_times) {
      write_heatmap_csv(coordinated_wait_heatmap(checkpoint.tables, scenario.grid, t),
                        fs::path(heat_out) / fmt::format("heatmap_t{}.csv", t));
    }
    return kOk;
  }

  if (*serve) {
    const auto scenario = load_scenario(serve_scenario);
    EnvServer server(scenario, serve_drivers, objective_from_string(serve_objective), serve_workers);
    return server.serve(std::cin, std::cout);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return kConfigError;
  } catch (const DataError& e) {
    fmt::print(stderr, "data error: {}\n", e.what());
    return kDataError;
  } catch (const fs::filesystem_error& e) {
    fmt::print(stderr, "data error: {}\n", e.what());
    return kDataError;
  } catch (const ContractViolation& e) {
    fmt::print(stderr, "internal error: {}\n", e.what());
    return kInternalError;
  } catch (const std::exception& e) {
    fmt::print(stderr, "internal error: {}\n", e.what());
    return kInternalError;
  }
}
