#include "hexfleet/experiments.hpp"

#include <algorithm>
#include <fstream>
#include <functional>

#include <fmt/format.h>
#include <fmt/os.h>

#include "hexfleet/errors.hpp"
#include "hexfleet/parallel.hpp"

namespace hexfleet {

namespace {

void reject_unknown(const nlohmann::json& doc, std::initializer_list<const char*> keys, const char* section) {
  for (const auto& [key, value] : doc.items()) {
    if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return key == k; })) {
      throw ConfigError(fmt::format("unknown field '{}' in {}", key, section));
    }
  }
}

template <typename T>
void read(const nlohmann::json& doc, const char* key, T& out) {
  if (!doc.contains(key)) return;
  try {
    out = doc.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("config field '{}': {}", key, e.what()));
  }
}

const nlohmann::json& section(const nlohmann::json& doc, const char* key) {
  static const nlohmann::json kEmpty = nlohmann::json::object();
  if (!doc.contains(key)) return kEmpty;
  if (!doc.at(key).is_object()) throw ConfigError(fmt::format("config section '{}' must be an object", key));
  return doc.at(key);
}

struct SweepPoint {
  std::string name;
  std::function<void(SweepPointResult&)> run;
};

void write_cohort_csv(const CohortReport& r, const std::filesystem::path& path) {
  auto out = fmt::output_file(path.string());
  out.print("cohort,drivers,count,mean,q1,median,q3,whisker_low,whisker_high\n");
  auto row = [&](const char* name, int drivers, const BoxStats& b) {
    out.print("{},{},{},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f}\n", name, drivers, b.count, b.mean, b.q1, b.median,
              b.q3, b.whisker_low, b.whisker_high);
  };
  row("strategic", r.strategic_drivers, r.strategic);
  row("naive", r.naive_drivers, r.naive);
}

}  // namespace

void ExperimentConfig::validate() const {
  if (drivers < 1) throw ConfigError("drivers must be at least 1");
  if (eval_seeds.empty()) throw ConfigError("at least one evaluation seed is required");
  if (jobs < 1) throw ConfigError("jobs must be at least 1");
  if (eval.warmup_steps < 0) throw ConfigError("warmup_steps must be non-negative");
  train.validate();
  for (const int n : sweep.supply) {
    if (n < 1) throw ConfigError("supply sweep values must be at least 1");
  }
  for (const double phi : sweep.strategic_fractions) strategic_count(phi, drivers);
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  reject_unknown(doc, {"scenario", "drivers", "train", "eval", "naive", "sweep", "jobs"}, "config");
  ExperimentConfig c;
  if (doc.contains("scenario")) {
    std::string path;
    read(doc, "scenario", path);
    c.scenario = path;
    if (c.scenario.is_relative() && !base_dir.empty()) c.scenario = base_dir / c.scenario;
  }
  read(doc, "drivers", c.drivers);
  read(doc, "jobs", c.jobs);
  if (doc.contains("train")) c.train = train_config_from_json(doc.at("train"));

  const auto& ev = section(doc, "eval");
  reject_unknown(ev, {"seeds", "warmup_steps", "workers"}, "eval");
  read(ev, "seeds", c.eval_seeds);
  read(ev, "warmup_steps", c.eval.warmup_steps);
  read(ev, "workers", c.eval.workers);

  const auto& nv = section(doc, "naive");
  reject_unknown(nv, {"popular_zones", "relocation_probability"}, "naive");
  read(nv, "popular_zones", c.naive.popular_zones);
  read(nv, "relocation_probability", c.naive.relocation_probability);

  const auto& sw = section(doc, "sweep");
  reject_unknown(sw,
                 {"supply", "independent_episodes", "coordinated_episodes", "objectives", "strategic_fractions",
                  "heatmap_times"},
                 "sweep");
  read(sw, "supply", c.sweep.supply);
  read(sw, "independent_episodes", c.sweep.independent_episodes);
  read(sw, "coordinated_episodes", c.sweep.coordinated_episodes);
  read(sw, "objectives", c.sweep.objectives);
  read(sw, "strategic_fractions", c.sweep.strategic_fractions);
  read(sw, "heatmap_times", c.sweep.heatmap_times);
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config {}", path.string()));
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(fmt::format("config {} is not valid JSON: {}", path.string(), e.what()));
  }
  return experiment_config_from_json(doc, path.parent_path());
}

nlohmann::json to_json(const ExperimentConfig& c) {
  return {{"scenario", c.scenario.string()},
          {"drivers", c.drivers},
          {"jobs", c.jobs},
          {"train", to_json(c.train)},
          {"eval", {{"seeds", c.eval_seeds}, {"warmup_steps", c.eval.warmup_steps}, {"workers", c.eval.workers}}},
          {"naive",
           {{"popular_zones", c.naive.popular_zones}, {"relocation_probability", c.naive.relocation_probability}}},
          {"sweep",
           {{"supply", c.sweep.supply},
            {"independent_episodes", c.sweep.independent_episodes},
            {"coordinated_episodes", c.sweep.coordinated_episodes},
            {"objectives", c.sweep.objectives},
            {"strategic_fractions", c.sweep.strategic_fractions},
            {"heatmap_times", c.sweep.heatmap_times}}}};
}

int SuiteSummary::failures() const {
  return static_cast<int>(std::count_if(points.begin(), points.end(), [](const auto& p) { return !p.ok; }));
}

void write_report_csv(const EvalReport& r, const std::filesystem::path& path) {
  auto out = fmt::output_file(path.string());
  out.print(
      "drivers,episodes,mean_earnings,median_earnings,q1_earnings,q3_earnings,per_ride_earnings,fulfillment_pct,"
      "fulfillment_pct_after_warmup,zero_demand,successful_waits,unsuccessful_waits,wait_ratio,unmet_requests,"
      "wait_le_5,wait_le_10,wait_le_15,wait_gt_15\n");
  const auto ratio = r.wait_ratio();
  out.print("{},{},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{},{:.3f},{:.3f},{},{:.3f},{:.6f},{:.6f},{:.6f},{:.6f}\n",
            r.drivers, r.episodes, r.mean_earnings, r.median_earnings, r.q1_earnings, r.q3_earnings,
            r.per_ride_earnings, r.fulfillment_pct, r.fulfillment_pct_after_warmup, r.zero_demand ? 1 : 0,
            r.successful_waits, r.unsuccessful_waits, ratio ? fmt::format("{:.6f}", *ratio) : std::string("inf"),
            r.unmet_requests, r.wait_time_fractions[0], r.wait_time_fractions[1], r.wait_time_fractions[2],
            r.wait_time_fractions[3]);
}

SuiteSummary run_experiment_suite(const ExperimentConfig& config, const Scenario& scenario,
                                  const std::filesystem::path& out_dir) {
  config.validate();
  std::filesystem::create_directories(out_dir);
  auto options = config.eval;
  options.slice_minutes = scenario.slice_minutes;

  auto train_and_evaluate = [&, options](const TrainConfig& tc, int drivers, const std::string& name,
                                         SweepPointResult& result) {
    const auto trained = train(scenario, drivers, tc);
    const auto report = evaluate(trained.tables, scenario, drivers, config.eval_seeds, tc.mode, options);
    write_report_csv(report, out_dir / (name + ".csv"));
    result.report = report;
  };

  std::vector<SweepPoint> points;
  const auto& sw = config.sweep;
  for (const int n : sw.supply) {
    points.push_back({fmt::format("supply_n{}", n), [&, n](SweepPointResult& r) {
                        train_and_evaluate(config.train, n, r.name, r);
                      }});
  }
  for (const int il : sw.independent_episodes) {
    for (const int cl : sw.coordinated_episodes) {
      points.push_back({fmt::format("overlap_il{}_cl{}", il, cl), [&, il, cl](SweepPointResult& r) {
                          auto tc = config.train;
                          tc.independent_episodes = il;
                          tc.coordinated_episodes = cl;
                          tc.continue_independent_learning = false;
                          train_and_evaluate(tc, config.drivers, r.name, r);
                        }});
    }
  }
  if (sw.objectives) {
    for (const auto mode : {ObjectiveMode::MaxEarnings, ObjectiveMode::MaxFulfillment}) {
      points.push_back({"objective_" + to_string(mode), [&, mode](SweepPointResult& r) {
                          auto tc = config.train;
                          tc.mode = mode;
                          train_and_evaluate(tc, config.drivers, r.name, r);
                        }});
    }
  }

  // Mixed-population points and heatmaps share the base configuration's
  // tables, trained once up front.
  std::optional<TrainResult> base;
  std::string base_error;
  if (!sw.strategic_fractions.empty() || !sw.heatmap_times.empty()) {
    try {
      base = train(scenario, config.drivers, config.train);
    } catch (const std::exception& e) {
      base_error = e.what();
    }
  }
  auto base_tables = [&]() -> const PolicyTables& {
    if (!base) throw std::runtime_error("base training failed: " + base_error);
    return base->tables;
  };
  for (const double phi : sw.strategic_fractions) {
    points.push_back({fmt::format("mixed_phi{}", phi), [&, phi, options](SweepPointResult& r) {
                        const auto cohorts = mixed_population_eval(phi, base_tables(), config.naive, scenario,
                                                                   config.drivers, config.eval_seeds,
                                                                   config.train.mode, options);
                        write_cohort_csv(cohorts, out_dir / (r.name + ".csv"));
                      }});
  }
  for (const int t : sw.heatmap_times) {
    points.push_back({fmt::format("heatmap_t{}", t), [&, t](SweepPointResult& r) {
                        write_heatmap_csv(coordinated_wait_heatmap(base_tables(), scenario.grid, t),
                                          out_dir / (r.name + ".csv"));
                      }});
  }
  if (points.empty()) {
    points.push_back({"base", [&](SweepPointResult& r) { train_and_evaluate(config.train, config.drivers, r.name, r); }});
  }

  SuiteSummary summary;
  summary.points.resize(points.size());
  parallel_for(static_cast<int>(points.size()), config.jobs, [&](int i) {
    auto& result = summary.points[i];
    result.name = points[i].name;
    try {
      points[i].run(result);
      result.ok = true;
    } catch (const std::exception& e) {
      result.error = e.what();
    }
  });

  auto out = fmt::output_file((out_dir / "summary.csv").string());
  out.print("point,ok,fulfillment_pct,mean_earnings,error\n");
  for (const auto& p : summary.points) {
    std::string error = p.error;
    std::replace(error.begin(), error.end(), ',', ';');
    std::replace(error.begin(), error.end(), '\n', ' ');
    out.print("{},{},{},{},{}\n", p.name, p.ok ? 1 : 0,
              p.report ? fmt::format("{:.6f}", p.report->fulfillment_pct) : std::string(),
              p.report ? fmt::format("{:.6f}", p.report->mean_earnings) : std::string(), error);
  }
  return summary;
}

}  // namespace hexfleet
