#include "hexfleet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>
#include <fmt/os.h>

#include "hexfleet/errors.hpp"
#include "hexfleet/learner.hpp"

namespace hexfleet {

namespace {

constexpr std::uint64_t kBootstrapStream = 0xb007;

double mean_of(std::span<const double> v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double fulfillment_from(const EpisodeTrace& trace, int first_step) {
  long long served = 0;
  long long demand = 0;
  for (int t = std::max(first_step, 0); t < trace.horizon; ++t) {
    for (int h = 0; h < trace.zones; ++h) {
      served += trace.fulfilled_at(t, h);
      demand += trace.demand[trace.zone_cell(t, h)];
    }
  }
  return demand == 0 ? 100.0 : 100.0 * static_cast<double>(served) / static_cast<double>(demand);
}

void check_tables(const PolicyTables& tables, const Scenario& scenario) {
  if (tables.horizon() != scenario.matrices.horizon() || tables.zones() != scenario.matrices.zones()) {
    throw ConfigError(fmt::format("policy tables are {} x {} but the scenario is {} x {}", tables.horizon(),
                                  tables.zones(), scenario.matrices.horizon(), scenario.matrices.zones()));
  }
}

nlohmann::json box_json(const BoxStats& b) {
  return {{"count", b.count},           {"mean", b.mean},
          {"q1", b.q1},                 {"median", b.median},
          {"q3", b.q3},                 {"whisker_low", b.whisker_low},
          {"whisker_high", b.whisker_high}};
}

}  // namespace

double quantile(std::span<const double> sorted, double p) {
  require(!sorted.empty(), "quantile of an empty sample");
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

BoxStats box_stats(std::vector<double> values) {
  BoxStats b;
  b.count = values.size();
  if (values.empty()) return b;
  std::sort(values.begin(), values.end());
  b.mean = mean_of(values);
  b.q1 = quantile(values, 0.25);
  b.median = quantile(values, 0.5);
  b.q3 = quantile(values, 0.75);
  const double lo_fence = b.q1 - 1.5 * b.iqr();
  const double hi_fence = b.q3 + 1.5 * b.iqr();
  b.whisker_low = *std::lower_bound(values.begin(), values.end(), lo_fence);
  b.whisker_high = *std::prev(std::upper_bound(values.begin(), values.end(), hi_fence));
  return b;
}

std::vector<double> WaitTimeHistogram::fractions() const {
  const auto n = total();
  if (n == 0) return {0.0, 0.0, 0.0, 0.0};
  const auto d = static_cast<double>(n);
  return {within_5 / d, within_10 / d, within_15 / d, beyond_15 / d};
}

WaitTimeHistogram unmet_wait_times(const EpisodeTrace& trace, int slice_minutes) {
  require(slice_minutes >= 1, "slice length must be positive");
  WaitTimeHistogram hist;
  for (const auto& u : trace.unmet) {
    int minutes = -1;
    for (int t = u.t + 1; t < trace.horizon; ++t) {
      if (trace.supply_at(t, u.zone) > trace.fulfilled_at(t, u.zone)) {
        minutes = (t - u.t) * slice_minutes;
        break;
      }
    }
    if (minutes < 0 || minutes > 15) {
      hist.beyond_15 += u.count;
    } else if (minutes <= 5) {
      hist.within_5 += u.count;
    } else if (minutes <= 10) {
      hist.within_10 += u.count;
    } else {
      hist.within_15 += u.count;
    }
  }
  return hist;
}

std::optional<double> EvalReport::wait_ratio() const {
  if (unsuccessful_waits <= 0.0) return std::nullopt;
  return successful_waits / unsuccessful_waits;
}

EvalReport summarize(std::span<const EpisodeTrace> traces, const EvalOptions& options) {
  require(!traces.empty(), "nothing to summarize");
  EvalReport r;
  r.drivers = traces.front().drivers;
  r.episodes = static_cast<int>(traces.size());
  WaitTimeHistogram pooled;
  long long demand = 0;
  std::vector<double> medians, q1s, q3s, per_ride, after_warmup, successes, failures, unmet;
  for (const auto& tr : traces) {
    auto earnings = tr.driver_earnings;
    std::sort(earnings.begin(), earnings.end());
    r.per_seed_mean_earnings.push_back(tr.mean_earnings());
    medians.push_back(quantile(earnings, 0.5));
    q1s.push_back(quantile(earnings, 0.25));
    q3s.push_back(quantile(earnings, 0.75));
    const auto rides = tr.total_fulfilled();
    per_ride.push_back(rides == 0 ? 0.0 : tr.total_earnings() / static_cast<double>(rides));
    r.per_seed_fulfillment.push_back(tr.fulfillment_pct());
    after_warmup.push_back(fulfillment_from(tr, options.warmup_steps));
    successes.push_back(static_cast<double>(tr.successful_waits()));
    failures.push_back(static_cast<double>(tr.unsuccessful_waits()));
    const auto hist = unmet_wait_times(tr, options.slice_minutes);
    unmet.push_back(static_cast<double>(hist.total()));
    pooled.within_5 += hist.within_5;
    pooled.within_10 += hist.within_10;
    pooled.within_15 += hist.within_15;
    pooled.beyond_15 += hist.beyond_15;
    demand += tr.total_demand();
  }
  r.mean_earnings = mean_of(r.per_seed_mean_earnings);
  r.median_earnings = mean_of(medians);
  r.q1_earnings = mean_of(q1s);
  r.q3_earnings = mean_of(q3s);
  r.per_ride_earnings = mean_of(per_ride);
  r.fulfillment_pct = mean_of(r.per_seed_fulfillment);
  r.fulfillment_pct_after_warmup = mean_of(after_warmup);
  r.zero_demand = demand == 0;
  r.successful_waits = mean_of(successes);
  r.unsuccessful_waits = mean_of(failures);
  r.unmet_requests = mean_of(unmet);
  const auto fr = pooled.fractions();
  std::copy(fr.begin(), fr.end(), r.wait_time_fractions.begin());
  return r;
}

EvalReport evaluate_policy(const PolicyOracle& policy, const Scenario& scenario, int drivers,
                           std::span<const std::uint64_t> seeds, ObjectiveMode mode, const EvalOptions& options) {
  if (seeds.empty()) throw ConfigError("evaluation needs at least one seed");
  if (drivers < 1) throw ConfigError("evaluation needs at least one driver");
  std::vector<EpisodeTrace> traces;
  traces.reserve(seeds.size());
  for (const auto seed : seeds) traces.push_back(run_episode(scenario.matrices, drivers, policy, mode, seed, options.workers));
  return summarize(traces, options);
}

EvalReport evaluate(const PolicyTables& tables, const Scenario& scenario, int drivers,
                    std::span<const std::uint64_t> seeds, ObjectiveMode mode, const EvalOptions& options) {
  check_tables(tables, scenario);
  const ExploitationPolicy policy(tables);
  return evaluate_policy(policy, scenario, drivers, seeds, mode, options);
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json doc{{"drivers", r.drivers},
                     {"episodes", r.episodes},
                     {"mean_earnings", r.mean_earnings},
                     {"median_earnings", r.median_earnings},
                     {"q1_earnings", r.q1_earnings},
                     {"q3_earnings", r.q3_earnings},
                     {"per_ride_earnings", r.per_ride_earnings},
                     {"fulfillment_pct", r.fulfillment_pct},
                     {"fulfillment_pct_after_warmup", r.fulfillment_pct_after_warmup},
                     {"zero_demand", r.zero_demand},
                     {"successful_waits", r.successful_waits},
                     {"unsuccessful_waits", r.unsuccessful_waits},
                     {"unmet_requests", r.unmet_requests},
                     {"wait_time_fractions",
                      {{"le_5_min", r.wait_time_fractions[0]},
                       {"le_10_min", r.wait_time_fractions[1]},
                       {"le_15_min", r.wait_time_fractions[2]},
                       {"gt_15_min", r.wait_time_fractions[3]}}},
                     {"per_seed_fulfillment", r.per_seed_fulfillment},
                     {"per_seed_mean_earnings", r.per_seed_mean_earnings}};
  const auto ratio = r.wait_ratio();
  doc["wait_ratio"] = ratio ? nlohmann::json(*ratio) : nlohmann::json(nullptr);
  return doc;
}

NaivePolicy::NaivePolicy(const NaivePolicyParams& params, const HexGrid& grid, const CityMatrices& history)
    : params_(params), grid_(&grid) {
  if (!(params.relocation_probability >= 0.0 && params.relocation_probability <= 1.0)) {
    throw ConfigError("naive relocation probability must lie in [0, 1]");
  }
  if (params.popular_zones < 0) throw ConfigError("popular zone count must be non-negative");
  if (grid.size() != history.zones()) throw ConfigError("grid and demand history disagree on the zone count");
  const int m = grid.size();
  std::vector<long long> volume(m, 0);
  for (int t = 0; t < history.horizon(); ++t) {
    for (int h = 0; h < m; ++h) volume[h] += history.outgoing_demand(t, h);
  }
  std::vector<ZoneId> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](ZoneId a, ZoneId b) { return volume[a] > volume[b]; });
  order.resize(std::min(m, params.popular_zones));
  popular_ = std::move(order);
}

std::vector<std::pair<ZoneId, double>> NaivePolicy::target_distribution(ZoneId h) const {
  std::vector<std::pair<ZoneId, double>> out;
  double total = 0.0;
  for (const ZoneId z : popular_) {
    if (z == h) continue;
    const double w = 1.0 / grid_->distance(h, z);
    out.emplace_back(z, w);
    total += w;
  }
  for (auto& [z, p] : out) p /= total;
  return out;
}

Decision NaivePolicy::decide(TimeStep, ZoneId h, int, Rng& rng) const {
  if (params_.relocation_probability > 0.0 && uniform01(rng) < params_.relocation_probability) {
    const auto targets = target_distribution(h);
    if (!targets.empty()) {
      std::vector<double> weights;
      weights.reserve(targets.size());
      for (const auto& [z, p] : targets) weights.push_back(p);
      return {Action::relocate(h, targets[sample_weighted(rng, weights, 1.0)].first), ActionSource::External};
    }
  }
  return {Action::wait(h), ActionSource::External};
}

int strategic_count(double fraction, int drivers) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw ConfigError("strategic fraction must lie in [0, 1]");
  // Guard against fractions like 0.3 * 10 = 3.0000000000000004.
  return std::min(drivers, static_cast<int>(std::ceil(fraction * drivers - 1e-9)));
}

CohortReport mixed_population_eval(double strategic_fraction, const PolicyTables& tables,
                                   const NaivePolicyParams& naive, const Scenario& scenario, int drivers,
                                   std::span<const std::uint64_t> seeds, ObjectiveMode mode,
                                   const EvalOptions& options) {
  check_tables(tables, scenario);
  if (seeds.empty()) throw ConfigError("evaluation needs at least one seed");
  CohortReport r;
  r.strategic_fraction = strategic_fraction;
  r.strategic_drivers = strategic_count(strategic_fraction, drivers);
  r.naive_drivers = drivers - r.strategic_drivers;
  const ExploitationPolicy strategic(tables);
  const NaivePolicy heuristic(naive, scenario.grid, scenario.matrices);
  const MixedPolicy policy(strategic, heuristic, r.strategic_drivers);
  std::vector<double> fulfillment;
  for (const auto seed : seeds) {
    const auto trace = run_episode(scenario.matrices, drivers, policy, mode, seed, options.workers);
    for (int d = 0; d < drivers; ++d) {
      (d < r.strategic_drivers ? r.strategic_earnings : r.naive_earnings).push_back(trace.driver_earnings[d]);
    }
    fulfillment.push_back(trace.fulfillment_pct());
  }
  r.strategic = box_stats(r.strategic_earnings);
  r.naive = box_stats(r.naive_earnings);
  r.fulfillment_pct = mean_of(fulfillment);
  return r;
}

nlohmann::json to_json(const CohortReport& r) {
  return {{"strategic_fraction", r.strategic_fraction},
          {"strategic_drivers", r.strategic_drivers},
          {"naive_drivers", r.naive_drivers},
          {"strategic", box_json(r.strategic)},
          {"naive", box_json(r.naive)},
          {"fulfillment_pct", r.fulfillment_pct}};
}

double generalization_error_pct(double reference_fulfillment, double baseline_fulfillment) {
  if (reference_fulfillment == 0.0) {
    throw DataError("generalization error is undefined when the reference policy fulfills nothing");
  }
  return (reference_fulfillment - baseline_fulfillment) / reference_fulfillment * 100.0;
}

GeneralizationResult generalization_error(const PolicyTables& baseline, const PolicyTables& reference,
                                          const Scenario& test, int drivers, std::span<const std::uint64_t> seeds,
                                          ObjectiveMode mode, const EvalOptions& options) {
  GeneralizationResult g;
  g.reference_fulfillment = evaluate(reference, test, drivers, seeds, mode, options).fulfillment_pct;
  g.baseline_fulfillment = evaluate(baseline, test, drivers, seeds, mode, options).fulfillment_pct;
  g.error_pct = generalization_error_pct(g.reference_fulfillment, g.baseline_fulfillment);
  return g;
}

double sign_test_p(int wins, int losses) {
  require(wins >= 0 && losses >= 0, "sign test counts must be non-negative");
  const int n = wins + losses;
  if (n == 0) return 1.0;
  // Sum C(n, k) / 2^n for k >= wins in log space.
  double p = 0.0;
  for (int k = wins; k <= n; ++k) {
    p += std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) - n * std::log(2.0));
  }
  return std::min(p, 1.0);
}

ConfidenceInterval bootstrap_mean_ci(std::span<const double> values, double level, int resamples, std::uint64_t seed) {
  if (values.empty()) throw ConfigError("bootstrap needs at least one value");
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("confidence level must lie in (0, 1)");
  if (resamples < 1) throw ConfigError("bootstrap needs at least one resample");
  auto rng = make_stream(seed, {kBootstrapStream});
  std::vector<double> means(resamples);
  for (auto& m : means) {
    double sum = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) sum += values[uniform_index(rng, values.size())];
    m = sum / static_cast<double>(values.size());
  }
  std::sort(means.begin(), means.end());
  const double tail = (1.0 - level) / 2.0;
  return {mean_of(values), quantile(means, tail), quantile(means, 1.0 - tail)};
}

std::vector<HeatmapCell> coordinated_wait_heatmap(const PolicyTables& tables, const HexGrid& grid, TimeStep t) {
  if (grid.size() != tables.zones()) throw ConfigError("grid and policy tables disagree on the zone count");
  if (t < 0 || t >= tables.horizon()) throw ConfigError(fmt::format("heatmap time {} outside the horizon", t));
  std::vector<HeatmapCell> cells;
  cells.reserve(grid.size());
  for (ZoneId h = 0; h < grid.size(); ++h) {
    double total = 0.0;
    for (ZoneId g = 0; g < grid.size(); ++g) total += tables.q_coordinated(t, h, g);
    cells.push_back({h, grid.coord(h), total > 0.0 ? tables.q_coordinated(t, h, h) / total : 0.0});
  }
  return cells;
}

void write_heatmap_csv(std::span<const HeatmapCell> cells, const std::filesystem::path& path) {
  auto out = fmt::output_file(path.string());
  out.print("zone,q,r,value\n");
  for (const auto& c : cells) out.print("{},{},{},{:.9g}\n", c.zone, c.coord.q, c.coord.r, c.value);
}

void write_trace_csv(const EpisodeTrace& trace, const std::filesystem::path& path) {
  std::vector<int> unmet(trace.supply.size(), 0);
  for (const auto& u : trace.unmet) unmet[trace.zone_cell(u.t, u.zone)] += u.count;
  auto out = fmt::output_file(path.string());
  out.print("t,zone,supply,fulfilled,demand,unmet\n");
  for (int t = 0; t < trace.horizon; ++t) {
    for (int h = 0; h < trace.zones; ++h) {
      const auto c = trace.zone_cell(t, h);
      out.print("{},{},{},{},{},{}\n", t, h, trace.supply[c], trace.fulfilled[c], trace.demand[c], unmet[c]);
    }
  }
}

void write_driver_earnings_csv(const EpisodeTrace& trace, const std::filesystem::path& path) {
  auto out = fmt::output_file(path.string());
  out.print("driver,earnings,rides\n");
  for (int d = 0; d < trace.drivers; ++d) {
    out.print("{},{:.6f},{}\n", d, trace.driver_earnings[d], trace.driver_rides[d]);
  }
}

}  // namespace hexfleet
