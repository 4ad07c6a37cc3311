#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "hexfleet/city.hpp"
#include "hexfleet/policy_tables.hpp"
#include "hexfleet/sim.hpp"

namespace hexfleet {

// Tukey box statistics; quartiles by linear interpolation between order
// statistics, whiskers at the most extreme points within 1.5 IQR.
struct BoxStats {
  std::size_t count = 0;
  double mean = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double whisker_low = 0.0;
  double whisker_high = 0.0;

  double iqr() const { return q3 - q1; }
};

double quantile(std::span<const double> sorted, double p);
BoxStats box_stats(std::vector<double> values);

// Unmet requests bucketed by how long until an idle driver was free in the
// same zone.
struct WaitTimeHistogram {
  long long within_5 = 0;
  long long within_10 = 0;
  long long within_15 = 0;
  long long beyond_15 = 0;  // includes requests never reachable in the horizon

  long long total() const { return within_5 + within_10 + within_15 + beyond_15; }
  std::vector<double> fractions() const;
};

// An unmet request at (t, h) counts as servable after (t' - t) slices for
// the earliest t' > t with a driver in h left unmatched at t'.
WaitTimeHistogram unmet_wait_times(const EpisodeTrace& trace, int slice_minutes);

struct EvalOptions {
  int workers = 1;
  int warmup_steps = 12;
  int slice_minutes = 5;
};

struct EvalReport {
  int drivers = 0;
  int episodes = 0;
  // Earnings statistics are per-seed values averaged over seeds.
  double mean_earnings = 0.0;
  double median_earnings = 0.0;
  double q1_earnings = 0.0;
  double q3_earnings = 0.0;
  double per_ride_earnings = 0.0;
  double fulfillment_pct = 0.0;
  double fulfillment_pct_after_warmup = 0.0;
  bool zero_demand = false;
  double successful_waits = 0.0;    // per episode
  double unsuccessful_waits = 0.0;  // per episode
  double unmet_requests = 0.0;      // per episode
  // Fractions of unmet requests in the <=5, <=10, <=15 and >15 minute
  // buckets, pooled over seeds; all zero when nothing went unmet.
  std::array<double, 4> wait_time_fractions{};
  std::vector<double> per_seed_fulfillment;
  std::vector<double> per_seed_mean_earnings;

  // successful / unsuccessful waits; nullopt when there were no failed waits.
  std::optional<double> wait_ratio() const;
};

EvalReport summarize(std::span<const EpisodeTrace> traces, const EvalOptions& options);

// Runs one episode per seed under `policy` and summarizes.
EvalReport evaluate_policy(const PolicyOracle& policy, const Scenario& scenario, int drivers,
                           std::span<const std::uint64_t> seeds, ObjectiveMode mode, const EvalOptions& options);

// Pure exploitation of trained tables. Throws ConfigError when the tables do
// not match the scenario.
EvalReport evaluate(const PolicyTables& tables, const Scenario& scenario, int drivers,
                    std::span<const std::uint64_t> seeds, ObjectiveMode mode, const EvalOptions& options);

nlohmann::json to_json(const EvalReport& report);

struct NaivePolicyParams {
  int popular_zones = 15;
  double relocation_probability = 0.25;
};

// Heuristic driver: waits, or with the relocation probability heads to a
// popular zone (ranked by total outgoing demand) chosen with probability
// proportional to 1 / hex distance. The driver's own zone is never a target.
class NaivePolicy final : public PolicyOracle {
 public:
  NaivePolicy(const NaivePolicyParams& params, const HexGrid& grid, const CityMatrices& history);
  Decision decide(TimeStep t, ZoneId h, int driver, Rng& rng) const override;

  const std::vector<ZoneId>& popular() const { return popular_; }
  // Relocation target distribution from h (empty when there is no target).
  std::vector<std::pair<ZoneId, double>> target_distribution(ZoneId h) const;

 private:
  NaivePolicyParams params_;
  const HexGrid* grid_;
  std::vector<ZoneId> popular_;
};

// The first `strategic_drivers` driver ids follow `strategic`, the rest
// follow `naive`.
class MixedPolicy final : public PolicyOracle {
 public:
  MixedPolicy(const PolicyOracle& strategic, const PolicyOracle& naive, int strategic_drivers)
      : strategic_(&strategic), naive_(&naive), strategic_drivers_(strategic_drivers) {}
  Decision decide(TimeStep t, ZoneId h, int driver, Rng& rng) const override {
    return driver < strategic_drivers_ ? strategic_->decide(t, h, driver, rng) : naive_->decide(t, h, driver, rng);
  }

 private:
  const PolicyOracle* strategic_;
  const PolicyOracle* naive_;
  int strategic_drivers_;
};

struct CohortReport {
  double strategic_fraction = 0.0;
  int strategic_drivers = 0;
  int naive_drivers = 0;
  // Per-driver episode earnings pooled over seeds.
  std::vector<double> strategic_earnings;
  std::vector<double> naive_earnings;
  BoxStats strategic;
  BoxStats naive;
  double fulfillment_pct = 0.0;
};

int strategic_count(double fraction, int drivers);

CohortReport mixed_population_eval(double strategic_fraction, const PolicyTables& tables,
                                   const NaivePolicyParams& naive, const Scenario& scenario, int drivers,
                                   std::span<const std::uint64_t> seeds, ObjectiveMode mode, const EvalOptions& options);

nlohmann::json to_json(const CohortReport& report);

// (F* - F0) / F* in percent; DataError when the reference fulfillment is 0.
double generalization_error_pct(double reference_fulfillment, double baseline_fulfillment);

// Fulfillment of both table sets on the test scenario, then the error.
struct GeneralizationResult {
  double reference_fulfillment = 0.0;
  double baseline_fulfillment = 0.0;
  double error_pct = 0.0;
};
GeneralizationResult generalization_error(const PolicyTables& baseline, const PolicyTables& reference,
                                          const Scenario& test, int drivers, std::span<const std::uint64_t> seeds,
                                          ObjectiveMode mode, const EvalOptions& options);

// One-sided exact binomial sign test: P(X >= wins) for X ~ Bin(wins +
// losses, 1/2). Ties are excluded by the caller.
double sign_test_p(int wins, int losses);

struct ConfidenceInterval {
  double estimate = 0.0;
  double low = 0.0;
  double high = 0.0;
};

// Percentile bootstrap interval for the mean.
ConfidenceInterval bootstrap_mean_ci(std::span<const double> values, double level, int resamples, std::uint64_t seed);

struct HeatmapCell {
  ZoneId zone = 0;
  AxialCoord coord;
  double value = 0.0;
};

// Normalized coordinated wait probability Q_C(t, h, h) / sum_g Q_C(t, h, g)
// per zone; 0 for zones with an empty row.
std::vector<HeatmapCell> coordinated_wait_heatmap(const PolicyTables& tables, const HexGrid& grid, TimeStep t);
void write_heatmap_csv(std::span<const HeatmapCell> cells, const std::filesystem::path& path);

// Per-(t, h) supply, fulfilled, demand and unmet counts.
void write_trace_csv(const EpisodeTrace& trace, const std::filesystem::path& path);
void write_driver_earnings_csv(const EpisodeTrace& trace, const std::filesystem::path& path);

}  // namespace hexfleet
