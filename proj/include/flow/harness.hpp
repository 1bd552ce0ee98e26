#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "flow/pgagent.hpp"
#include "flow/rerouter.hpp"
#include "flow/roadnet.hpp"
#include "flow/simcore.hpp"

namespace flow::harness {

using agent::ConfigError;
using agent::EpisodeMetrics;

enum class Mode { fixed, rl, rl_reroute };
std::string_view mode_name(Mode m);  // fixed | rl | rl-reroute
Mode parse_mode(std::string_view name);

struct ScenarioConfig {
  int vehicles = 1000;
  int spawn_horizon = 300;        // s over which departures are spread
  int max_sim_time = 9000;        // s
  int fixed_green = 30;           // s per phase in the fixed-time plan
  double congestion_threshold = 0.05;  // vehicles/m
  std::filesystem::path network;  // empty: built-in geometry
};

struct RunConfig {
  agent::TrainConfig train;
  ScenarioConfig scenario;

  void validate() const;  // throws ConfigError
};

/// 1000 vehicles, 50 episodes, 300 decisions per episode.
RunConfig desk_profile();
/// 4000 vehicles, 200 episodes, 2500 decisions, batch 200, memory 4500.
RunConfig paper_profile();

/// `key = value` lines on top of `base`; `#` comments. Unknown keys and bad
/// values raise ConfigError naming the key. A relative `network` path is
/// resolved against `base_dir`.
RunConfig parse_config(std::string_view text, RunConfig base, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base);
std::string format_config(const RunConfig& cfg);

/// Network plus the per-episode demand shared by every mode.
class Scenario {
 public:
  explicit Scenario(RunConfig cfg);

  const RunConfig& config() const { return cfg_; }
  const roadnet::RoadNetwork& network() const { return *net_; }
  std::shared_ptr<const roadnet::RoadNetwork> network_ptr() const { return net_; }

  std::uint64_t episode_seed(int episode) const;
  std::vector<sim::Departure> schedule(int episode) const;
  std::unique_ptr<sim::Simulation> make(int episode, bool log_detectors = false) const;
  sim::SimConfig sim_config(bool log_detectors) const;

 private:
  RunConfig cfg_;
  std::shared_ptr<const roadnet::RoadNetwork> net_;
  sim::IntersectionLayout layout_;
};

/// Cycles phases 0,1,2,3 with fixed green; reward is sampled per phase.
EpisodeMetrics run_fixed_episode(const Scenario& scenario, int episode, sim::Simulation& sim);
std::vector<EpisodeMetrics> run_fixed_time(const RunConfig& cfg,
                                           const std::function<void(const EpisodeMetrics&)>& on_episode = {});

struct RunResult {
  Mode mode = Mode::fixed;
  std::vector<EpisodeMetrics> metrics;
  std::vector<reroute::RerouteDecision> reroutes;  // final episode
  std::vector<sim::DetectorReading> detectors;     // final episode
};

/// Runs one phase and writes metrics.csv, arrivals.csv, road.net,
/// detectors.csv, summary.txt and, for learning modes, policy.nn and
/// reroutes.csv into `out_dir`.
RunResult run_phase(Mode mode, const RunConfig& cfg, const std::filesystem::path& out_dir,
                    const std::function<void(const EpisodeMetrics&)>& on_episode = {});

// --- metrics files ---------------------------------------------------------

inline constexpr std::string_view kMetricsHeader = "episode,cum_delay_s,avg_queue_len,cum_negative_reward,sim_time_s";
std::string format_metrics(const std::vector<EpisodeMetrics>& metrics);
std::vector<EpisodeMetrics> parse_metrics(std::string_view text);
std::vector<EpisodeMetrics> read_metrics(const std::filesystem::path& path);
std::string format_detectors(const std::vector<sim::DetectorReading>& readings);

/// Mean over the last quarter of the series (at least one episode).
struct FinalAverages {
  double cumulative_delay = 0.0;
  double average_queue = 0.0;
  double cumulative_negative_reward = 0.0;
  double sim_time = 0.0;
};
FinalAverages final_averages(const std::vector<EpisodeMetrics>& metrics);
/// Same, over the first quarter.
FinalAverages initial_averages(const std::vector<EpisodeMetrics>& metrics);

// --- sweeps ----------------------------------------------------------------

enum class Axis { gamma, width, depth };
std::string_view axis_name(Axis a);
Axis parse_axis(std::string_view name);
std::vector<double> axis_values(Axis a);
void apply_axis(RunConfig& cfg, Axis a, double value);

struct SweepRow {
  double value = 0.0;
  std::uint64_t seed = 0;
  FinalAverages final;
};
struct SweepResult {
  Axis axis = Axis::gamma;
  std::vector<SweepRow> rows;
  /// Sweep values, best (least negative mean final reward) first.
  std::vector<std::pair<double, double>> ranking;
};

/// One learning run per value and seed, run on up to `jobs` threads. Writes
/// comparison.csv, ranking.csv and summary.txt into `out_dir`, and each
/// run's artifacts into `<out_dir>/<axis>-<value>/seed-<seed>`.
SweepResult run_sweep(Axis axis, const RunConfig& base, const std::vector<std::uint64_t>& seeds,
                      const std::filesystem::path& out_dir, Mode mode = Mode::rl, unsigned jobs = 0,
                      const std::vector<double>& values = {});

// --- summary ---------------------------------------------------------------

struct Improvement {
  FinalAverages fixed, rl, rl_reroute;
  double rl_time_reduction = 0.0;        // % of fixed mean simulation time
  double reroute_time_reduction = 0.0;
  double rl_delay_reduction = 0.0;       // % of fixed mean cumulative delay
  double reroute_delay_reduction = 0.0;
};

double percent_reduction(double baseline, double value);

/// Each argument holds one metrics series per seed; the final-quarter means
/// are averaged across seeds.
Improvement summarize(const std::vector<std::vector<EpisodeMetrics>>& fixed,
                      const std::vector<std::vector<EpisodeMetrics>>& rl,
                      const std::vector<std::vector<EpisodeMetrics>>& rl_reroute);
std::string format_report(const Improvement& imp);

/// Reads run directories (mode from each summary.txt) and summarizes them.
Improvement summarize_dirs(const std::vector<std::filesystem::path>& dirs);

}  // namespace flow::harness
