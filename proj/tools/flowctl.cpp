// flowctl: run experiment phases, sweeps and summaries.

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <sstream>

#include "flow/csv.hpp"
#include "flow/harness.hpp"

namespace fs = std::filesystem;
using namespace flow;

namespace {

harness::RunConfig base_config(bool paper_scale, const std::string& config_path) {
  auto cfg = paper_scale ? harness::paper_profile() : harness::desk_profile();
  if (!config_path.empty()) cfg = harness::load_config(config_path, cfg);
  return cfg;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      const auto v = csv::to_int(item);
      if (v < 0) throw csv::CsvError("negative");
      out.push_back(static_cast<std::uint64_t>(v));
    } catch (const csv::CsvError&) {
      throw agent::ConfigError("seeds", "not a seed list: '" + text + "'");
    }
  }
  if (out.empty()) throw agent::ConfigError("seeds", "empty seed list");
  return out;
}

void print_episode(const agent::EpisodeMetrics& m) {
  std::fprintf(stderr, "episode %3d  sim_time %6.0f s  delay %9.0f s  queue %6.2f  neg_reward %9.0f  arrived %zu/%zu\n",
               m.episode, m.sim_time, m.cumulative_delay, m.average_queue, m.cumulative_negative_reward, m.arrived,
               m.spawned);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Signalized-intersection simulator with a policy-gradient signal controller"};
  app.require_subcommand(1);

  std::string mode = "rl", config_path, out_dir = "run";
  std::uint64_t seed = 0;
  bool seed_given = false, paper_scale = false, quiet = false;
  auto* run = app.add_subcommand("run", "run one phase: fixed, rl or rl-reroute");
  run->add_option("--mode", mode, "fixed | rl | rl-reroute")->capture_default_str();
  run->add_option("--config", config_path, "key = value overrides");
  run->add_option_function<std::uint64_t>(
      "--seed", [&](const std::uint64_t& s) { seed = s, seed_given = true; }, "base seed");
  run->add_option("--out", out_dir, "output directory")->capture_default_str();
  run->add_flag("--paper-scale", paper_scale, "use the full-scale profile");
  run->add_flag("-q,--quiet", quiet, "no per-episode progress");

  std::string axis = "gamma", seeds_text = "1,2,3", sweep_mode = "rl";
  unsigned jobs = 0;
  auto* sweep = app.add_subcommand("sweep", "gamma, width or depth sweep");
  sweep->add_option("--axis", axis, "gamma | width | depth")->capture_default_str();
  sweep->add_option("--config", config_path, "key = value overrides");
  sweep->add_option("--seeds", seeds_text, "comma-separated seeds")->capture_default_str();
  sweep->add_option("--mode", sweep_mode, "rl | rl-reroute")->capture_default_str();
  sweep->add_option("--jobs", jobs, "parallel runs (0 = one per core)");
  sweep->add_option("--out", out_dir, "output directory")->capture_default_str();
  sweep->add_flag("--paper-scale", paper_scale, "use the full-scale profile");

  std::vector<std::string> dirs;
  auto* summarize = app.add_subcommand("summarize", "compare fixed, rl and rl-reroute run directories");
  summarize->add_option("dirs", dirs, "run directories")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*run) {
      auto cfg = base_config(paper_scale, config_path);
      if (seed_given) cfg.train.seed = seed;
      cfg.validate();
      const auto m = harness::parse_mode(mode);
      const auto result = harness::run_phase(m, cfg, out_dir, quiet ? nullptr : print_episode);
      const auto fin = harness::final_averages(result.metrics);
      std::cout << harness::mode_name(m) << ": " << result.metrics.size() << " episodes, final mean sim time "
                << fin.sim_time << " s, wrote " << out_dir << "\n";
    } else if (*sweep) {
      const auto cfg = base_config(paper_scale, config_path);
      const auto res = harness::run_sweep(harness::parse_axis(axis), cfg, parse_seeds(seeds_text), out_dir,
                                          harness::parse_mode(sweep_mode), jobs);
      std::cout << "rank  " << axis << "  mean_final_neg_reward\n";
      for (std::size_t i = 0; i < res.ranking.size(); ++i)
        std::cout << i + 1 << "  " << res.ranking[i].first << "  " << res.ranking[i].second << "\n";
    } else if (*summarize) {
      std::vector<fs::path> paths(dirs.begin(), dirs.end());
      std::cout << harness::format_report(harness::summarize_dirs(paths));
    }
  } catch (const agent::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
