#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "flow/csv.hpp"
#include "flow/harness.hpp"

using namespace flow;
using namespace flow::harness;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("flow_harness_" + name);
  fs::remove_all(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig tiny() {
  RunConfig c;
  c.train.episodes = 4;
  c.train.batch_size = 20;
  c.train.buffer_capacity = 200;
  c.train.max_agent_steps = 40;
  c.train.hidden_width = 16;
  c.train.hidden_count = 1;
  c.scenario.vehicles = 60;
  c.scenario.spawn_horizon = 60;
  return c;
}

EpisodeMetrics metric(int ep, double sim_time, double delay, double neg = 0.0) {
  EpisodeMetrics m;
  m.episode = ep;
  m.sim_time = sim_time;
  m.cumulative_delay = delay;
  m.cumulative_negative_reward = neg;
  return m;
}

std::string config_error_key(const std::string& text) {
  try {
    parse_config(text, desk_profile());
  } catch (const ConfigError& e) {
    return e.key();
  }
  return {};
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("profiles") {
  const auto desk = desk_profile();
  CHECK(desk.train.episodes == 50);
  CHECK(desk.scenario.vehicles == 1000);
  CHECK(desk.train.max_agent_steps == 300);
  const auto paper = paper_profile();
  CHECK(paper.train.episodes == 200);
  CHECK(paper.train.max_agent_steps == 2500);
  CHECK(paper.train.batch_size == 200);
  CHECK(paper.train.buffer_capacity == 4500);
  CHECK(paper.train.gamma == 0.5);
  CHECK(paper.scenario.vehicles == 4000);
  CHECK_NOTHROW(paper.validate());
}

TEST_CASE("config parsing") {
  const auto c = parse_config("# comment\nepisodes = 7\n gamma=0.9  # trailing\nvalue_baseline = true\n\nseed = 12\n",
                              desk_profile());
  CHECK(c.train.episodes == 7);
  CHECK(c.train.gamma == 0.9);
  CHECK(c.train.value_baseline);
  CHECK(c.train.seed == 12);
  CHECK(c.scenario.vehicles == 1000);

  CHECK(config_error_key("gamma = 1.5") == "gamma");
  CHECK(config_error_key("gamma = abc") == "gamma");
  CHECK(config_error_key("colour = red") == "colour");
  CHECK(config_error_key("vehicles = -3") == "vehicles");
  CHECK(config_error_key("batch_size = 9000") == "batch_size");
  CHECK(config_error_key("value_baseline = maybe") == "value_baseline");
  CHECK(config_error_key("congestion_threshold = 0") == "congestion_threshold");

  const auto round = parse_config(format_config(c), desk_profile());
  CHECK(format_config(round) == format_config(c));

  const auto rel = parse_config("network = nets/x.net", desk_profile(), "/cfg");
  CHECK(rel.scenario.network == fs::path("/cfg/nets/x.net"));
}

TEST_CASE("load_config") {
  const auto dir = fresh_dir("cfg");
  fs::create_directories(dir);
  std::ofstream(dir / "a.cfg") << "episodes = 3\nnetwork = road.net\n";
  const auto c = load_config(dir / "a.cfg", desk_profile());
  CHECK(c.train.episodes == 3);
  CHECK(c.scenario.network == dir / "road.net");
  CHECK_THROWS_AS(load_config(dir / "missing.cfg", desk_profile()), ConfigError);
  fs::remove_all(dir);
}

TEST_CASE("modes and axes") {
  for (auto m : {Mode::fixed, Mode::rl, Mode::rl_reroute}) CHECK(parse_mode(mode_name(m)) == m);
  CHECK(mode_name(Mode::rl_reroute) == "rl-reroute");
  CHECK_THROWS_AS(parse_mode("greedy"), ConfigError);
  for (auto a : {Axis::gamma, Axis::width, Axis::depth}) CHECK(parse_axis(axis_name(a)) == a);
  CHECK(axis_values(Axis::gamma) == std::vector<double>{0.3, 0.5, 0.7, 0.9});
  CHECK(axis_values(Axis::width) == std::vector<double>{200, 400, 600});
  CHECK(axis_values(Axis::depth) == std::vector<double>{3, 5, 8});
  RunConfig c;
  apply_axis(c, Axis::depth, 5);
  CHECK(c.train.hidden_count == 5);
}

TEST_CASE("metrics round trip") {
  std::vector<EpisodeMetrics> ms{metric(0, 812, 10234.5, -120.25), metric(1, 790.0, 9876.125, -0.1)};
  ms[1].average_queue = 3.3333333333333335;
  const auto back = parse_metrics(format_metrics(ms));
  REQUIRE(back.size() == 2);
  CHECK(back[1].average_queue == ms[1].average_queue);
  CHECK(back[0].cumulative_negative_reward == -120.25);
  CHECK(format_metrics(back) == format_metrics(ms));
  CHECK_THROWS(parse_metrics("episode,x\n1,2\n"));
}

TEST_CASE("final and initial averages") {
  std::vector<EpisodeMetrics> ms;
  for (int i = 0; i < 8; ++i) ms.push_back(metric(i, 100.0 * i, 0.0));
  CHECK(final_averages(ms).sim_time == 650.0);
  CHECK(initial_averages(ms).sim_time == 50.0);
  std::vector<EpisodeMetrics> one{metric(0, 5, 0)};
  CHECK(final_averages(one).sim_time == 5.0);
  CHECK(final_averages({}).sim_time == 0.0);
}

TEST_CASE("summaries") {
  CHECK(percent_reduction(1000.0, 800.0) == doctest::Approx(20.0));
  CHECK(percent_reduction(1000.0, 660.0) == doctest::Approx(34.0));
  CHECK(percent_reduction(1000.0, 1000.0) == 0.0);
  CHECK(percent_reduction(0.0, 5.0) == 0.0);

  const std::vector<std::vector<EpisodeMetrics>> fixed{{metric(0, 1000, 500)}, {metric(0, 1000, 500)}};
  const std::vector<std::vector<EpisodeMetrics>> rl{{metric(0, 700, 400)}, {metric(0, 900, 400)}};
  const std::vector<std::vector<EpisodeMetrics>> rr{{metric(0, 660, 250)}, {metric(0, 660, 250)}};
  const auto imp = summarize(fixed, rl, rr);
  CHECK(imp.rl.sim_time == 800.0);
  CHECK(imp.rl_time_reduction == doctest::Approx(20.0));
  CHECK(imp.reroute_time_reduction == doctest::Approx(34.0));
  CHECK(imp.rl_delay_reduction == doctest::Approx(20.0));
  CHECK(imp.reroute_delay_reduction == doctest::Approx(50.0));
  CHECK(format_report(imp).find("20.00%") != std::string::npos);
}

TEST_CASE("fixed-time control") {
  SUBCASE("no vehicles") {
    auto c = tiny();
    c.scenario.vehicles = 0;
    c.train.episodes = 1;
    const auto ms = run_fixed_time(c);
    REQUIRE(ms.size() == 1);
    CHECK(ms[0].sim_time == 0.0);
    CHECK(ms[0].cumulative_delay == 0.0);
  }
  SUBCASE("cycles phases in order and clears the demand") {
    auto c = tiny();
    const Scenario sc(c);
    auto s = sc.make(0);
    std::vector<int> served;
    const auto m = run_fixed_episode(sc, 0, *s);
    CHECK(s->all_arrived());
    CHECK(m.arrived == 60);
    CHECK(m.agent_steps >= 1);
    CHECK(m.cumulative_negative_reward <= 0.0);
  }
}

TEST_CASE("scenario demand") {
  const Scenario sc(tiny());
  CHECK(sc.schedule(0) == sc.schedule(0));
  CHECK_FALSE(sc.schedule(0) == sc.schedule(1));
  CHECK(sc.schedule(0).size() == 60);
  // demand does not depend on the mode or on which episodes ran before
  auto other = tiny();
  other.train.hidden_width = 32;
  CHECK(Scenario(other).schedule(2) == sc.schedule(2));
  CHECK(sc.sim_config(false).min_green == 4);
}

TEST_CASE("run_phase artifacts") {
  const auto dir = fresh_dir("phase");
  const auto c = tiny();
  const auto r = run_phase(Mode::rl_reroute, c, dir / "a");
  CHECK(r.metrics.size() == 4);
  for (const char* f : {"metrics.csv", "arrivals.csv", "road.net", "detectors.csv", "summary.txt", "policy.nn",
                        "reroutes.csv"})
    CHECK(fs::exists(dir / "a" / f));
  CHECK(read_metrics(dir / "a" / "metrics.csv").size() == 4);
  CHECK(nn::load_network(dir / "a" / "policy.nn", {80, 16, 4}).sizes() == std::vector<int>{80, 16, 4});
  CHECK(slurp(dir / "a" / "reroutes.csv").rfind(std::string(reroute::kLogHeader), 0) == 0);
  CHECK(slurp(dir / "a" / "summary.txt").rfind("mode = rl-reroute\n", 0) == 0);
  CHECK(roadnet::load_network(dir / "a" / "road.net") == roadnet::build_default_network());
  const auto det = csv::read(dir / "a" / "detectors.csv");
  CHECK(det.rows.size() == 4 * static_cast<std::size_t>(r.metrics.back().sim_time / 30));

  run_phase(Mode::rl_reroute, c, dir / "b");
  for (const char* f : {"metrics.csv", "arrivals.csv", "detectors.csv", "summary.txt", "policy.nn", "reroutes.csv"})
    CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));

  const auto fixed = run_phase(Mode::fixed, c, dir / "f");
  CHECK_FALSE(fs::exists(dir / "f" / "policy.nn"));
  const auto imp = summarize_dirs({dir / "f", dir / "a"});
  CHECK(imp.fixed.sim_time == final_averages(fixed.metrics).sim_time);
  CHECK(imp.rl_reroute.sim_time == final_averages(r.metrics).sim_time);
  CHECK_THROWS(summarize_dirs({dir / "a"}));
  fs::remove_all(dir);
}

TEST_CASE("seed isolation across run order") {
  const auto dir = fresh_dir("order");
  auto c = tiny();
  c.train.episodes = 2;
  auto c2 = c;
  c2.train.seed = 2;
  run_phase(Mode::rl, c, dir / "x1");
  run_phase(Mode::rl, c2, dir / "x2");
  run_phase(Mode::rl, c2, dir / "y2");
  run_phase(Mode::rl, c, dir / "y1");
  CHECK(slurp(dir / "x1" / "metrics.csv") == slurp(dir / "y1" / "metrics.csv"));
  CHECK(slurp(dir / "x2" / "metrics.csv") == slurp(dir / "y2" / "metrics.csv"));
  CHECK(slurp(dir / "x1" / "policy.nn") != slurp(dir / "x2" / "policy.nn"));
  fs::remove_all(dir);
}

TEST_CASE("small sweep") {
  const auto dir = fresh_dir("sweep");
  auto c = tiny();
  c.train.episodes = 2;
  const auto res = run_sweep(Axis::gamma, c, {1, 2}, dir, Mode::rl, 2, {0.3, 0.5});
  CHECK(res.rows.size() == 4);
  REQUIRE(res.ranking.size() == 2);
  CHECK(res.ranking[0].second >= res.ranking[1].second);
  CHECK(fs::exists(dir / "gamma-0.3" / "seed-1" / "metrics.csv"));
  CHECK(fs::exists(dir / "gamma-0.5" / "seed-2" / "policy.nn"));
  const auto rank = csv::read(dir / "ranking.csv");
  CHECK(rank.rows.size() == 2);
  CHECK(csv::read(dir / "comparison.csv").rows.size() == 4);
  CHECK(slurp(dir / "summary.txt").find("reference_best = 0.5") != std::string::npos);
  CHECK_THROWS_AS(run_sweep(Axis::gamma, c, {1}, dir, Mode::rl, 1, {0.4}), ConfigError);
  CHECK_THROWS_AS(run_sweep(Axis::gamma, c, {}, dir), ConfigError);
  CHECK_THROWS_AS(run_sweep(Axis::gamma, c, {1}, dir, Mode::fixed), ConfigError);
  fs::remove_all(dir);
}

TEST_CASE("atomic writes leave no temporaries") {
  const auto dir = fresh_dir("atomic");
  fs::create_directories(dir);
  csv::write_atomic(dir / "x.csv", "a\n1\n");
  csv::write_atomic(dir / "x.csv", "a\n2\n");
  CHECK(slurp(dir / "x.csv") == "a\n2\n");
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir)) ++files;
  CHECK(files == 1);
  fs::remove_all(dir);
}

}  // TEST_SUITE
