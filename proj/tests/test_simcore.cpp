#include <doctest.h>

#include <filesystem>
#include <map>

#include "flow/random.hpp"
#include "flow/simcore.hpp"

using namespace flow;
using namespace flow::sim;
using roadnet::Route;

namespace {

std::shared_ptr<const roadnet::RoadNetwork> default_net() {
  static const auto net = std::make_shared<const roadnet::RoadNetwork>(roadnet::build_default_network());
  return net;
}

Route route_of(const roadnet::RoadNetwork& net, std::initializer_list<const char*> edges) {
  Route r;
  for (const char* e : edges) r.edges.push_back(net.edge_index(e));
  r.origin = net.edge(r.edges.front()).from;
  r.destination = net.edge(r.edges.back()).to;
  return r;
}

// A vehicle that departs long after the scripted part of a test, so the
// simulation is not finished while the test runs.
std::vector<Departure> idle_schedule(const roadnet::RoadNetwork& net) {
  return {Departure{5000, VehicleType::car, net.node("N"), net.node("S")}};
}

}  // namespace

TEST_SUITE("simcore") {

TEST_CASE("turn classification") {
  CHECK(turn_between(Arm::west, Arm::east) == Movement::straight);
  CHECK(turn_between(Arm::west, Arm::north) == Movement::left);
  CHECK(turn_between(Arm::west, Arm::south) == Movement::right);
  CHECK(turn_between(Arm::north, Arm::south) == Movement::straight);
  CHECK(turn_between(Arm::north, Arm::east) == Movement::left);
  CHECK(turn_between(Arm::north, Arm::west) == Movement::right);
}

TEST_CASE("spawn_schedule") {
  const auto net = default_net();
  const auto layout = IntersectionLayout::resolve(*net);
  const auto weights = roadnet::EdgeWeights::free_flow(*net);

  SUBCASE("4000 vehicles, 2400 through the junction") {
    const auto s = spawn_schedule(4000, 11, 1200, *net, layout);
    REQUIRE(s.size() == 4000);
    int crossing = 0;
    std::map<VehicleType, int> types;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const auto r = roadnet::shortest_route(*net, s[i].origin, s[i].destination, weights);
      crossing += roadnet::crosses_signal(*net, r);
      ++types[s[i].type];
      CHECK(s[i].depart >= 0);
      CHECK(s[i].depart < 1200);
      if (i > 0) CHECK(s[i - 1].depart <= s[i].depart);
    }
    CHECK(crossing == 2400);
    CHECK(types[VehicleType::car] == 3600);
    CHECK(types[VehicleType::bus] == 200);
    CHECK(types[VehicleType::trailer] == 160);
    CHECK(types[VehicleType::ambulance] == 40);
    CHECK(s.front().depart == 0);
    CHECK(s.back().depart == 1199);
  }
  SUBCASE("empty and deterministic") {
    CHECK(spawn_schedule(0, 1, 10, *net, layout).empty());
    CHECK(spawn_schedule(300, 5, 100, *net, layout) == spawn_schedule(300, 5, 100, *net, layout));
    CHECK(spawn_schedule(300, 5, 100, *net, layout) != spawn_schedule(300, 6, 100, *net, layout));
  }
  SUBCASE("departures bunch in the middle of the horizon") {
    // Weibull(2) rescaled: the density peaks inside the horizon, not at its ends.
    const auto s = spawn_schedule(4000, 3, 1000, *net, layout);
    int first = 0, middle = 0;
    for (const auto& d : s) {
      first += d.depart < 100;
      middle += d.depart >= 300 && d.depart < 400;
    }
    CHECK(middle > 2 * first);
  }
  SUBCASE("schedule file round trip") {
    const auto s = spawn_schedule(50, 9, 60, *net, layout);
    const auto path = std::filesystem::temp_directory_path() / "flow_schedule_test.csv";
    write_schedule(path, *net, s);
    CHECK(read_schedule(path, *net) == s);
    std::filesystem::remove(path);
  }
}

TEST_CASE("free acceleration from rest") {
  const auto net = default_net();
  Simulation sim(net, idle_schedule(*net));
  const auto id = sim.place_vehicle(VehicleType::car, route_of(*net, {"N_app", "S_dep", "S_out"}), 0, 1, 0.0, 0.0);
  sim.step();
  CHECK(sim.vehicle(id).speed == doctest::Approx(2.6));
  CHECK(sim.vehicle(id).position == doctest::Approx(2.6));
  sim.step();
  CHECK(sim.vehicle(id).speed == doctest::Approx(5.2));
  CHECK(sim.vehicle(id).position == doctest::Approx(7.8));
}

TEST_CASE("vehicle type speed caps") {
  const auto net = default_net();
  Simulation sim(net, idle_schedule(*net));
  const auto r = route_of(*net, {"N_app", "S_dep", "S_out"});
  const auto trailer = sim.place_vehicle(VehicleType::trailer, r, 0, 1, 100.0, 10.0);
  const auto car = sim.place_vehicle(VehicleType::car, r, 0, 2, 100.0, 13.0);
  sim.step();
  CHECK(sim.vehicle(trailer).speed == doctest::Approx(10.0));
  CHECK(sim.vehicle(car).speed == doctest::Approx(13.89));  // edge limit is below the car's own cap
}

TEST_CASE("halted at red") {
  const auto net = default_net();
  Simulation sim(net, idle_schedule(*net));
  // phase 0 serves N/S; west is red
  const auto id = sim.place_vehicle(VehicleType::car, route_of(*net, {"W_app", "E_dep", "E_out"}), 0, 1, 999.0, 0.0);
  sim.step();
  CHECK(sim.vehicle(id).speed == 0.0);
  CHECK(sim.vehicle(id).position == 999.0);
  CHECK(sim.vehicle(id).accumulated_wait == 1.0);
  CHECK(sim.queue_length(Arm::west) == 1);
}

TEST_CASE("approach to a red light stops before the line") {
  const auto net = default_net();
  Simulation sim(net, idle_schedule(*net));
  const auto id = sim.place_vehicle(VehicleType::car, route_of(*net, {"W_app", "E_dep", "E_out"}), 0, 1, 700.0, 13.89);
  double last_speed = 13.89;
  for (int t = 0; t < 60; ++t) {
    sim.step();
    const auto& v = sim.vehicle(id);
    REQUIRE(v.edge() == net->edge_index("W_app"));
    CHECK(v.position <= 1000.0 - 1.0 + 1e-9);
    CHECK(v.speed <= last_speed + 2.6 + 1e-9);
    last_speed = v.speed;
  }
  CHECK(sim.vehicle(id).speed == 0.0);
  CHECK(sim.vehicle(id).position == doctest::Approx(999.0));
}

TEST_CASE("follower never overlaps a stopped leader") {
  const auto net = default_net();
  Simulation sim(net, idle_schedule(*net));
  const auto r = route_of(*net, {"W_app", "E_dep", "E_out"});
  const auto leader = sim.place_vehicle(VehicleType::bus, r, 0, 1, 999.0, 0.0);
  const auto follower = sim.place_vehicle(VehicleType::car, r, 0, 1, 800.0, 13.89);
  for (int t = 0; t < 100; ++t) {
    sim.step();
    sim.check_invariants();
    const auto& l = sim.vehicle(leader);
    const auto& f = sim.vehicle(follower);
    CHECK(l.position - l.length() - f.position >= 2.5 - 1e-9);
  }
  CHECK(sim.vehicle(follower).speed == 0.0);
}

TEST_CASE("signal controller") {
  SUBCASE("re-selecting the current phase inserts no yellow") {
    SignalController s;
    CHECK_FALSE(s.request(0));
    s.tick();
    CHECK(s.state() == LightState::green);
    CHECK(s.current_phase() == 0);
  }
  SUBCASE("a change shows exactly two yellow steps") {
    SignalController s;
    CHECK(s.request(2));
    int yellow = 0;
    while (s.state() == LightState::yellow) {
      ++yellow;
      s.tick();
    }
    CHECK(yellow == 2);
    CHECK(s.current_phase() == 2);
  }
  SUBCASE("two consecutive changes take at least 2+4+2 steps") {
    SignalController s;
    s.request(1);
    int steps = 0;
    while (true) {
      try {
        if (s.current_phase() == 1 && s.request(3)) break;
      } catch (const InterlockError&) {
      }
      s.tick();
      ++steps;
    }
    while (s.state() == LightState::yellow) {
      s.tick();
      ++steps;
    }
    CHECK(steps >= 8);
  }
  SUBCASE("interlock") {
    SignalController s;
    s.request(1);
    CHECK_THROWS_AS(s.request(2), InterlockError);
    s.tick();
    s.tick();
    CHECK(s.state() == LightState::green);
    CHECK_THROWS_AS(s.request(2), InterlockError);  // minimum green
    for (int i = 0; i < 4; ++i) s.tick();
    CHECK(s.request(2));
    CHECK_THROWS(s.request(4));
  }
  SUBCASE("phase plan") {
    CHECK(SignalController::phase_serves(0, Arm::north, Movement::straight));
    CHECK(SignalController::phase_serves(0, Arm::south, Movement::right));
    CHECK_FALSE(SignalController::phase_serves(0, Arm::north, Movement::left));
    CHECK(SignalController::phase_serves(1, Arm::south, Movement::left));
    CHECK(SignalController::phase_serves(2, Arm::west, Movement::straight));
    CHECK(SignalController::phase_serves(3, Arm::east, Movement::left));
    CHECK_FALSE(SignalController::phase_serves(2, Arm::north, Movement::straight));
  }
}

TEST_CASE("at most one phase is green at any step") {
  const auto net = default_net();
  const auto layout = IntersectionLayout::resolve(*net);
  Simulation sim(net, spawn_schedule(200, 4, 100, *net, layout));
  Rng rng(4);
  while (!sim.finished()) {
    if (sim.signal().state() == LightState::green && sim.signal().time_in_state() >= 4)
      sim.set_phase(static_cast<int>(uniform_below(rng, 4)));
    int green_phases = 0;
    for (int p = 0; p < 4; ++p) {
      bool any = false;
      for (Arm a : kArms)
        for (Movement m : {Movement::straight, Movement::left, Movement::right})
          any = any || (SignalController::phase_serves(p, a, m) && sim.signal().permits(a, m));
      green_phases += any;
    }
    CHECK(green_phases <= 1);
    sim.step();
  }
}

TEST_CASE("sensors") {
  const auto net = default_net();
  SUBCASE("published cell table") {
    const auto& cells = sensor_cells();
    CHECK(cells.size() == 80);
    for (std::size_t i = 0; i < 80; ++i) {
      CHECK(index(cells[i].arm) == static_cast<int>(i / 20));
      CHECK(static_cast<int>(cells[i].group) == static_cast<int>((i / 10) % 2));
      CHECK(cells[i].near < cells[i].far);
      if (i % 10) CHECK(cells[i].near == cells[i - 1].far);
      if (i % 10 > 0) CHECK(cells[i].far - cells[i].near >= cells[i - 1].far - cells[i - 1].near);
    }
    CHECK(cells[0].near == 0.0);
    CHECK(cells[9].far == 1000.0);
  }
  SUBCASE("empty network") {
    Simulation sim(net, idle_schedule(*net));
    const auto s = sim.read_sensors();
    CHECK(s.size() == 80);
    CHECK(std::none_of(s.begin(), s.end(), [](bool b) { return b; }));
  }
  SUBCASE("one vehicle 10 m before the west stop line") {
    Simulation sim(net, idle_schedule(*net));
    sim.place_vehicle(VehicleType::car, route_of(*net, {"W_app", "E_dep", "E_out"}), 0, 1, 990.0, 0.0);
    const auto s = sim.read_sensors();
    const auto expected = *sensor_index(Arm::west, LaneGroup::through, 10.0);
    CHECK(expected == 3 * 20 + 10 + 1);
    for (std::size_t i = 0; i < 80; ++i) CHECK(s[i] == (i == expected));
    sim.check_invariants();
  }
  SUBCASE("left lane maps to the left group") {
    Simulation sim(net, idle_schedule(*net));
    sim.place_vehicle(VehicleType::car, route_of(*net, {"N_app", "E_dep", "E_out"}), 0, 0, 1000.0 - 500.0, 0.0);
    const auto s = sim.read_sensors();
    CHECK(s[*sensor_index(Arm::north, LaneGroup::left, 500.0)]);
    CHECK(*sensor_index(Arm::north, LaneGroup::left, 500.0) == 9);
    CHECK(std::count(s.begin(), s.end(), true) == 1);
  }
  SUBCASE("cell boundaries") {
    CHECK(*sensor_index(Arm::north, LaneGroup::left, 0.0) == 0);
    CHECK(*sensor_index(Arm::north, LaneGroup::left, 7.0) == 1);
    CHECK(*sensor_index(Arm::north, LaneGroup::left, 1000.0) == 9);
    CHECK_FALSE(sensor_index(Arm::north, LaneGroup::left, 1000.5).has_value());
  }
}

TEST_CASE("detectors") {
  const auto net = default_net();
  std::vector<Departure> schedule = idle_schedule(*net);
  for (int t = 0; t < 10; t += 2) schedule.push_back(Departure{t, VehicleType::car, net->node("W"), net->node("E")});
  Simulation sim(net, schedule);
  for (int t = 0; t < 29; ++t) sim.step();
  CHECK(sim.clock() == 29);
  CHECK(sim.read_detectors().empty());
  sim.step();
  const auto r = sim.read_detectors();
  REQUIRE(r.size() == 4);
  for (const auto& d : r) {
    CHECK(d.window_start == 0);
    if (d.arm == Arm::west) {
      CHECK(d.vehicle_count == 5);
      CHECK(d.density > 0.0);
      CHECK(d.mean_speed >= 0.0);
    } else {
      CHECK(d.vehicle_count == 0);
      CHECK(d.density == 0.0);
    }
  }
  int on_west = 0;
  for (const auto& v : sim.vehicles()) on_west += v.status == VehicleStatus::active && v.edge() == net->edge_index("W_app");
  CHECK(on_west == 5);
  sim.step();
  CHECK(sim.read_detectors().empty());
}

TEST_CASE("no vehicles passed: four zero readings") {
  const auto net = default_net();
  Simulation sim(net, idle_schedule(*net));
  for (int t = 0; t < 30; ++t) sim.step();
  const auto r = sim.read_detectors();
  REQUIRE(r.size() == 4);
  for (const auto& d : r) CHECK(d.vehicle_count == 0);
}

TEST_CASE("queue length and cumulative wait") {
  const auto net = default_net();
  const auto r = route_of(*net, {"W_app", "E_dep", "E_out"});
  SUBCASE("three halted at red") {
    Simulation sim(net, idle_schedule(*net));
    for (int i = 0; i < 3; ++i) sim.place_vehicle(VehicleType::car, r, 0, 1, 999.0 - 7.5 * i, 0.0);
    CHECK(sim.queue_length(Arm::west) == 3);  // speed 0 already counts as halted
    sim.step();
    CHECK(sim.queue_length(Arm::west) == 3);
    CHECK(sim.total_queue() == 3);
  }
  SUBCASE("moving platoon") {
    Simulation sim(net, idle_schedule(*net));
    const auto g = route_of(*net, {"N_app", "S_dep", "S_out"});
    for (int i = 0; i < 3; ++i) sim.place_vehicle(VehicleType::car, g, 0, 1, 500.0 - 30.0 * i, 13.89);
    sim.step();
    CHECK(sim.queue_length(Arm::north) == 0);
    CHECK(sim.cumulative_wait() == 0.0);
  }
  SUBCASE("halted seven steps") {
    Simulation sim(net, idle_schedule(*net));
    sim.place_vehicle(VehicleType::car, r, 0, 1, 999.0, 0.0);
    for (int t = 0; t < 7; ++t) sim.step();
    CHECK(sim.cumulative_wait() == 7.0);
    CHECK(sim.arm_wait(Arm::west) == 7.0);
  }
  SUBCASE("wait drops out once the vehicle leaves the approach") {
    Simulation sim(net, idle_schedule(*net));
    const auto id = sim.place_vehicle(VehicleType::car, r, 0, 1, 999.0, 0.0);
    for (int t = 0; t < 5; ++t) sim.step();
    CHECK(sim.cumulative_wait() == 5.0);
    sim.set_phase(2);
    while (sim.vehicle(id).edge() == net->edge_index("W_app")) sim.step();
    CHECK(sim.vehicle(id).accumulated_wait >= 5.0);
    CHECK(sim.cumulative_wait() == 0.0);
  }
}

TEST_CASE("yellow: a vehicle that cannot stop comfortably proceeds") {
  const auto net = default_net();
  Simulation sim(net, idle_schedule(*net));
  const auto r = route_of(*net, {"N_app", "S_dep", "S_out"});
  const auto close = sim.place_vehicle(VehicleType::car, r, 0, 1, 995.0, 13.89);
  const auto far = sim.place_vehicle(VehicleType::car, r, 0, 2, 900.0, 13.89);
  sim.set_phase(2);
  sim.step();
  CHECK(sim.vehicle(close).edge() == net->edge_index("S_dep"));
  sim.step();
  sim.step();
  CHECK(sim.signal().current_phase() == 2);
  for (int t = 0; t < 30; ++t) sim.step();
  CHECK(sim.vehicle(far).edge() == net->edge_index("N_app"));
  CHECK(sim.vehicle(far).speed == 0.0);
}

TEST_CASE("lane choice by movement") {
  const auto net = default_net();
  Simulation sim(net, idle_schedule(*net));
  const auto left = sim.place_vehicle(VehicleType::car, route_of(*net, {"W_app", "N_dep", "N_out"}), 0, 0, 10.0, 0.0);
  const auto right = sim.place_vehicle(VehicleType::car, route_of(*net, {"W_app", "S_dep", "S_out"}), 0, 3, 10.0, 0.0);
  const auto straight = sim.place_vehicle(VehicleType::car, route_of(*net, {"W_app", "E_dep", "E_out"}), 0, 1, 10.0, 0.0);
  CHECK(sim.lane_for(sim.vehicle(left), 0) == 0);
  CHECK(sim.lane_for(sim.vehicle(right), 0) == 3);
  const int s = sim.lane_for(sim.vehicle(straight), 0);
  CHECK((s == 1 || s == 2));
  CHECK(sim.lane_for(sim.vehicle(straight), 1) != 0);
}

TEST_CASE("random episodes keep every invariant") {
  const auto net = default_net();
  const auto layout = IntersectionLayout::resolve(*net);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Simulation sim(net, spawn_schedule(400, seed, 200, *net, layout));
    Rng rng(seed);
    std::vector<double> waits(sim.spawned_count(), 0.0);
    while (!sim.finished()) {
      if (sim.signal().state() == LightState::green && sim.signal().time_in_state() >= 4 && uniform01(rng) < 0.2)
        sim.set_phase(static_cast<int>(uniform_below(rng, 4)));
      const int before = sim.clock();
      sim.step();
      CHECK(sim.clock() == before + 1);
      REQUIRE_NOTHROW(sim.check_invariants());
      for (const auto& v : sim.vehicles()) {
        CHECK(v.accumulated_wait >= waits[v.id]);
        waits[v.id] = v.accumulated_wait;
      }
      CHECK(sim.pending_count() + sim.active_count() + sim.arrived_count() == sim.spawned_count());
    }
    CHECK(sim.all_arrived());
  }
}

TEST_CASE("identical inputs give identical trajectories") {
  const auto net = default_net();
  const auto layout = IntersectionLayout::resolve(*net);
  const auto schedule = spawn_schedule(300, 21, 150, *net, layout);
  Simulation a(net, schedule), b(net, schedule);
  Rng ra(3), rb(3);
  while (!a.finished()) {
    if (a.signal().state() == LightState::green && a.signal().time_in_state() >= 4) {
      a.set_phase(static_cast<int>(uniform_below(ra, 4)));
      b.set_phase(static_cast<int>(uniform_below(rb, 4)));
    }
    a.step();
    b.step();
    REQUIRE(a.vehicles().size() == b.vehicles().size());
    for (std::size_t i = 0; i < a.vehicles().size(); ++i) {
      const auto &x = a.vehicles()[i], &y = b.vehicles()[i];
      REQUIRE(x.position == y.position);
      REQUIRE(x.speed == y.speed);
      REQUIRE(x.lane == y.lane);
      REQUIRE(x.route_edge_index == y.route_edge_index);
    }
  }
  CHECK(b.finished());
  CHECK(a.totals().cumulative_delay == b.totals().cumulative_delay);
}

TEST_CASE("zero vehicles: finished at time zero") {
  const auto net = default_net();
  Simulation sim(net, {});
  CHECK(sim.finished());
  CHECK(sim.clock() == 0);
  CHECK_THROWS_AS(sim.step(), SimError);
}

TEST_CASE("the simulation clock is capped") {
  const auto net = default_net();
  SimConfig cfg;
  cfg.max_sim_time = 50;
  Simulation sim(net, idle_schedule(*net), cfg);
  while (!sim.finished()) sim.step();
  CHECK(sim.clock() == 50);
}

TEST_CASE("layout rejects foreign networks") {
  const auto net = std::make_shared<const roadnet::RoadNetwork>(
      roadnet::build_network("node A\nnode B\nedge e A B 10 1 1 0\n"));
  CHECK_THROWS_AS(Simulation(net, {}), SimError);
}

}  // TEST_SUITE
