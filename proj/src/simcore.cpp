#include "flow/simcore.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "flow/csv.hpp"
#include "flow/random.hpp"

namespace flow::sim {

using roadnet::Route;
using roadnet::RoadNetwork;

// ---------------------------------------------------------------------------
// Names and tables

std::string_view arm_name(Arm a) {
  static constexpr std::array<std::string_view, 4> names{"N", "E", "S", "W"};
  return names[index(a)];
}

Arm parse_arm(std::string_view name) {
  for (Arm a : kArms)
    if (arm_name(a) == name) return a;
  throw SimError("unknown arm '" + std::string(name) + "'");
}

Movement turn_between(Arm from, Arm to) {
  switch ((index(to) - index(from) + 4) % 4) {
    case 2: return Movement::straight;
    case 3: return Movement::right;
    default: return Movement::left;  // 1, or a U-turn
  }
}

std::string_view vehicle_type_name(VehicleType t) {
  static constexpr std::array<std::string_view, 4> names{"car", "bus", "trailer", "ambulance"};
  return names[static_cast<int>(t)];
}

VehicleType parse_vehicle_type(std::string_view name) {
  for (int i = 0; i < 4; ++i) {
    auto t = static_cast<VehicleType>(i);
    if (vehicle_type_name(t) == name) return t;
  }
  throw SimError("unknown vehicle type '" + std::string(name) + "'");
}

const VehicleTypeSpec& type_spec(VehicleType t) {
  static const std::array<VehicleTypeSpec, 4> specs{{
      {5.0, 13.9},   // car
      {12.0, 11.1},  // bus
      {16.5, 10.0},  // trailer
      {6.0, 13.9},   // ambulance
  }};
  return specs[static_cast<int>(t)];
}

// ---------------------------------------------------------------------------
// Layout

IntersectionLayout IntersectionLayout::resolve(const RoadNetwork& net) {
  IntersectionLayout l;
  try {
    l.junction_ = net.node("C");
    for (Arm a : kArms) {
      const std::string t(arm_name(a));
      ArmLayout& arm = l.arms_[index(a)];
      arm.terminal = net.node(t);
      arm.arm_node = net.node(t + "A");
      arm.entry = net.edge_index(t + "_in");
      arm.approach = net.edge_index(t + "_app");
      arm.departure = net.edge_index(t + "_dep");
      arm.exit = net.edge_index(t + "_out");
      auto expect = [&](EdgeIndex e, NodeIndex from, NodeIndex to) {
        if (net.edge(e).from != from || net.edge(e).to != to)
          throw SimError("edge '" + net.edge(e).id + "' does not connect the expected nodes");
      };
      expect(arm.entry, arm.terminal, arm.arm_node);
      expect(arm.approach, arm.arm_node, l.junction_);
      expect(arm.departure, l.junction_, arm.arm_node);
      expect(arm.exit, arm.arm_node, arm.terminal);
      if (!net.edge(arm.approach).signalized)
        throw SimError("approach edge '" + net.edge(arm.approach).id + "' must be signalized");
    }
  } catch (const roadnet::NetworkError& e) {
    throw SimError(std::string("network is not a four-arm junction: ") + e.what());
  }
  return l;
}

std::optional<Arm> IntersectionLayout::approach_arm(EdgeIndex e) const {
  for (Arm a : kArms)
    if (arms_[index(a)].approach == e) return a;
  return std::nullopt;
}

std::optional<Arm> IntersectionLayout::entry_arm(EdgeIndex e) const {
  for (Arm a : kArms)
    if (arms_[index(a)].entry == e) return a;
  return std::nullopt;
}

std::optional<Arm> IntersectionLayout::departure_arm(EdgeIndex e) const {
  for (Arm a : kArms)
    if (arms_[index(a)].departure == e) return a;
  return std::nullopt;
}

std::optional<Arm> IntersectionLayout::arm_at_node(NodeIndex n) const {
  for (Arm a : kArms)
    if (arms_[index(a)].arm_node == n) return a;
  return std::nullopt;
}

Movement IntersectionLayout::movement(const RoadNetwork& net, EdgeIndex edge, std::optional<EdgeIndex> next) const {
  if (!next) return Movement::straight;
  if (auto a = approach_arm(edge)) {
    if (auto b = departure_arm(*next)) return turn_between(*a, *b);
    return Movement::straight;
  }
  if (auto a = entry_arm(edge)) {
    if (*next == arms_[index(*a)].approach) return Movement::straight;
    if (auto b = arm_at_node(net.edge(*next).to); b && *b != *a) return turn_between(*a, *b);
  }
  return Movement::straight;
}

// ---------------------------------------------------------------------------
// Signal controller

SignalController::SignalController(int yellow_duration, int min_green)
    : yellow_duration_(yellow_duration), min_green_(min_green), time_in_state_(min_green) {
  if (yellow_duration < 1 || min_green < 1) throw SimError("signal durations must be at least 1 s");
}

bool SignalController::request(int phase) {
  if (phase < 0 || phase >= kPhaseCount) throw SimError("phase out of range: " + std::to_string(phase));
  if (state_ == LightState::yellow) throw InterlockError("phase change requested during yellow interlock");
  if (phase == phase_) return false;
  if (time_in_state_ < min_green_) throw InterlockError("phase change requested before minimum green");
  state_ = LightState::yellow;
  pending_ = phase;
  time_in_state_ = 0;
  return true;
}

void SignalController::tick() {
  ++time_in_state_;
  if (state_ == LightState::yellow && time_in_state_ >= yellow_duration_) {
    phase_ = *pending_;
    pending_.reset();
    state_ = LightState::green;
    time_in_state_ = 0;
  }
}

bool SignalController::phase_serves(int phase, Arm arm, Movement m) {
  const bool north_south = arm == Arm::north || arm == Arm::south;
  const bool left = m == Movement::left;
  switch (phase) {
    case 0: return north_south && !left;
    case 1: return north_south && left;
    case 2: return !north_south && !left;
    case 3: return !north_south && left;
    default: return false;
  }
}

bool SignalController::permits(Arm arm, Movement m) const {
  return state_ == LightState::green && phase_serves(phase_, arm, m);
}

bool SignalController::yellow_for(Arm arm, Movement m) const {
  return state_ == LightState::yellow && phase_serves(phase_, arm, m);
}

// ---------------------------------------------------------------------------
// Sensors

namespace {
constexpr std::array<double, kCellsPerGroup + 1> kCellBounds{0, 7, 14, 21, 28, 40, 60, 100, 160, 400, 1000};
}

const std::array<SensorCell, kSensorCount>& sensor_cells() {
  static const auto cells = [] {
    std::array<SensorCell, kSensorCount> out{};
    for (Arm a : kArms)
      for (int g = 0; g < 2; ++g)
        for (std::size_t k = 0; k < kCellsPerGroup; ++k)
          out[index(a) * 20 + g * 10 + k] =
              SensorCell{a, static_cast<LaneGroup>(g), kCellBounds[k], kCellBounds[k + 1]};
    return out;
  }();
  return cells;
}

std::optional<std::size_t> sensor_index(Arm arm, LaneGroup group, double upstream) {
  if (upstream < 0.0 || upstream > kCellBounds.back()) return std::nullopt;
  std::size_t k = 0;
  while (k + 1 < kCellsPerGroup && upstream >= kCellBounds[k + 1]) ++k;
  return static_cast<std::size_t>(index(arm) * 20 + static_cast<int>(group) * 10) + k;
}

// ---------------------------------------------------------------------------
// Demand

std::vector<Departure> spawn_schedule(std::size_t count, std::uint64_t seed, int horizon_steps,
                                      const RoadNetwork& net, const IntersectionLayout& layout,
                                      const DemandMix& mix) {
  if (horizon_steps < 1) throw SimError("horizon must be at least one step");
  std::vector<Departure> out;
  if (count == 0) return out;
  Rng rng(seed);

  // Departure times: Weibull(k=2) by inverse CDF, sorted, min..max mapped
  // linearly onto 0..horizon-1.
  std::vector<double> draws(count);
  for (auto& d : draws) d = std::sqrt(-std::log1p(-uniform01(rng)));
  std::sort(draws.begin(), draws.end());
  const double lo = draws.front(), hi = draws.back();
  std::vector<int> departs(count, 0);
  if (hi > lo) {
    for (std::size_t i = 0; i < count; ++i) {
      const double t = (draws[i] - lo) / (hi - lo) * static_cast<double>(horizon_steps - 1);
      departs[i] = std::clamp(static_cast<int>(std::floor(t)), 0, horizon_steps - 1);
    }
  }

  // O-D classes by whether the free-flow shortest route crosses the signal.
  const auto weights = roadnet::EdgeWeights::free_flow(net);
  std::vector<std::pair<NodeIndex, NodeIndex>> crossing, bypass;
  for (Arm a : kArms)
    for (Arm b : kArms) {
      if (a == b) continue;
      const auto o = layout.arm(a).terminal, d = layout.arm(b).terminal;
      const auto r = roadnet::shortest_route(net, o, d, weights);
      (roadnet::crosses_signal(net, r) ? crossing : bypass).emplace_back(o, d);
    }
  if (crossing.empty() && bypass.empty()) throw SimError("no O-D pairs");

  const auto n_through = static_cast<std::size_t>(std::llround(mix.through_share * static_cast<double>(count)));
  std::vector<std::uint8_t> through(count, 0);
  std::fill_n(through.begin(), std::min(n_through, count), 1);
  shuffle(std::span(through), rng);

  std::vector<VehicleType> types(count, VehicleType::car);
  std::size_t filled = 0;
  for (int t = 3; t >= 1; --t) {
    const auto n = static_cast<std::size_t>(std::llround(mix.type_share[t] * static_cast<double>(count)));
    for (std::size_t i = 0; i < n && filled < count; ++i) types[filled++] = static_cast<VehicleType>(t);
  }
  shuffle(std::span(types), rng);

  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto& pool = (through[i] && !crossing.empty()) || bypass.empty() ? crossing : bypass;
    const auto& od = pool[uniform_below(rng, pool.size())];
    out.push_back(Departure{departs[i], types[i], od.first, od.second});
  }
  return out;
}

void write_schedule(const std::filesystem::path& path, const RoadNetwork& net, const std::vector<Departure>& schedule) {
  std::string out = "depart,vtype,origin,destination\n";
  for (const auto& d : schedule) {
    out += std::to_string(d.depart) + "," + std::string(vehicle_type_name(d.type)) + "," + net.node_id(d.origin) +
           "," + net.node_id(d.destination) + "\n";
  }
  csv::write_atomic(path, out);
}

std::vector<Departure> read_schedule(const std::filesystem::path& path, const RoadNetwork& net) {
  static constexpr std::array<std::string_view, 4> header{"depart", "vtype", "origin", "destination"};
  const auto table = csv::read(path, header);
  std::vector<Departure> out;
  for (const auto& row : table.rows) {
    const auto depart = csv::to_int(row[0]);
    if (depart < 0) throw SimError("negative departure time in " + path.string());
    out.push_back(Departure{static_cast<int>(depart), parse_vehicle_type(row[1]), net.node(row[2]), net.node(row[3])});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Simulation

Simulation::Simulation(std::shared_ptr<const RoadNetwork> net, std::vector<Departure> schedule, SimConfig config)
    : net_(std::move(net)),
      layout_(IntersectionLayout::resolve(*net_)),
      config_(config),
      signal_(config.yellow_duration, config.min_green) {
  std::stable_sort(schedule.begin(), schedule.end(),
                   [](const Departure& a, const Departure& b) { return a.depart < b.depart; });

  lanes_.resize(net_->edge_count());
  lane_offset_.resize(net_->edge_count());
  std::size_t slots = 0;
  for (EdgeIndex e = 0; e < net_->edge_count(); ++e) {
    lanes_[e].resize(net_->edge(e).lane_count);
    lane_offset_[e] = slots;
    slots += net_->edge(e).lane_count;
  }
  lane_state_.assign(slots, 0);

  const auto weights = roadnet::EdgeWeights::free_flow(*net_);
  std::map<std::pair<NodeIndex, NodeIndex>, Route> routes;
  vehicles_.reserve(schedule.size());
  for (const auto& d : schedule) {
    auto key = std::make_pair(d.origin, d.destination);
    auto it = routes.find(key);
    if (it == routes.end()) it = routes.emplace(key, roadnet::shortest_route(*net_, d.origin, d.destination, weights)).first;
    Vehicle v;
    v.id = vehicles_.size();
    v.type = d.type;
    v.route = it->second;
    v.depart_time = d.depart;
    v.origin = d.origin;
    v.destination = d.destination;
    vehicles_.push_back(std::move(v));
  }
}

bool Simulation::finished() const { return all_arrived() || clock_ >= config_.max_sim_time; }

bool Simulation::set_phase(int phase) { return signal_.request(phase); }

int Simulation::lane_for(const Vehicle& v, std::size_t idx) const {
  const auto& edges = v.route.edges;
  const EdgeIndex edge = edges[idx];
  const int lanes = net_->edge(edge).lane_count;
  if (lanes == 1) return 0;
  const std::optional<EdgeIndex> next =
      idx + 1 < edges.size() ? std::optional<EdgeIndex>(edges[idx + 1]) : std::nullopt;
  const int through_lane = lanes >= 3 ? 1 + static_cast<int>(v.id % (lanes - 2)) : static_cast<int>(v.id % lanes);

  auto by_movement = [&](Movement m) {
    switch (m) {
      case Movement::left: return 0;
      case Movement::right: return lanes - 1;
      default: return through_lane;
    }
  };
  if (layout_.approach_arm(edge) || layout_.entry_arm(edge)) return by_movement(layout_.movement(*net_, edge, next));

  if (idx > 0) {
    // Separate feeders onto distinct lanes where streams merge at an arm node.
    const EdgeIndex prev = edges[idx - 1];
    if (auto here = layout_.arm_at_node(net_->edge(edge).from)) {
      if (auto there = layout_.arm_at_node(net_->edge(prev).from); there && *there != *here)
        return turn_between(*here, *there) == Movement::left ? 0 : lanes - 1;
    }
    if (layout_.departure_arm(prev)) return through_lane;
  }
  return static_cast<int>(v.id % lanes);
}

std::vector<VehicleId> Simulation::waiting_for_insertion() const { return waiting_; }

void Simulation::insert_departures() {
  while (next_departure_ < vehicles_.size()) {
    const Vehicle& v = vehicles_[next_departure_];
    if (v.status == VehicleStatus::pending) {
      if (v.depart_time > clock_) break;
      waiting_.push_back(v.id);
    }
    ++next_departure_;
  }
  std::vector<VehicleId> still_waiting;
  for (VehicleId id : waiting_) {
    Vehicle& v = vehicles_[id];
    const int lane = lane_for(v, 0);
    auto& q = lanes_[v.route.edges[0]][lane];
    bool room = true;
    if (!q.empty()) {
      const Vehicle& rear = vehicles_[q.back()];
      room = rear.position - rear.length() >= config_.kinematics.min_gap;
    }
    if (!room) {
      still_waiting.push_back(id);
      continue;
    }
    v.status = VehicleStatus::active;
    v.lane = lane;
    v.position = 0.0;
    v.speed = 0.0;
    v.route_edge_index = 0;
    q.push_back(id);
    ++active_count_;
  }
  waiting_ = std::move(still_waiting);
}

double Simulation::safe_speed(double gap, double speed, double leader_speed) const {
  const auto& k = config_.kinematics;
  gap = std::max(gap, 0.0);
  const double v = leader_speed + (gap - leader_speed * k.reaction) / ((speed + leader_speed) / (2.0 * k.decel) + k.reaction);
  return std::max(v, 0.0);
}

std::optional<Simulation::Ahead> Simulation::first_occupied_ahead(const Vehicle& v) const {
  double dist = net_->edge(v.edge()).length - v.position;
  for (std::size_t j = v.route_edge_index + 1; j < v.route.edges.size(); ++j) {
    const EdgeIndex e = v.route.edges[j];
    const int lane = lane_for(v, j);
    if (!lanes_[e][lane].empty()) return Ahead{LaneRef{e, lane}, dist};
    dist += net_->edge(e).length;
    if (dist > config_.kinematics.lookahead) break;
  }
  return std::nullopt;
}

std::optional<double> Simulation::stop_distance(const Vehicle& v) const {
  const auto& k = config_.kinematics;
  double dist_to_end = net_->edge(v.edge()).length - v.position;
  for (std::size_t j = v.route_edge_index; j < v.route.edges.size(); ++j) {
    const EdgeIndex e = v.route.edges[j];
    if (j > v.route_edge_index) dist_to_end += net_->edge(e).length;
    if (auto arm = layout_.approach_arm(e)) {
      const std::optional<EdgeIndex> next =
          j + 1 < v.route.edges.size() ? std::optional<EdgeIndex>(v.route.edges[j + 1]) : std::nullopt;
      const Movement m = layout_.movement(*net_, e, next);
      if (!signal_.permits(*arm, m)) {
        const double d = dist_to_end - k.stop_margin;
        if (!signal_.yellow_for(*arm, m)) return d;
        // Yellow: stop only when it needs no more than comfortable braking.
        if (safe_speed(d, v.speed, 0.0) >= v.speed - k.decel) return d;
      }
    }
    if (dist_to_end > k.lookahead) break;
  }
  return std::nullopt;
}

void Simulation::plan_lane(EdgeIndex edge, int lane) {
  const auto& q = lanes_[edge][lane];
  const auto& k = config_.kinematics;
  for (std::size_t i = 0; i < q.size(); ++i) {
    const Vehicle& v = vehicles_[q[i]];
    const double vmax = std::min(type_spec(v.type).max_speed, net_->edge(edge).speed_limit);
    double next = std::min(v.speed + k.accel, vmax);
    if (i > 0) {
      const Vehicle& leader = vehicles_[q[i - 1]];
      const double gap = leader.position - leader.length() - v.position - k.min_gap;
      next = std::min(next, safe_speed(gap, v.speed, leader.speed));
    } else if (auto ahead = first_occupied_ahead(v)) {
      const Vehicle& leader = vehicles_[lanes_[ahead->lane.edge][ahead->lane.lane].back()];
      const double gap = ahead->distance + leader.position - leader.length() - k.min_gap;
      next = std::min(next, safe_speed(gap, v.speed, leader.speed));
    }
    if (auto d = stop_distance(v)) next = std::min(next, safe_speed(*d, v.speed, 0.0));
    planned_speed_[v.id] = std::max(next, 0.0);
  }
}

void Simulation::advance(Vehicle& v, double distance) {
  v.speed = distance;
  v.position += distance;
  while (v.position >= net_->edge(v.edge()).length) {
    auto& q = lanes_[v.edge()][v.lane];
    if (q.empty() || q.front() != v.id) throw SimError("lane order corrupted at edge transition");
    if (!v.next_edge()) {
      q.pop_front();
      v.position = net_->edge(v.edge()).length;
      v.status = VehicleStatus::arrived;
      v.arrival_time = clock_ + 1;
      --active_count_;
      ++arrived_count_;
      return;
    }
    v.position -= net_->edge(v.edge()).length;
    q.pop_front();
    ++v.route_edge_index;
    v.lane = lane_for(v, v.route_edge_index);
    lanes_[v.edge()][v.lane].push_back(v.id);
    if (auto arm = layout_.approach_arm(v.edge())) ++det_count_[index(*arm)][v.lane];
  }
}

// Moves every vehicle of one lane, front first. Before the front vehicle
// moves, the lane it is heading into is moved so that the clamp below sees
// the leader's new position. A lane already in progress (a cycle of queues)
// is read as is; positions only increase, so that is conservative.
void Simulation::move_lane(EdgeIndex edge, int lane) {
  const auto slot = lane_slot(edge, lane);
  lane_state_[slot] = 1;
  const auto& k = config_.kinematics;
  const std::vector<VehicleId> snapshot(lanes_[edge][lane].begin(), lanes_[edge][lane].end());

  for (std::size_t i = 0; i < snapshot.size(); ++i) {
    Vehicle& v = vehicles_[snapshot[i]];
    if (planned_speed_[v.id] < 0.0) continue;  // entered this lane after moving elsewhere
    double limit = std::numeric_limits<double>::infinity();
    const Vehicle* same_lane_leader = nullptr;
    if (i > 0) {
      const Vehicle& prev = vehicles_[snapshot[i - 1]];
      if (prev.status == VehicleStatus::active && prev.edge() == edge && prev.lane == lane) same_lane_leader = &prev;
    }
    if (same_lane_leader) {
      limit = same_lane_leader->position - same_lane_leader->length() - k.min_gap - v.position;
    } else {
      std::optional<Ahead> ahead;
      while ((ahead = first_occupied_ahead(v))) {
        const auto s = lane_slot(ahead->lane.edge, ahead->lane.lane);
        if (lane_state_[s] != 0) break;
        move_lane(ahead->lane.edge, ahead->lane.lane);
      }
      if (ahead) {
        const Vehicle& rear = vehicles_[lanes_[ahead->lane.edge][ahead->lane.lane].back()];
        limit = ahead->distance + rear.position - rear.length() - k.min_gap;
      }
    }
    advance(v, std::clamp(planned_speed_[v.id], 0.0, std::max(limit, 0.0)));
    planned_speed_[v.id] = -1.0;
  }
  lane_state_[slot] = 2;
}

void Simulation::finish_step() {
  const auto& k = config_.kinematics;
  int halted_total = 0;
  for (Arm a : kArms) {
    const EdgeIndex app = layout_.arm(a).approach;
    for (const auto& q : lanes_[app]) {
      for (VehicleId id : q) {
        Vehicle& v = vehicles_[id];
        if (v.speed < k.halt_speed) {
          v.accumulated_wait += 1.0;
          ++halted_total;
        }
        det_speed_sum_[index(a)] += v.speed;
        det_speed_samples_[index(a)] += 1.0;
      }
      det_occupancy_[index(a)] += static_cast<double>(q.size());
    }
  }
  totals_.cumulative_delay += halted_total;
  totals_.queue_sum += halted_total;
  ++totals_.steps;

  signal_.tick();
  ++clock_;

  last_readings_.clear();
  if (clock_ % config_.detector_period == 0) {
    for (Arm a : kArms) {
      const int i = index(a);
      DetectorReading r;
      r.arm = a;
      r.window_start = clock_ - config_.detector_period;
      r.vehicle_count = std::accumulate(det_count_[i].begin(), det_count_[i].end(), 0);
      r.mean_speed = det_speed_samples_[i] > 0 ? det_speed_sum_[i] / det_speed_samples_[i] : 0.0;
      r.density = det_occupancy_[i] / config_.detector_period / net_->edge(layout_.arm(a).approach).length;
      last_readings_.push_back(r);
    }
    if (config_.log_detectors) detector_log_.insert(detector_log_.end(), last_readings_.begin(), last_readings_.end());
    det_count_ = {};
    det_speed_sum_ = {};
    det_speed_samples_ = {};
    det_occupancy_ = {};
  }
}

void Simulation::step() {
  if (finished()) throw SimError("step() called on a finished simulation");
  insert_departures();

  planned_speed_.assign(vehicles_.size(), 0.0);
  for (EdgeIndex e = 0; e < lanes_.size(); ++e)
    for (int l = 0; l < static_cast<int>(lanes_[e].size()); ++l) plan_lane(e, l);

  std::fill(lane_state_.begin(), lane_state_.end(), 0);
  for (EdgeIndex e = 0; e < lanes_.size(); ++e)
    for (int l = 0; l < static_cast<int>(lanes_[e].size()); ++l)
      if (lane_state_[lane_slot(e, l)] == 0) move_lane(e, l);

  finish_step();
}

SensorVector Simulation::read_sensors() const {
  SensorVector cells{};
  for (Arm a : kArms) {
    const EdgeIndex app = layout_.arm(a).approach;
    const double len = net_->edge(app).length;
    for (int l = 0; l < static_cast<int>(lanes_[app].size()); ++l) {
      const auto group = l == 0 ? LaneGroup::left : LaneGroup::through;
      for (VehicleId id : lanes_[app][l])
        if (auto cell = sensor_index(a, group, len - vehicles_[id].position)) cells[*cell] = true;
    }
  }
  return cells;
}

std::vector<DetectorReading> Simulation::read_detectors() const { return last_readings_; }

int Simulation::queue_length(Arm arm) const {
  int n = 0;
  for (const auto& q : lanes_[layout_.arm(arm).approach])
    for (VehicleId id : q)
      if (vehicles_[id].speed < config_.kinematics.halt_speed) ++n;
  return n;
}

int Simulation::total_queue() const {
  int n = 0;
  for (Arm a : kArms) n += queue_length(a);
  return n;
}

double Simulation::arm_wait(Arm arm) const {
  double w = 0.0;
  for (const auto& q : lanes_[layout_.arm(arm).approach])
    for (VehicleId id : q) w += vehicles_[id].accumulated_wait;
  return w;
}

double Simulation::cumulative_wait() const {
  double w = 0.0;
  for (Arm a : kArms) w += arm_wait(a);
  return w;
}

void Simulation::reroute(VehicleId id, Route new_route) {
  Vehicle& v = vehicles_.at(id);
  if (v.status == VehicleStatus::arrived) throw SimError("cannot reroute an arrived vehicle");
  if (new_route.empty()) throw SimError("empty route");
  const EdgeIndex current = v.status == VehicleStatus::active ? v.edge() : v.route.edges.front();
  if (new_route.edges.front() != current) throw SimError("new route must start on the vehicle's current edge");
  if (new_route.destination != v.destination) throw SimError("new route must keep the destination");
  new_route.origin = net_->edge(current).from;
  if (!roadnet::is_valid_route(*net_, new_route)) throw SimError("invalid route");
  v.route = std::move(new_route);
  v.route_edge_index = 0;
  v.rerouted = true;
}

VehicleId Simulation::place_vehicle(VehicleType type, Route route, std::size_t edge_index, int lane,
                                    double position, double speed) {
  if (!roadnet::is_valid_route(*net_, route)) throw SimError("invalid route");
  if (edge_index >= route.size()) throw SimError("edge index outside route");
  const EdgeIndex e = route.edges[edge_index];
  if (lane < 0 || lane >= net_->edge(e).lane_count) throw SimError("lane outside edge");
  if (position < 0.0 || position > net_->edge(e).length) throw SimError("position outside edge");
  Vehicle v;
  v.id = vehicles_.size();
  v.type = type;
  v.origin = route.origin;
  v.destination = route.destination;
  v.route = std::move(route);
  v.route_edge_index = edge_index;
  v.lane = lane;
  v.position = position;
  v.speed = speed;
  v.depart_time = clock_;
  v.status = VehicleStatus::active;
  vehicles_.push_back(std::move(v));
  auto& q = lanes_[e][lane];
  auto it = std::find_if(q.begin(), q.end(), [&](VehicleId o) { return vehicles_[o].position < position; });
  q.insert(it, vehicles_.back().id);
  ++active_count_;
  return vehicles_.back().id;
}

void Simulation::check_invariants() const {
  const auto& k = config_.kinematics;
  std::size_t pending = 0, active = 0, arrived = 0;
  for (const auto& v : vehicles_) {
    switch (v.status) {
      case VehicleStatus::pending: ++pending; break;
      case VehicleStatus::active: ++active; break;
      case VehicleStatus::arrived: ++arrived; break;
    }
  }
  if (active != active_count_ || arrived != arrived_count_ || pending + active + arrived != vehicles_.size())
    throw SimError("vehicle conservation violated");

  std::size_t in_lanes = 0;
  for (EdgeIndex e = 0; e < lanes_.size(); ++e) {
    const double len = net_->edge(e).length;
    for (int l = 0; l < static_cast<int>(lanes_[e].size()); ++l) {
      const auto& q = lanes_[e][l];
      in_lanes += q.size();
      for (std::size_t i = 0; i < q.size(); ++i) {
        const Vehicle& v = vehicles_[q[i]];
        if (v.status != VehicleStatus::active || v.edge() != e || v.lane != l)
          throw SimError("vehicle " + std::to_string(v.id) + " filed under the wrong lane");
        if (v.position < 0.0 || v.position > len) throw SimError("vehicle " + std::to_string(v.id) + " off its edge");
        if (v.speed < 0.0 || v.speed > type_spec(v.type).max_speed + 1e-9)
          throw SimError("vehicle " + std::to_string(v.id) + " speed out of range");
        if (i > 0) {
          const Vehicle& leader = vehicles_[q[i - 1]];
          if (!(leader.position > v.position)) throw SimError("overtaking within lane of edge " + net_->edge(e).id);
          if (leader.position - leader.length() - v.position < k.min_gap - 1e-9)
            throw SimError("gap below minimum on edge " + net_->edge(e).id);
        }
      }
    }
  }
  if (in_lanes != active_count_) throw SimError("active vehicles missing from lanes");

  // Sensors, recomputed cell by cell from raw vehicle positions.
  const auto sensed = read_sensors();
  const auto& cells = sensor_cells();
  for (std::size_t c = 0; c < kSensorCount; ++c) {
    const auto& cell = cells[c];
    const EdgeIndex app = layout_.arm(cell.arm).approach;
    const double len = net_->edge(app).length;
    const bool outermost = c % kCellsPerGroup == kCellsPerGroup - 1;
    bool occupied = false;
    for (const auto& v : vehicles_) {
      if (v.status != VehicleStatus::active || v.edge() != app) continue;
      if ((v.lane == 0) != (cell.group == LaneGroup::left)) continue;
      const double up = len - v.position;
      if (up >= cell.near && (up < cell.far || (outermost && up <= cell.far))) occupied = true;
    }
    if (occupied != sensed[c]) throw SimError("sensor " + std::to_string(c) + " inconsistent");
  }
}

}  // namespace flow::sim
