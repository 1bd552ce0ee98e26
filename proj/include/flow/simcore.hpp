#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "flow/roadnet.hpp"

namespace flow::sim {

using roadnet::EdgeIndex;
using roadnet::NodeIndex;
using VehicleId = std::size_t;

class SimError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a phase change is requested during the yellow interlock or
/// before the minimum green has elapsed.
class InterlockError : public SimError {
 public:
  using SimError::SimError;
};

enum class Arm : int { north = 0, east = 1, south = 2, west = 3 };
inline constexpr std::array<Arm, 4> kArms{Arm::north, Arm::east, Arm::south, Arm::west};
inline constexpr int index(Arm a) { return static_cast<int>(a); }
std::string_view arm_name(Arm a);
Arm parse_arm(std::string_view name);

enum class Movement { straight, left, right };

/// Turn taken by a vehicle travelling inbound on arm `from` and leaving
/// towards arm `to` (right-hand traffic, arms clockwise N, E, S, W).
Movement turn_between(Arm from, Arm to);

enum class VehicleType { car, bus, trailer, ambulance };
std::string_view vehicle_type_name(VehicleType t);
VehicleType parse_vehicle_type(std::string_view name);

struct VehicleTypeSpec {
  double length;     // m
  double max_speed;  // m/s
};
const VehicleTypeSpec& type_spec(VehicleType t);

struct Kinematics {
  double accel = 2.6;        // m/s^2
  double decel = 4.5;        // m/s^2, comfortable braking used in the safe speed
  double min_gap = 2.5;      // m, bumper to bumper
  double reaction = 1.0;     // s
  double stop_margin = 1.0;  // m short of the stop line where queues halt
  double halt_speed = 0.1;   // m/s
  double lookahead = 100.0;  // m beyond the current edge
};

// ---------------------------------------------------------------------------
// Intersection layout

struct ArmLayout {
  NodeIndex terminal = 0;  // origin/destination node
  NodeIndex arm_node = 0;  // where the diagonals attach
  EdgeIndex entry = 0;     // terminal -> arm node
  EdgeIndex approach = 0;  // arm node -> junction, signalized
  EdgeIndex departure = 0; // junction -> arm node
  EdgeIndex exit = 0;      // arm node -> terminal
};

/// Resolves the four-arm junction from edge/node naming (`N`, `NA`, `N_in`,
/// `N_app`, `N_dep`, `N_out`, junction `C`).
class IntersectionLayout {
 public:
  static IntersectionLayout resolve(const roadnet::RoadNetwork& net);

  NodeIndex junction() const { return junction_; }
  const ArmLayout& arm(Arm a) const { return arms_[index(a)]; }

  std::optional<Arm> approach_arm(EdgeIndex e) const;
  std::optional<Arm> entry_arm(EdgeIndex e) const;
  std::optional<Arm> departure_arm(EdgeIndex e) const;
  std::optional<Arm> arm_at_node(NodeIndex n) const;

  /// Movement classification for travelling from `edge` onto `next`.
  Movement movement(const roadnet::RoadNetwork& net, EdgeIndex edge, std::optional<EdgeIndex> next) const;

 private:
  NodeIndex junction_ = 0;
  std::array<ArmLayout, 4> arms_{};
};

// ---------------------------------------------------------------------------
// Signal control

enum class LightState { green, yellow };

/// Four-phase controller. Phases: 0 = N+S straight/right, 1 = N+S left,
/// 2 = E+W straight/right, 3 = E+W left.
class SignalController {
 public:
  static constexpr int kPhaseCount = 4;

  explicit SignalController(int yellow_duration = 2, int min_green = 4);

  int current_phase() const { return phase_; }
  LightState state() const { return state_; }
  int time_in_state() const { return time_in_state_; }
  std::optional<int> pending_phase() const { return pending_; }
  int yellow_duration() const { return yellow_duration_; }
  int min_green() const { return min_green_; }

  /// Same phase: green continues. Other phase: yellow, then the new green.
  /// Returns true when a yellow interlock was started.
  bool request(int phase);
  void tick();

  bool permits(Arm arm, Movement m) const;  // green for this movement
  bool yellow_for(Arm arm, Movement m) const;

  static bool phase_serves(int phase, Arm arm, Movement m);

 private:
  int yellow_duration_;
  int min_green_;
  int phase_ = 0;
  LightState state_ = LightState::green;
  int time_in_state_ = 0;
  std::optional<int> pending_;
};

// ---------------------------------------------------------------------------
// Sensors and detectors

inline constexpr std::size_t kSensorCount = 80;
inline constexpr std::size_t kCellsPerGroup = 10;
using SensorVector = std::array<bool, kSensorCount>;

enum class LaneGroup { left = 0, through = 1 };  // through = straight + right lanes

struct SensorCell {
  Arm arm;
  LaneGroup group;
  double near;  // m upstream of the stop line, inclusive
  double far;   // exclusive, except the outermost cell
};

/// Cell index = arm*20 + group*10 + k, with k = 0 nearest the stop line.
const std::array<SensorCell, kSensorCount>& sensor_cells();
/// Cell holding a point `upstream_distance` metres before the stop line.
std::optional<std::size_t> sensor_index(Arm arm, LaneGroup group, double upstream_distance);

struct DetectorReading {
  Arm arm = Arm::north;
  int window_start = 0;   // s
  int vehicle_count = 0;  // vehicles entering the approach during the window
  double mean_speed = 0.0;  // m/s over vehicle-seconds on the approach
  double density = 0.0;     // mean vehicles on the approach per metre of road
};

// ---------------------------------------------------------------------------
// Vehicles and schedules

enum class VehicleStatus { pending, active, arrived };

struct Vehicle {
  VehicleId id = 0;
  VehicleType type = VehicleType::car;
  roadnet::Route route;
  std::size_t route_edge_index = 0;
  int lane = 0;
  double position = 0.0;  // front bumper, m from edge start
  double speed = 0.0;
  double depart_time = 0.0;
  double accumulated_wait = 0.0;
  double arrival_time = 0.0;
  VehicleStatus status = VehicleStatus::pending;
  bool rerouted = false;
  NodeIndex origin = 0;
  NodeIndex destination = 0;

  bool arrived() const { return status == VehicleStatus::arrived; }
  EdgeIndex edge() const { return route.edges[route_edge_index]; }
  std::optional<EdgeIndex> next_edge() const {
    if (route_edge_index + 1 < route.edges.size()) return route.edges[route_edge_index + 1];
    return std::nullopt;
  }
  double length() const { return type_spec(type).length; }
};

struct Departure {
  int depart = 0;
  VehicleType type = VehicleType::car;
  NodeIndex origin = 0;
  NodeIndex destination = 0;
  bool operator==(const Departure&) const = default;
};

struct DemandMix {
  double through_share = 0.6;  // O-D pairs whose shortest route crosses the junction
  std::array<double, 4> type_share{0.90, 0.05, 0.04, 0.01};  // car, bus, trailer, ambulance
};

/// Departure times from sorted Weibull(shape 2) draws rescaled onto
/// [0, horizon_steps). Shares are applied as exact counts.
std::vector<Departure> spawn_schedule(std::size_t count, std::uint64_t seed, int horizon_steps,
                                      const roadnet::RoadNetwork& net, const IntersectionLayout& layout,
                                      const DemandMix& mix = {});

void write_schedule(const std::filesystem::path& path, const roadnet::RoadNetwork& net,
                    const std::vector<Departure>& schedule);
std::vector<Departure> read_schedule(const std::filesystem::path& path, const roadnet::RoadNetwork& net);

// ---------------------------------------------------------------------------
// Simulation

struct SimConfig {
  Kinematics kinematics{};
  int yellow_duration = 2;
  int min_green = 4;
  int max_sim_time = 9000;  // s
  int detector_period = 30;  // s
  bool log_detectors = false;
};

struct EpisodeTotals {
  double cumulative_delay = 0.0;  // halted vehicle-seconds on approaches
  double queue_sum = 0.0;         // sum over steps of halted approach vehicles
  int steps = 0;
  double average_queue() const { return steps > 0 ? queue_sum / steps : 0.0; }
};

/// A single simulated world advanced in 1 s steps. Not thread-safe; distinct
/// instances are independent.
class Simulation {
 public:
  Simulation(std::shared_ptr<const roadnet::RoadNetwork> net, std::vector<Departure> schedule,
             SimConfig config = {});

  const roadnet::RoadNetwork& network() const { return *net_; }
  std::shared_ptr<const roadnet::RoadNetwork> network_ptr() const { return net_; }
  const IntersectionLayout& layout() const { return layout_; }
  const SimConfig& config() const { return config_; }
  const SignalController& signal() const { return signal_; }

  int clock() const { return clock_; }
  bool finished() const;
  bool all_arrived() const { return arrived_count_ == vehicles_.size(); }

  void step();

  /// Returns true if a yellow interlock was started.
  bool set_phase(int phase);

  SensorVector read_sensors() const;
  /// Arm readings for the window that just closed; empty between boundaries.
  std::vector<DetectorReading> read_detectors() const;
  const std::vector<DetectorReading>& detector_log() const { return detector_log_; }

  int queue_length(Arm arm) const;
  int total_queue() const;
  double cumulative_wait() const;
  double arm_wait(Arm arm) const;

  std::size_t spawned_count() const { return vehicles_.size(); }
  std::size_t pending_count() const { return vehicles_.size() - active_count_ - arrived_count_; }
  std::size_t active_count() const { return active_count_; }
  std::size_t arrived_count() const { return arrived_count_; }

  const std::vector<Vehicle>& vehicles() const { return vehicles_; }
  const Vehicle& vehicle(VehicleId id) const { return vehicles_.at(id); }
  /// Vehicles in one lane, front first.
  const std::deque<VehicleId>& lane(EdgeIndex edge, int lane) const { return lanes_.at(edge).at(lane); }

  /// Pending vehicles whose departure time has passed but which could not
  /// be inserted yet.
  std::vector<VehicleId> waiting_for_insertion() const;

  /// Replace the remaining route. For active vehicles the new route must
  /// start with the current edge, for pending ones with the first edge.
  void reroute(VehicleId id, roadnet::Route new_route);

  /// Test hook: place an active vehicle directly. Lane and position are
  /// taken as given; the route must be valid.
  VehicleId place_vehicle(VehicleType type, roadnet::Route route, std::size_t edge_index, int lane,
                          double position, double speed);

  const EpisodeTotals& totals() const { return totals_; }

  /// Lane a vehicle uses on the edge at `route_index` of its route. Left
  /// turns keep to lane 0, right turns to the outermost lane, through
  /// traffic to the middle lanes.
  int lane_for(const Vehicle& v, std::size_t route_index) const;

  /// Throws SimError describing the first violated invariant: vehicle
  /// conservation, lane ordering, minimum gap, position bounds, sensor
  /// consistency.
  void check_invariants() const;

 private:
  struct LaneRef {
    EdgeIndex edge;
    int lane;
  };
  struct Ahead {
    LaneRef lane;
    double distance;  // from v's front to the start of that lane
  };

  void insert_departures();
  void plan_lane(EdgeIndex edge, int lane);
  std::optional<Ahead> first_occupied_ahead(const Vehicle& v) const;
  std::optional<double> stop_distance(const Vehicle& v) const;
  void move_lane(EdgeIndex edge, int lane);
  void advance(Vehicle& v, double distance);
  void finish_step();
  double safe_speed(double gap, double speed, double leader_speed) const;
  std::size_t lane_slot(EdgeIndex edge, int lane) const { return lane_offset_[edge] + lane; }

  std::shared_ptr<const roadnet::RoadNetwork> net_;
  IntersectionLayout layout_;
  SimConfig config_;
  SignalController signal_;

  std::vector<Vehicle> vehicles_;
  std::vector<std::vector<std::deque<VehicleId>>> lanes_;
  std::vector<VehicleId> waiting_;  // due but not inserted, departure order
  std::size_t next_departure_ = 0;  // index into vehicles_ (sorted by depart)
  std::size_t active_count_ = 0;
  std::size_t arrived_count_ = 0;
  int clock_ = 0;

  // per-step scratch
  std::vector<double> planned_speed_;
  std::vector<std::uint8_t> lane_state_;  // 0 todo, 1 in progress, 2 done
  std::vector<std::size_t> lane_offset_;

  // detector window accumulators, per arm and approach lane
  std::array<std::array<int, 4>, 4> det_count_{};
  std::array<double, 4> det_speed_sum_{};
  std::array<double, 4> det_speed_samples_{};
  std::array<double, 4> det_occupancy_{};
  std::vector<DetectorReading> last_readings_;
  std::vector<DetectorReading> detector_log_;

  EpisodeTotals totals_;
};

}  // namespace flow::sim
