#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "flow/roadnet.hpp"
#include "flow/simcore.hpp"

namespace flow::reroute {

using sim::Arm;
using sim::DetectorReading;

struct CongestionMonitor {
  double threshold = 0.05;  // vehicles per metre of approach
  int period = 30;          // s
  std::array<std::vector<DetectorReading>, 4> history;

  explicit CongestionMonitor(double threshold = 0.05, int period = 30);
};

/// Arms whose window density strictly exceeds the threshold. Readings are
/// appended to the monitor's history.
std::vector<Arm> check_congestion(CongestionMonitor& monitor, std::span<const DetectorReading> readings);

double updated_total_wait(double route_time, double intersection_wait);

enum class Choice { stay, switch_route };
std::string_view choice_name(Choice c);

struct Kernel {
  Choice choice = Choice::stay;
  std::size_t alternative = 0;  // index into the alternatives when switching
};

/// Switch to the fastest alternative iff u_twt exceeds its time. The
/// alternatives must be sorted ascending.
Kernel reroute_decision(double u_twt, std::span<const double> alternatives);

struct RerouteDecision {
  int time = 0;
  sim::VehicleId vehicle = 0;
  roadnet::Route old_route;  // remainder from the current edge
  roadnet::Route new_route;  // equals old_route when staying
  Choice choice = Choice::stay;
  double u_twt = 0.0;
  std::vector<double> alternative_times;  // ascending

  double best_alternative() const;  // NaN when there is none
};

/// Evaluates every not-yet-rerouted vehicle on the entry link of a congested
/// arm (or due for insertion there) whose remaining route uses that arm's
/// approach, and rewrites the routes of those that switch.
std::vector<RerouteDecision> apply_rerouting(sim::Simulation& sim, CongestionMonitor& monitor,
                                             std::span<const DetectorReading> readings, std::size_t k = 4);

/// time,vehicle,old_route,new_route,u_twt,best_alt_time,decision
std::string format_log(const roadnet::RoadNetwork& net, std::span<const RerouteDecision> decisions);
inline constexpr std::string_view kLogHeader = "time,vehicle,old_route,new_route,u_twt,best_alt_time,decision";

}  // namespace flow::reroute
