#include "flow/rerouter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "flow/csv.hpp"

namespace flow::reroute {

using roadnet::Route;

CongestionMonitor::CongestionMonitor(double threshold_, int period_) : threshold(threshold_), period(period_) {
  if (!(threshold > 0.0)) throw std::invalid_argument("congestion threshold must be positive");
  if (period < 1) throw std::invalid_argument("evaluation period must be positive");
}

std::vector<Arm> check_congestion(CongestionMonitor& monitor, std::span<const DetectorReading> readings) {
  std::vector<Arm> flagged;
  for (const auto& r : readings) {
    monitor.history[sim::index(r.arm)].push_back(r);
    if (r.density > monitor.threshold) flagged.push_back(r.arm);
  }
  return flagged;
}

double updated_total_wait(double route_time, double intersection_wait) { return route_time + intersection_wait; }

std::string_view choice_name(Choice c) { return c == Choice::stay ? "stay" : "switch"; }

Kernel reroute_decision(double u_twt, std::span<const double> alternatives) {
  if (!std::is_sorted(alternatives.begin(), alternatives.end()))
    throw std::invalid_argument("alternative times must be sorted ascending");
  if (alternatives.empty() || !(u_twt > alternatives.front())) return {};
  return Kernel{Choice::switch_route, 0};
}

double RerouteDecision::best_alternative() const {
  return alternative_times.empty() ? std::numeric_limits<double>::quiet_NaN() : alternative_times.front();
}

std::vector<RerouteDecision> apply_rerouting(sim::Simulation& sim, CongestionMonitor& monitor,
                                             std::span<const DetectorReading> readings, std::size_t k) {
  std::vector<RerouteDecision> out;
  const auto flagged = check_congestion(monitor, readings);
  if (flagged.empty()) return out;

  const auto& net = sim.network();
  const auto& layout = sim.layout();
  const auto free_flow = roadnet::EdgeWeights::free_flow(net);
  auto weights = free_flow;
  for (const auto& r : readings) {
    if (std::find(flagged.begin(), flagged.end(), r.arm) == flagged.end()) continue;
    const auto app = layout.arm(r.arm).approach;
    weights.set(app, free_flow.at(app) + r.density * net.edge(app).length * 2.0);
  }

  for (Arm arm : flagged) {
    const auto& al = layout.arm(arm);
    const int queue = sim.queue_length(arm);
    const double t_wt = queue > 0 ? sim.arm_wait(arm) / queue : 0.0;

    std::vector<sim::VehicleId> candidates;
    for (int l = 0; l < net.edge(al.entry).lane_count; ++l)
      for (auto id : sim.lane(al.entry, l)) candidates.push_back(id);
    for (auto id : sim.waiting_for_insertion())
      if (sim.vehicle(id).route.edges.front() == al.entry) candidates.push_back(id);
    std::sort(candidates.begin(), candidates.end());

    for (auto id : candidates) {
      const auto& v = sim.vehicle(id);
      if (v.rerouted) continue;
      const std::size_t here = v.status == sim::VehicleStatus::active ? v.route_edge_index : 0;
      if (v.route.edges[here] != al.entry) continue;
      Route remainder{{v.route.edges.begin() + static_cast<std::ptrdiff_t>(here), v.route.edges.end()},
                      net.edge(al.entry).from, v.destination};
      if (std::find(remainder.edges.begin(), remainder.edges.end(), al.approach) == remainder.edges.end()) continue;

      const double pos = v.status == sim::VehicleStatus::active ? v.position : 0.0;
      const auto& entry = net.edge(al.entry);
      const double on_entry = (entry.length - pos) / entry.speed_limit;
      double route_time = on_entry;
      for (std::size_t j = 1; j < remainder.size(); ++j) route_time += free_flow.at(remainder.edges[j]);

      RerouteDecision d;
      d.time = sim.clock();
      d.vehicle = id;
      d.old_route = remainder;
      d.new_route = remainder;
      d.u_twt = updated_total_wait(route_time, t_wt);

      std::vector<Route> alternatives;
      const Route tail{{remainder.edges.begin() + 1, remainder.edges.end()}, entry.to, v.destination};
      if (entry.to != v.destination) {
        for (auto& r : roadnet::enumerate_routes(net, entry.to, v.destination, weights, k)) {
          if (r.edges == tail.edges) continue;
          d.alternative_times.push_back(on_entry + roadnet::route_travel_time(net, r, weights));
          alternatives.push_back(std::move(r));
        }
      }
      const auto kernel = reroute_decision(d.u_twt, d.alternative_times);
      d.choice = kernel.choice;
      if (kernel.choice == Choice::switch_route) {
        Route next{{al.entry}, remainder.origin, v.destination};
        const auto& alt = alternatives[kernel.alternative].edges;
        next.edges.insert(next.edges.end(), alt.begin(), alt.end());
        sim.reroute(id, next);
        d.new_route = std::move(next);
      }
      out.push_back(std::move(d));
    }
  }
  return out;
}

std::string format_log(const roadnet::RoadNetwork& net, std::span<const RerouteDecision> decisions) {
  std::string out(kLogHeader);
  out += '\n';
  for (const auto& d : decisions) {
    const double best = d.best_alternative();
    out += std::to_string(d.time) + ',' + std::to_string(d.vehicle) + ',' + roadnet::route_to_string(net, d.old_route) +
           ',' + roadnet::route_to_string(net, d.new_route) + ',' + csv::number(d.u_twt) + ',' +
           (std::isnan(best) ? std::string() : csv::number(best)) + ',' + std::string(choice_name(d.choice)) + '\n';
  }
  return out;
}

}  // namespace flow::reroute
