#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace flow::roadnet {

using NodeIndex = std::size_t;
using EdgeIndex = std::size_t;

inline constexpr double kDefaultSpeed = 13.89;  // 50 km/h

class NetworkError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public NetworkError {
 public:
  ParseError(std::size_t line, const std::string& what)
      : NetworkError("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class UnreachableError : public NetworkError {
 public:
  using NetworkError::NetworkError;
};

struct Edge {
  std::string id;
  NodeIndex from = 0;
  NodeIndex to = 0;
  double length = 0.0;       // m
  int lane_count = 1;
  double speed_limit = kDefaultSpeed;  // m/s
  bool signalized = false;

  double free_flow_time() const { return length / speed_limit; }
  bool operator==(const Edge&) const = default;
};

/// Directed road graph. Node and edge ids are strings in the file format;
/// internally everything is addressed by dense indices.
class RoadNetwork {
 public:
  NodeIndex add_node(std::string id);
  EdgeIndex add_edge(Edge edge);

  std::size_t node_count() const { return node_ids_.size(); }
  std::size_t edge_count() const { return edges_.size(); }

  const std::string& node_id(NodeIndex n) const { return node_ids_.at(n); }
  const Edge& edge(EdgeIndex e) const { return edges_.at(e); }
  std::span<const Edge> edges() const { return edges_; }
  std::span<const EdgeIndex> outgoing(NodeIndex n) const { return adjacency_.at(n); }

  NodeIndex node(std::string_view id) const;
  EdgeIndex edge_index(std::string_view id) const;
  bool has_node(std::string_view id) const;
  bool has_edge(std::string_view id) const;

  /// Throws NetworkError if an edge invariant is broken.
  void validate() const;

  /// Node ids, edge list and adjacency all equal.
  bool operator==(const RoadNetwork& other) const;

 private:
  std::vector<std::string> node_ids_;
  std::unordered_map<std::string, NodeIndex> node_lookup_;
  std::vector<Edge> edges_;
  std::unordered_map<std::string, EdgeIndex> edge_lookup_;
  std::vector<std::vector<EdgeIndex>> adjacency_;
};

struct Route {
  std::vector<EdgeIndex> edges;
  NodeIndex origin = 0;
  NodeIndex destination = 0;

  bool empty() const { return edges.empty(); }
  std::size_t size() const { return edges.size(); }
  bool operator==(const Route&) const = default;
};

/// Travel-time weight per edge in seconds. Missing entries are NaN.
class EdgeWeights {
 public:
  EdgeWeights() = default;
  explicit EdgeWeights(std::size_t edge_count);

  static EdgeWeights free_flow(const RoadNetwork& net);

  std::size_t size() const { return seconds_.size(); }
  bool has(EdgeIndex e) const;
  double at(EdgeIndex e) const;  // throws NetworkError if missing
  void set(EdgeIndex e, double seconds) { seconds_.at(e) = seconds; }
  void scale(double factor);

 private:
  std::vector<double> seconds_;
};

// Default geometry: terminal nodes N/E/S/W, arm nodes NA/EA/SA/WA 1000 m
// from the junction C, 100 m terminal links, 1414 m diagonals between arm
// nodes. Edge naming: <A>_in, <A>_app (signalized), <A>_dep, <A>_out and
// <A><B>_diag.
RoadNetwork build_default_network();

/// Parses the line-oriented network format:
///   node <id>
///   edge <id> <from> <to> <length_m> <lanes> <speed_mps> <signalized:0|1>
/// `#` starts a comment.
RoadNetwork build_network(std::string_view spec);
RoadNetwork load_network(const std::filesystem::path& path);
std::string format_network(const RoadNetwork& net);

Route shortest_route(const RoadNetwork& net, NodeIndex origin, NodeIndex dest, const EdgeWeights& w);

/// Up to k loop-free routes in ascending weight (Yen). Equal weights are
/// ordered lexicographically by edge-id sequence.
std::vector<Route> enumerate_routes(const RoadNetwork& net, NodeIndex origin, NodeIndex dest,
                                    const EdgeWeights& w, std::size_t k = 4);

double route_travel_time(const RoadNetwork& net, const Route& route, const EdgeWeights& w);
double route_length(const RoadNetwork& net, const Route& route);

/// Consecutive edges share a node, endpoints match, no edge repeats.
bool is_valid_route(const RoadNetwork& net, const Route& route);
bool crosses_signal(const RoadNetwork& net, const Route& route);

/// "a;b;c" in edge ids.
std::string route_to_string(const RoadNetwork& net, const Route& route);

}  // namespace flow::roadnet
