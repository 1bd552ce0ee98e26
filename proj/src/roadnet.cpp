#include "flow/roadnet.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <queue>
#include <sstream>

namespace flow::roadnet {

// ---------------------------------------------------------------------------
// RoadNetwork

NodeIndex RoadNetwork::add_node(std::string id) {
  if (node_lookup_.contains(id)) throw NetworkError("duplicate node '" + id + "'");
  const NodeIndex n = node_ids_.size();
  node_lookup_.emplace(id, n);
  node_ids_.push_back(std::move(id));
  adjacency_.emplace_back();
  return n;
}

EdgeIndex RoadNetwork::add_edge(Edge edge) {
  if (edge_lookup_.contains(edge.id)) throw NetworkError("duplicate edge '" + edge.id + "'");
  if (edge.from >= node_count() || edge.to >= node_count())
    throw NetworkError("edge '" + edge.id + "' references a missing node");
  if (!(edge.length > 0.0)) throw NetworkError("edge '" + edge.id + "' has non-positive length");
  if (!(edge.speed_limit > 0.0)) throw NetworkError("edge '" + edge.id + "' has non-positive speed");
  if (edge.lane_count < 1 || edge.lane_count > 4)
    throw NetworkError("edge '" + edge.id + "' lane count outside 1..4");
  const EdgeIndex e = edges_.size();
  edge_lookup_.emplace(edge.id, e);
  adjacency_[edge.from].push_back(e);
  edges_.push_back(std::move(edge));
  return e;
}

NodeIndex RoadNetwork::node(std::string_view id) const {
  auto it = node_lookup_.find(std::string(id));
  if (it == node_lookup_.end()) throw NetworkError("unknown node '" + std::string(id) + "'");
  return it->second;
}

EdgeIndex RoadNetwork::edge_index(std::string_view id) const {
  auto it = edge_lookup_.find(std::string(id));
  if (it == edge_lookup_.end()) throw NetworkError("unknown edge '" + std::string(id) + "'");
  return it->second;
}

bool RoadNetwork::has_node(std::string_view id) const { return node_lookup_.contains(std::string(id)); }
bool RoadNetwork::has_edge(std::string_view id) const { return edge_lookup_.contains(std::string(id)); }

void RoadNetwork::validate() const {
  for (const auto& e : edges_) {
    if (e.from >= node_count() || e.to >= node_count())
      throw NetworkError("edge '" + e.id + "' references a missing node");
    if (!(e.length > 0.0)) throw NetworkError("edge '" + e.id + "' has non-positive length");
    if (!(e.speed_limit > 0.0)) throw NetworkError("edge '" + e.id + "' has non-positive speed");
    if (e.lane_count < 1 || e.lane_count > 4) throw NetworkError("edge '" + e.id + "' lane count outside 1..4");
  }
}

bool RoadNetwork::operator==(const RoadNetwork& other) const {
  return node_ids_ == other.node_ids_ && edges_ == other.edges_ && adjacency_ == other.adjacency_;
}

// ---------------------------------------------------------------------------
// EdgeWeights

EdgeWeights::EdgeWeights(std::size_t edge_count)
    : seconds_(edge_count, std::numeric_limits<double>::quiet_NaN()) {}

EdgeWeights EdgeWeights::free_flow(const RoadNetwork& net) {
  EdgeWeights w(net.edge_count());
  for (EdgeIndex e = 0; e < net.edge_count(); ++e) w.set(e, net.edge(e).free_flow_time());
  return w;
}

bool EdgeWeights::has(EdgeIndex e) const { return e < seconds_.size() && !std::isnan(seconds_[e]); }

double EdgeWeights::at(EdgeIndex e) const {
  if (!has(e)) throw NetworkError("no weight for edge " + std::to_string(e));
  return seconds_[e];
}

void EdgeWeights::scale(double factor) {
  for (auto& s : seconds_) s *= factor;
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

double parse_double(const std::string& tok, std::size_t line, const char* what) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size())
    throw ParseError(line, std::string("bad ") + what + " '" + tok + "'");
  return v;
}

int parse_int(const std::string& tok, std::size_t line, const char* what) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size())
    throw ParseError(line, std::string("bad ") + what + " '" + tok + "'");
  return v;
}

}  // namespace

RoadNetwork build_network(std::string_view spec) {
  RoadNetwork net;
  std::istringstream in{std::string(spec)};
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    if (auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    std::istringstream line(raw);
    std::vector<std::string> tok;
    for (std::string t; line >> t;) tok.push_back(t);
    if (tok.empty()) continue;

    if (tok[0] == "node") {
      if (tok.size() != 2) throw ParseError(line_no, "expected 'node <id>'");
      if (net.has_node(tok[1])) throw ParseError(line_no, "duplicate node '" + tok[1] + "'");
      net.add_node(tok[1]);
    } else if (tok[0] == "edge") {
      if (tok.size() != 8)
        throw ParseError(line_no, "expected 'edge <id> <from> <to> <length_m> <lanes> <speed_mps> <signalized>'");
      if (net.has_edge(tok[1])) throw ParseError(line_no, "duplicate edge '" + tok[1] + "'");
      for (int i : {2, 3})
        if (!net.has_node(tok[i])) throw ParseError(line_no, "dangling node reference '" + tok[i] + "'");
      Edge e;
      e.id = tok[1];
      e.from = net.node(tok[2]);
      e.to = net.node(tok[3]);
      e.length = parse_double(tok[4], line_no, "length");
      e.lane_count = parse_int(tok[5], line_no, "lane count");
      e.speed_limit = parse_double(tok[6], line_no, "speed");
      if (tok[7] != "0" && tok[7] != "1") throw ParseError(line_no, "signalized must be 0 or 1");
      e.signalized = tok[7] == "1";
      if (!(e.length > 0.0)) throw ParseError(line_no, "non-positive length");
      if (!(e.speed_limit > 0.0)) throw ParseError(line_no, "non-positive speed");
      if (e.lane_count < 1 || e.lane_count > 4) throw ParseError(line_no, "lane count outside 1..4");
      net.add_edge(std::move(e));
    } else {
      throw ParseError(line_no, "unknown directive '" + tok[0] + "'");
    }
  }
  return net;
}

RoadNetwork load_network(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NetworkError("cannot open network file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return build_network(ss.str());
}

std::string format_network(const RoadNetwork& net) {
  std::string out;
  for (NodeIndex n = 0; n < net.node_count(); ++n) out += "node " + net.node_id(n) + "\n";
  for (const auto& e : net.edges()) {
    out += "edge " + e.id + " " + net.node_id(e.from) + " " + net.node_id(e.to) + " " +
           format_double(e.length) + " " + std::to_string(e.lane_count) + " " + format_double(e.speed_limit) +
           " " + (e.signalized ? "1" : "0") + "\n";
  }
  return out;
}

RoadNetwork build_default_network() {
  RoadNetwork net;
  constexpr std::array<char, 4> arms{'N', 'E', 'S', 'W'};
  net.add_node("C");
  for (char a : arms) net.add_node(std::string(1, a));
  for (char a : arms) net.add_node(std::string(1, a) + "A");

  auto add = [&](std::string id, const std::string& from, const std::string& to, double len, int lanes,
                 bool sig) {
    net.add_edge(Edge{std::move(id), net.node(from), net.node(to), len, lanes, kDefaultSpeed, sig});
  };
  for (char a : arms) {
    const std::string t(1, a);
    const std::string arm = t + "A";
    add(t + "_in", t, arm, 100.0, 4, false);
    add(t + "_app", arm, "C", 1000.0, 4, true);
    add(t + "_dep", "C", arm, 1000.0, 4, false);
    add(t + "_out", arm, t, 100.0, 4, false);
  }
  for (std::size_t i = 0; i < arms.size(); ++i) {
    const std::string a(1, arms[i]);
    const std::string b(1, arms[(i + 1) % arms.size()]);
    add(a + b + "_diag", a + "A", b + "A", 1414.0, 1, false);
    add(b + a + "_diag", b + "A", a + "A", 1414.0, 1, false);
  }
  return net;
}

// ---------------------------------------------------------------------------
// Routing

namespace {

// Lexicographic comparison of edge-id sequences.
bool ids_less(const RoadNetwork& net, std::span<const EdgeIndex> a, std::span<const EdgeIndex> b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end(), [&](EdgeIndex x, EdgeIndex y) {
    return net.edge(x).id < net.edge(y).id;
  });
}

struct Label {
  double cost = std::numeric_limits<double>::infinity();
  std::vector<EdgeIndex> path;
  bool done = false;
};

struct Candidate {
  double cost;
  std::vector<EdgeIndex> path;
};

bool better(const RoadNetwork& net, double ca, std::span<const EdgeIndex> pa, double cb,
            std::span<const EdgeIndex> pb) {
  if (ca != cb) return ca < cb;
  return ids_less(net, pa, pb);
}

double path_cost(std::span<const EdgeIndex> path, const EdgeWeights& w) {
  double c = 0.0;
  for (EdgeIndex e : path) c += w.at(e);
  return c;
}

// Dijkstra carrying full paths so that equal-cost ties resolve to the
// lexicographically smallest edge-id sequence. Requires positive weights.
std::optional<Candidate> dijkstra(const RoadNetwork& net, NodeIndex origin, NodeIndex dest, const EdgeWeights& w,
                                  const std::vector<bool>& banned_edges, const std::vector<bool>& banned_nodes) {
  std::vector<Label> labels(net.node_count());
  using Item = std::pair<double, NodeIndex>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> open;
  labels[origin].cost = 0.0;
  open.emplace(0.0, origin);

  while (!open.empty()) {
    auto [cost, u] = open.top();
    open.pop();
    if (labels[u].done || cost > labels[u].cost) continue;
    labels[u].done = true;
    if (u == dest) break;
    for (EdgeIndex e : net.outgoing(u)) {
      if (banned_edges[e]) continue;
      const NodeIndex v = net.edge(e).to;
      if (banned_nodes[v] || labels[v].done) continue;
      const double c = labels[u].cost + w.at(e);
      std::vector<EdgeIndex> p = labels[u].path;
      p.push_back(e);
      if (better(net, c, p, labels[v].cost, labels[v].path)) {
        const bool improved_cost = c < labels[v].cost;
        labels[v].cost = c;
        labels[v].path = std::move(p);
        if (improved_cost) open.emplace(c, v);
      }
    }
  }
  if (!labels[dest].done) return std::nullopt;
  return Candidate{labels[dest].cost, std::move(labels[dest].path)};
}

void check_weights(const RoadNetwork& net, const EdgeWeights& w) {
  for (EdgeIndex e = 0; e < net.edge_count(); ++e)
    if (!(w.at(e) > 0.0)) throw NetworkError("edge weights must be positive");
}

}  // namespace

Route shortest_route(const RoadNetwork& net, NodeIndex origin, NodeIndex dest, const EdgeWeights& w) {
  if (origin == dest) throw NetworkError("origin equals destination");
  check_weights(net, w);
  std::vector<bool> no_edges(net.edge_count(), false), no_nodes(net.node_count(), false);
  auto best = dijkstra(net, origin, dest, w, no_edges, no_nodes);
  if (!best)
    throw UnreachableError("'" + net.node_id(dest) + "' unreachable from '" + net.node_id(origin) + "'");
  return Route{std::move(best->path), origin, dest};
}

std::vector<Route> enumerate_routes(const RoadNetwork& net, NodeIndex origin, NodeIndex dest,
                                    const EdgeWeights& w, std::size_t k) {
  if (k < 1) throw NetworkError("k must be at least 1");
  std::vector<Route> found{shortest_route(net, origin, dest, w)};
  std::vector<Candidate> pool;

  auto known = [&](const std::vector<EdgeIndex>& p) {
    return std::any_of(found.begin(), found.end(), [&](const Route& r) { return r.edges == p; }) ||
           std::any_of(pool.begin(), pool.end(), [&](const Candidate& c) { return c.path == p; });
  };

  while (found.size() < k) {
    const auto& prev = found.back().edges;
    for (std::size_t i = 0; i < prev.size(); ++i) {
      const NodeIndex spur = i == 0 ? origin : net.edge(prev[i - 1]).to;
      const std::span<const EdgeIndex> root(prev.data(), i);

      std::vector<bool> banned_edges(net.edge_count(), false);
      for (const auto& r : found) {
        if (r.edges.size() > i && std::equal(root.begin(), root.end(), r.edges.begin()))
          banned_edges[r.edges[i]] = true;
      }
      std::vector<bool> banned_nodes(net.node_count(), false);
      // Root-path nodes other than the spur node are off limits (loop-free).
      if (i > 0) banned_nodes[origin] = true;
      for (std::size_t j = 0; j + 1 < i; ++j) banned_nodes[net.edge(prev[j]).to] = true;

      auto tail = dijkstra(net, spur, dest, w, banned_edges, banned_nodes);
      if (!tail) continue;
      std::vector<EdgeIndex> total(root.begin(), root.end());
      total.insert(total.end(), tail->path.begin(), tail->path.end());
      if (known(total)) continue;
      pool.push_back(Candidate{path_cost(total, w), std::move(total)});
    }
    if (pool.empty()) break;
    auto best = std::min_element(pool.begin(), pool.end(), [&](const Candidate& a, const Candidate& b) {
      return better(net, a.cost, a.path, b.cost, b.path);
    });
    found.push_back(Route{std::move(best->path), origin, dest});
    pool.erase(best);
  }
  return found;
}

double route_travel_time(const RoadNetwork& net, const Route& route, const EdgeWeights& w) {
  double t = 0.0;
  for (EdgeIndex e : route.edges) {
    if (e >= net.edge_count()) throw NetworkError("route references unknown edge");
    t += w.at(e);
  }
  return t;
}

double route_length(const RoadNetwork& net, const Route& route) {
  double len = 0.0;
  for (EdgeIndex e : route.edges) len += net.edge(e).length;
  return len;
}

bool is_valid_route(const RoadNetwork& net, const Route& route) {
  if (route.edges.empty()) return false;
  for (EdgeIndex e : route.edges)
    if (e >= net.edge_count()) return false;
  if (net.edge(route.edges.front()).from != route.origin) return false;
  if (net.edge(route.edges.back()).to != route.destination) return false;
  for (std::size_t i = 1; i < route.edges.size(); ++i)
    if (net.edge(route.edges[i - 1]).to != net.edge(route.edges[i]).from) return false;
  std::vector<EdgeIndex> sorted = route.edges;
  std::sort(sorted.begin(), sorted.end());
  return std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end();
}

bool crosses_signal(const RoadNetwork& net, const Route& route) {
  return std::any_of(route.edges.begin(), route.edges.end(), [&](EdgeIndex e) { return net.edge(e).signalized; });
}

std::string route_to_string(const RoadNetwork& net, const Route& route) {
  std::string s;
  for (std::size_t i = 0; i < route.edges.size(); ++i) {
    if (i) s += ';';
    s += net.edge(route.edges[i]).id;
  }
  return s;
}

}  // namespace flow::roadnet
