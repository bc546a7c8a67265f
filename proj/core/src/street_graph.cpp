#include "vlnwb/street_graph.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace vlnwb {

const char* to_string(Action a) {
  switch (a) {
    case Action::Left: return "LEFT";
    case Action::Right: return "RIGHT";
    case Action::Forward: return "FORWARD";
    case Action::Stop: return "STOP";
  }
  return "?";
}

double angular_diff(double a, double b) {
  double d = std::fabs(a - b);
  d = std::fmod(d, 360.0);
  return d > 180.0 ? 360.0 - d : d;
}

NodeIndex NavGraph::index(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw std::runtime_error("graph: unknown node id '" + id + "'");
  return it->second;
}

bool NavGraph::adjacent(NodeIndex a, NodeIndex b) const {
  for (const auto& n : adj_[a])
    if (n.to == b) return true;
  return false;
}

double NavGraph::bearing(NodeIndex from, NodeIndex to) const {
  for (const auto& n : adj_[from])
    if (n.to == to) return n.bearing;
  throw std::runtime_error("graph: no edge " + id(from) + " -> " + id(to));
}

NavGraph NavGraph::build(const std::vector<std::string>& nodes,
                         const std::vector<EdgeRecord>& edges) {
  NavGraph g;
  for (const auto& id : nodes) {
    if (g.index_.count(id)) throw std::runtime_error("graph: duplicate node '" + id + "'");
    g.index_[id] = static_cast<NodeIndex>(g.ids_.size());
    g.ids_.push_back(id);
  }
  g.adj_.resize(g.ids_.size());
  std::set<std::pair<NodeIndex, NodeIndex>> seen;
  for (const auto& e : edges) {
    const NodeIndex a = g.index(e.a);
    const NodeIndex b = g.index(e.b);
    if (a == b) throw std::runtime_error("graph: self-loop at '" + e.a + "'");
    auto key = std::minmax(a, b);
    if (!seen.insert({key.first, key.second}).second)
      throw std::runtime_error("graph: duplicate edge " + e.a + " -- " + e.b);
    for (double deg : {e.bearing_ab, e.bearing_ba})
      if (!(deg >= 0.0 && deg < 360.0))
        throw std::runtime_error("graph: bearing out of [0,360) on edge " + e.a + " -- " + e.b);
    g.adj_[a].push_back({b, e.bearing_ab});
    g.adj_[b].push_back({a, e.bearing_ba});
    ++g.edge_count_;
  }
  for (auto& nbrs : g.adj_)
    std::sort(nbrs.begin(), nbrs.end(),
              [](const Neighbor& x, const Neighbor& y) { return x.bearing < y.bearing; });
  g.validate();
  return g;
}

void NavGraph::validate() const {
  for (NodeIndex n = 0; n < node_count(); ++n) {
    if (adj_[n].empty())
      throw std::runtime_error("graph: isolated node '" + ids_[n] + "'");
    for (size_t i = 1; i < adj_[n].size(); ++i)
      if (adj_[n][i].bearing == adj_[n][i - 1].bearing)
        throw std::runtime_error("graph: duplicate outgoing bearing at '" + ids_[n] +
                                 "' (headings must select a unique edge)");
  }
  // connectivity
  if (node_count() > 0) {
    std::vector<char> seen(node_count(), 0);
    std::deque<NodeIndex> q{0};
    seen[0] = 1;
    int reached = 1;
    while (!q.empty()) {
      NodeIndex u = q.front();
      q.pop_front();
      for (const auto& nb : adj_[u])
        if (!seen[nb.to]) {
          seen[nb.to] = 1;
          ++reached;
          q.push_back(nb.to);
        }
    }
    if (reached != node_count()) {
      for (NodeIndex n = 0; n < node_count(); ++n)
        if (!seen[n])
          throw std::runtime_error("graph: not connected, node '" + ids_[n] + "' unreachable");
    }
  }
}

NavGraph NavGraph::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("graph: cannot open " + path.string());
  std::vector<std::string> nodes;
  std::vector<EdgeRecord> edges;
  std::set<std::string> node_seen;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    const std::string where = path.filename().string() + ":" + std::to_string(lineno);
    if (kind == "NODE") {
      std::string id;
      if (!(ls >> id)) throw std::runtime_error("graph: bad NODE record at " + where);
      if (!node_seen.insert(id).second)
        throw std::runtime_error("graph: duplicate NODE record '" + id + "' at " + where);
      nodes.push_back(id);
    } else if (kind == "EDGE") {
      EdgeRecord e;
      if (!(ls >> e.a >> e.b >> e.bearing_ab >> e.bearing_ba))
        throw std::runtime_error("graph: bad EDGE record at " + where);
      edges.push_back(e);
    } else {
      throw std::runtime_error("graph: unknown record '" + kind + "' at " + where);
    }
  }
  return build(nodes, edges);  // build() reports duplicate edges and invariants
}

std::vector<int> NavGraph::hops_from(NodeIndex src) const {
  std::vector<int> dist(node_count(), -1);
  std::deque<NodeIndex> q{src};
  dist[src] = 0;
  while (!q.empty()) {
    NodeIndex u = q.front();
    q.pop_front();
    for (const auto& nb : adj_[u])
      if (dist[nb.to] < 0) {
        dist[nb.to] = dist[u] + 1;
        q.push_back(nb.to);
      }
  }
  return dist;
}

int NavGraph::shortest_path_len(NodeIndex a, NodeIndex b) const {
  if (a == b) return 0;
  std::vector<int> dist(node_count(), -1);
  std::deque<NodeIndex> q{a};
  dist[a] = 0;
  while (!q.empty()) {
    NodeIndex u = q.front();
    q.pop_front();
    for (const auto& nb : adj_[u]) {
      if (dist[nb.to] >= 0) continue;
      dist[nb.to] = dist[u] + 1;
      if (nb.to == b) return dist[nb.to];
      q.push_back(nb.to);
    }
  }
  throw std::runtime_error("graph: nodes '" + id(a) + "' and '" + id(b) + "' are not connected");
}

AgentState make_state(const NavGraph& graph, NodeIndex node, double heading) {
  AgentState s{node, heading};
  if (!state_valid(graph, s))
    throw std::runtime_error("state: heading " + std::to_string(heading) +
                             " is not an outgoing bearing of '" + graph.id(node) + "'");
  return s;
}

bool state_valid(const NavGraph& graph, const AgentState& s) {
  if (s.node < 0 || s.node >= graph.node_count()) return false;
  for (const auto& nb : graph.neighbors(s.node))
    if (nb.bearing == s.heading) return true;
  return false;
}

void validate_trajectory(const NavGraph& graph, const Trajectory& t) {
  if (t.states.empty()) throw std::runtime_error("trajectory: empty (route " + t.route_id + ")");
  for (size_t i = 0; i < t.states.size(); ++i) {
    if (!state_valid(graph, t.states[i]))
      throw std::runtime_error("trajectory: invalid state at position " + std::to_string(i) +
                               " (route " + t.route_id + ")");
    if (i > 0) {
      const auto& prev = t.states[i - 1];
      const auto& cur = t.states[i];
      if (prev.node != cur.node && !graph.adjacent(prev.node, cur.node))
        throw std::runtime_error("trajectory: states " + std::to_string(i - 1) + " -> " +
                                 std::to_string(i) + " not adjacent (route " + t.route_id + ")");
    }
  }
}

namespace {

// Position of the current heading in the node's bearing-sorted neighbor list.
size_t heading_slot(const NavGraph& graph, const AgentState& s) {
  const auto nbrs = graph.neighbors(s.node);
  for (size_t i = 0; i < nbrs.size(); ++i)
    if (nbrs[i].bearing == s.heading) return i;
  throw std::runtime_error("state: heading does not select an edge at '" + graph.id(s.node) + "'");
}

}  // namespace

AgentState step(const NavGraph& graph, const AgentState& state, Action action) {
  const auto nbrs = graph.neighbors(state.node);
  switch (action) {
    case Action::Stop:
      return state;
    case Action::Left: {
      const size_t i = heading_slot(graph, state);
      const size_t j = (i + nbrs.size() - 1) % nbrs.size();
      return {state.node, nbrs[j].bearing};
    }
    case Action::Right: {
      const size_t i = heading_slot(graph, state);
      const size_t j = (i + 1) % nbrs.size();
      return {state.node, nbrs[j].bearing};
    }
    case Action::Forward: {
      const size_t i = heading_slot(graph, state);
      const NodeIndex dest = nbrs[i].to;
      const double arrival = state.heading;
      const auto dest_nbrs = graph.neighbors(dest);
      size_t best = 0;
      double best_diff = angular_diff(dest_nbrs[0].bearing, arrival);
      for (size_t k = 1; k < dest_nbrs.size(); ++k) {
        const double d = angular_diff(dest_nbrs[k].bearing, arrival);
        // strict <: on ties the earlier (smaller, list is bearing-sorted) bearing wins
        if (d < best_diff) {
          best = k;
          best_diff = d;
        }
      }
      return {dest, dest_nbrs[best].bearing};
    }
  }
  throw std::logic_error("step: unhandled action");
}

Trajectory rollout(const NavGraph& graph, const AgentState& start, const Policy& policy,
                   int max_steps) {
  if (max_steps < 1) throw std::runtime_error("rollout: max_steps must be >= 1");
  if (!state_valid(graph, start)) throw std::runtime_error("rollout: invalid start state");
  Trajectory t;
  t.states.push_back(start);
  for (int i = 0; i < max_steps; ++i) {
    const Action a = policy({t.states.data(), t.states.size()});
    if (a == Action::Stop) break;
    t.states.push_back(step(graph, t.states.back(), a));
  }
  return t;
}

std::vector<NodeIndex> dedup_nodes(const Trajectory& t) {
  std::vector<NodeIndex> out;
  for (const auto& s : t.states)
    if (out.empty() || out.back() != s.node) out.push_back(s.node);
  return out;
}

}  // namespace vlnwb
