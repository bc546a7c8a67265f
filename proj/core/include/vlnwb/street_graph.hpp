#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace vlnwb {

using NodeIndex = int;

enum class Action { Left, Right, Forward, Stop };

constexpr int kActionCount = 4;

const char* to_string(Action a);

// Undirected panorama graph with per-directed-edge compass bearings.
// Immutable after construction; safe to share across threads.
class NavGraph {
 public:
  struct Neighbor {
    NodeIndex to;
    double bearing;  // degrees in [0, 360), departure direction of this edge
  };

  struct EdgeRecord {
    std::string a, b;
    double bearing_ab = 0.0, bearing_ba = 0.0;
  };

  NavGraph() = default;  // empty placeholder; real graphs come from load/build

  static NavGraph load(const std::filesystem::path& path);
  static NavGraph build(const std::vector<std::string>& nodes, const std::vector<EdgeRecord>& edges);

  int node_count() const { return static_cast<int>(ids_.size()); }
  int edge_count() const { return edge_count_; }

  const std::string& id(NodeIndex n) const { return ids_.at(n); }
  bool has_node(const std::string& id) const { return index_.count(id) > 0; }
  NodeIndex index(const std::string& id) const;

  // Neighbors sorted by bearing ascending.
  std::span<const Neighbor> neighbors(NodeIndex n) const {
    return {adj_[n].data(), adj_[n].size()};
  }
  int degree(NodeIndex n) const { return static_cast<int>(adj_[n].size()); }
  bool adjacent(NodeIndex a, NodeIndex b) const;
  double bearing(NodeIndex from, NodeIndex to) const;

  // Minimum edge count between a and b; 0 iff a == b. Throws on unreachable
  // pairs (cannot happen on a validated, connected split).
  int shortest_path_len(NodeIndex a, NodeIndex b) const;

  // One BFS sweep from `src`; distances[v] = hops, -1 if unreachable.
  std::vector<int> hops_from(NodeIndex src) const;

 private:
  void validate() const;

  std::vector<std::string> ids_;
  std::unordered_map<std::string, NodeIndex> index_;
  std::vector<std::vector<Neighbor>> adj_;
  int edge_count_ = 0;
};

// (node, heading) pair: the heading always selects one outgoing edge of `node`.
struct AgentState {
  NodeIndex node = -1;
  double heading = 0.0;

  bool operator==(const AgentState&) const = default;
};

struct Trajectory {
  std::vector<AgentState> states;
  std::string route_id;

  const AgentState& start() const { return states.front(); }
  const AgentState& end() const { return states.back(); }
};

// Checked constructor: throws unless heading is one of the node's outgoing bearings.
AgentState make_state(const NavGraph& graph, NodeIndex node, double heading);

bool state_valid(const NavGraph& graph, const AgentState& s);

// Consecutive states graph-adjacent or equal-node; non-empty.
void validate_trajectory(const NavGraph& graph, const Trajectory& t);

// Action semantics:
//   Left/Right rotate the heading to the next outgoing bearing counter-/clockwise
//   (cyclic over the sorted bearing set). Forward moves along the selected edge;
//   the new heading is the destination's outgoing bearing closest in circular
//   angle to the arrival direction, ties resolved toward the smaller bearing.
//   Forward at a degree-1 node traverses back along the single edge. Stop is identity.
AgentState step(const NavGraph& graph, const AgentState& state, Action action);

// Minimal circular angle between two compass directions, in [0, 180].
double angular_diff(double a, double b);

using Policy = std::function<Action(std::span<const AgentState>)>;

// Applies policy until it returns Stop or max_steps actions were taken.
// The returned trajectory includes the start state.
Trajectory rollout(const NavGraph& graph, const AgentState& start, const Policy& policy,
                   int max_steps);

// Collapses consecutive equal-node states (rotations do not change position).
std::vector<NodeIndex> dedup_nodes(const Trajectory& t);

}  // namespace vlnwb
