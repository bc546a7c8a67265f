#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "vlnwb/dataset.hpp"
#include "vlnwb/navigator.hpp"
#include "vlnwb/street_graph.hpp"

namespace vlnwb {

// Size spec for the synthetic fixture world. The world carries a planted
// signal: every (node, heading) state's feature map encodes the action the
// world policy takes there, inside the heading-centered crop window, so the
// navigation task is learnable from features alone.
struct FixtureSpec {
  int nodes = 30;
  int extra_edges = 8;
  int goals = 4;
  double min_bearing_separation = 30.0;  // degrees between outgoing edges

  int external_routes = 200;  // machine-style instruction split
  int target_train_routes = 50;
  int target_dev_routes = 25;
  int min_route_nodes = 3;
  int max_route_nodes = 8;
  int max_turns = 4;

  int nav_c = 4, nav_h = 8, nav_w = 32;  // per-panorama feature map
  int d_v = 16;                          // speaker visual dim per slice
  double feature_noise = 0.3;
  double planted_signal = 2.0;
  int signal_half_width = 1;  // columns around the bearing column

  void check() const;
};

struct FixtureOutput {
  std::filesystem::path world_dir;
  std::filesystem::path external_manifest;
  std::filesystem::path target_train_manifest;
  std::filesystem::path target_dev_manifest;
};

FixtureOutput gen_fixtures(const std::filesystem::path& out_dir, uint64_t seed,
                           const FixtureSpec& spec);

// The deterministic world policy the fixtures are rolled from: Stop on a goal
// node, Forward along the next hop toward the nearest goal, otherwise the
// shorter rotation toward that hop (clockwise on ties).
class WorldPolicy {
 public:
  WorldPolicy(const NavGraph& graph, std::vector<NodeIndex> goals);
  Action operator()(const AgentState& s) const;
  bool is_goal(NodeIndex n) const;
  NodeIndex next_hop(NodeIndex n) const;

 private:
  const NavGraph& graph_;
  std::vector<char> goal_;
  std::vector<NodeIndex> next_hop_;
};

// Ordered rotation-run directions of a gold action sequence (one signal per
// maximal Left/Right run).
std::vector<GuidingSignal> turn_sequence(const std::vector<Action>& actions);

}  // namespace vlnwb
