#pragma once

// Test-only oracles, kept independent of the library's implementation paths:
// plain BFS over an edge list, the full-matrix edit-distance recurrence, DTW
// by explicit enumeration of every monotone alignment, and a central
// finite-difference gradient checker.

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <vector>

#include "vlnwb/rng.hpp"
#include "vlnwb/street_graph.hpp"
#include "vlnwb/tape.hpp"
#include "vlnwb/tensor.hpp"

namespace oracles {

// BFS hop count over an explicit undirected edge list.
inline int bfs_hops(int n_nodes, const std::vector<std::pair<int, int>>& edges, int a, int b) {
  std::vector<std::vector<int>> adj(n_nodes);
  for (const auto& [u, v] : edges) {
    adj[u].push_back(v);
    adj[v].push_back(u);
  }
  std::vector<int> dist(n_nodes, -1);
  std::deque<int> q{a};
  dist[a] = 0;
  while (!q.empty()) {
    const int u = q.front();
    q.pop_front();
    if (u == b) return dist[u];
    for (int w : adj[u])
      if (dist[w] < 0) {
        dist[w] = dist[u] + 1;
        q.push_back(w);
      }
  }
  return -1;
}

inline std::vector<std::pair<int, int>> edge_list(const vlnwb::NavGraph& g) {
  std::vector<std::pair<int, int>> edges;
  for (int u = 0; u < g.node_count(); ++u)
    for (const auto& nb : g.neighbors(u))
      if (u < nb.to) edges.push_back({u, nb.to});
  return edges;
}

// Full-matrix Levenshtein recurrence.
inline int lev_full_matrix(const std::vector<int>& a, const std::vector<int>& b) {
  const size_t n = a.size(), m = b.size();
  std::vector<std::vector<int>> d(n + 1, std::vector<int>(m + 1, 0));
  for (size_t i = 0; i <= n; ++i) d[i][0] = static_cast<int>(i);
  for (size_t j = 0; j <= m; ++j) d[0][j] = static_cast<int>(j);
  for (size_t i = 1; i <= n; ++i)
    for (size_t j = 1; j <= m; ++j)
      d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1,
                          d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
  return d[n][m];
}

// All monotone alignment paths from (0,0) to (n-1,m-1) with moves
// (1,0), (0,1), (1,1); each path is the list of visited cells.
inline void enumerate_alignments(int n, int m,
                                 std::vector<std::vector<std::pair<int, int>>>& out) {
  std::vector<std::pair<int, int>> path{{0, 0}};
  std::function<void(int, int)> rec = [&](int i, int j) {
    if (i == n - 1 && j == m - 1) {
      out.push_back(path);
      return;
    }
    const std::pair<int, int> moves[3] = {{1, 0}, {0, 1}, {1, 1}};
    for (const auto& [di, dj] : moves) {
      const int ni = i + di, nj = j + dj;
      if (ni >= n || nj >= m) continue;
      path.push_back({ni, nj});
      rec(ni, nj);
      path.pop_back();
    }
  };
  rec(0, 0);
}

inline double dtw_exhaustive(const std::vector<int>& a, const std::vector<int>& b,
                             const std::function<double(int, int)>& cost) {
  std::vector<std::vector<std::pair<int, int>>> paths;
  enumerate_alignments(static_cast<int>(a.size()), static_cast<int>(b.size()), paths);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& path : paths) {
    double total = 0.0;
    for (const auto& [i, j] : path) total += cost(a[i], b[j]);
    best = std::min(best, total);
  }
  return best;
}

// Random connected graph with planar-coordinate bearings, for property tests.
inline vlnwb::NavGraph random_graph(vlnwb::Rng& rng, int nodes, int extra_edges) {
  using vlnwb::NavGraph;
  while (true) {
    std::vector<std::pair<double, double>> xy;
    for (int i = 0; i < nodes; ++i) xy.push_back({rng.uniform(0.0, 100.0), rng.uniform(0.0, 100.0)});
    auto bearing = [&](int u, int v) {
      const double dx = xy[v].first - xy[u].first;
      const double dy = xy[v].second - xy[u].second;
      double deg = std::atan2(dx, dy) * 180.0 / 3.14159265358979323846;
      deg = std::fmod(deg + 360.0, 360.0);
      return deg >= 360.0 ? 0.0 : deg;
    };
    std::vector<std::string> ids;
    for (int i = 0; i < nodes; ++i) ids.push_back("n" + std::to_string(i));
    std::vector<NavGraph::EdgeRecord> edges;
    std::set<std::pair<int, int>> seen;
    auto add = [&](int u, int v) {
      if (u == v) return;
      const auto key = std::minmax(u, v);
      if (!seen.insert({key.first, key.second}).second) return;
      edges.push_back({ids[u], ids[v], bearing(u, v), bearing(v, u)});
    };
    for (int i = 1; i < nodes; ++i) add(i, rng.uniform_int(i));
    for (int k = 0; k < extra_edges; ++k) add(rng.uniform_int(nodes), rng.uniform_int(nodes));
    try {
      return NavGraph::build(ids, edges);
    } catch (const std::exception&) {
      // bearing collision; redraw coordinates
    }
  }
}

// Random valid trajectory: forward walks with occasional rotations.
inline vlnwb::Trajectory random_trajectory(vlnwb::Rng& rng, const vlnwb::NavGraph& g, int steps) {
  using namespace vlnwb;
  const NodeIndex start = rng.uniform_int(g.node_count());
  const auto nbrs = g.neighbors(start);
  AgentState s{start, nbrs[rng.uniform_int(static_cast<int>(nbrs.size()))].bearing};
  Trajectory t;
  t.states.push_back(s);
  for (int i = 0; i < steps; ++i) {
    const int pick = rng.uniform_int(3);
    const Action a = pick == 0 ? Action::Left : (pick == 1 ? Action::Right : Action::Forward);
    t.states.push_back(step(g, t.states.back(), a));
  }
  return t;
}

// Central finite differences against the tape's reverse-mode gradients.
// `build` reconstructs the scalar loss from the store's current values.
inline double finite_diff_max_rel_err(vlnwb::ParamStore& store,
                                      const std::function<vlnwb::Var(vlnwb::Tape&)>& build,
                                      double eps = 1e-5, int max_elems_per_param = -1) {
  using namespace vlnwb;
  store.zero_grads();
  std::map<std::string, std::vector<Real>> analytic;
  {
    Tape tape;
    const Var loss = build(tape);
    tape.backward(loss);
    for (const auto& name : store.names()) analytic[name] = store.at(name).grad;
  }
  auto eval = [&] {
    Tape tape;
    return tape.scalar_value(build(tape));
  };
  double max_rel = 0.0;
  for (const auto& name : store.names()) {
    Tensor& p = store.at(name);
    const size_t n = p.data.size();
    size_t stride = 1;
    if (max_elems_per_param > 0 && n > static_cast<size_t>(max_elems_per_param))
      stride = n / max_elems_per_param;
    for (size_t i = 0; i < n; i += stride) {
      const Real saved = p.data[i];
      p.data[i] = saved + eps;
      const double up = eval();
      p.data[i] = saved - eps;
      const double down = eval();
      p.data[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[name][i];
      const double denom = std::max({1e-6, std::fabs(a), std::fabs(numeric)});
      max_rel = std::max(max_rel, std::fabs(a - numeric) / denom);
    }
  }
  return max_rel;
}

}  // namespace oracles
