#include "vlnwb/metrics.hpp"

#include <cmath>

#include "doctest.h"
#include "oracles.hpp"

using namespace vlnwb;

namespace {

NavGraph six_path() {
  // A-B-C-D-E-F straight line
  std::vector<NavGraph::EdgeRecord> edges;
  const std::vector<std::string> ids{"A", "B", "C", "D", "E", "F"};
  for (size_t i = 0; i + 1 < ids.size(); ++i) edges.push_back({ids[i], ids[i + 1], 0.0, 180.0});
  return NavGraph::build(ids, edges);
}

Trajectory node_traj(const NavGraph& g, const std::vector<std::string>& ids) {
  Trajectory t;
  for (const auto& id : ids) {
    const NodeIndex n = g.index(id);
    t.states.push_back({n, g.neighbors(n).front().bearing});
  }
  return t;
}

double hops(const NavGraph& g, NodeIndex a, NodeIndex b) {
  return static_cast<double>(g.shortest_path_len(a, b));
}

}  // namespace

TEST_CASE("task_completion: goal, adjacent, and two hops away") {
  const NavGraph g = six_path();
  const MetricConfig cfg;
  const Trajectory at_goal = node_traj(g, {"A", "B", "C"});
  CHECK(task_completion(at_goal, g.index("C"), g, cfg) == 1);
  CHECK(task_completion(at_goal, g.index("D"), g, cfg) == 1);  // adjacent counts
  CHECK(task_completion(at_goal, g.index("E"), g, cfg) == 0);
}

TEST_CASE("spd: base cases and BFS oracle on a random fixture") {
  const NavGraph g = six_path();
  const Trajectory t = node_traj(g, {"A", "B"});
  CHECK(spd(t, g.index("B"), g) == 0.0);
  CHECK(spd(t, g.index("C"), g) == 1.0);

  Rng rng(3);
  const NavGraph r = oracles::random_graph(rng, 6, 3);
  const auto edges = oracles::edge_list(r);
  for (int iter = 0; iter < 50; ++iter) {
    const Trajectory traj = oracles::random_trajectory(rng, r, 4);
    const NodeIndex goal = rng.uniform_int(r.node_count());
    CHECK(spd(traj, goal, r) ==
          static_cast<double>(oracles::bfs_hops(r.node_count(), edges, traj.end().node, goal)));
  }
}

TEST_CASE("levenshtein matches the full-matrix oracle on 1000 random pairs") {
  Rng rng(5);
  for (int iter = 0; iter < 1000; ++iter) {
    std::vector<int> a(rng.uniform_int(8)), b(rng.uniform_int(8));
    for (auto& x : a) x = rng.uniform_int(4);
    for (auto& x : b) x = rng.uniform_int(4);
    CHECK(levenshtein(a, b) == oracles::lev_full_matrix(a, b));
  }
}

TEST_CASE("sed: identity, failure gate, and the substitution example") {
  const NavGraph g = six_path();
  const MetricConfig cfg;
  const Trajectory ref = node_traj(g, {"A", "B", "C"});
  CHECK(sed(ref, ref, g.index("C"), g, cfg) == 1.0);

  const Trajectory lost = node_traj(g, {"A", "B", "A"});  // ends 2 hops from C
  CHECK(sed(lost, ref, g.index("C"), g, cfg) == 0.0);

  // [A,B,C] vs [A,D,C] over ids: one substitution, max length 3
  const std::vector<int> p{0, 1, 2}, r{0, 3, 2};
  const int lev = levenshtein(p, r);
  CHECK(lev == oracles::lev_full_matrix(p, r));
  CHECK(lev == 1);
  // successful pred differing in the middle node: build on a cycle where both are paths
  const NavGraph sq = NavGraph::build({"A", "B", "C", "D"},
                                      {{"A", "B", 0.0, 180.0},
                                       {"B", "C", 90.0, 270.0},
                                       {"A", "D", 90.0, 270.0},
                                       {"D", "C", 0.0, 180.0}});
  const Trajectory pred = node_traj(sq, {"A", "B", "C"});
  const Trajectory ref2 = node_traj(sq, {"A", "D", "C"});
  CHECK(sed(pred, ref2, sq.index("C"), sq, cfg) == doctest::Approx(1.0 - 1.0 / 3.0));
}

TEST_CASE("cls: identity, formula oracle, and the length penalty") {
  const NavGraph g = six_path();
  const MetricConfig cfg;
  const Trajectory ref = node_traj(g, {"A", "B", "C", "D", "E"});
  CHECK(cls(ref, ref, g, cfg) == 1.0);

  // single start node against the 5-node reference: evaluate the formula directly
  const Trajectory start_only = node_traj(g, {"A"});
  double coverage = 0.0;
  for (const char* id : {"A", "B", "C", "D", "E"})
    coverage += std::exp(-hops(g, g.index(id), g.index("A")) / cfg.dtw_distance_scale);
  coverage /= 5.0;
  const double epl = coverage * 4.0;  // reference length in hops
  const double expected = coverage * (epl / (epl + std::fabs(epl - 0.0)));
  CHECK(cls(start_only, ref, g, cfg) == doctest::Approx(expected));

  // pred covers ref but walks it twice: coverage 1, length penalty < 1
  const Trajectory doubled = node_traj(g, {"A", "B", "C", "D", "E", "D", "C", "B", "A"});
  const double c = cls(doubled, ref, g, cfg);
  CHECK(c < 1.0);
  CHECK(c > 0.0);
}

TEST_CASE("cls: wandering past a covering path only lowers the score") {
  // once pred covers ref at distance zero, coverage is pinned at 1 and every
  // appended node just stretches the length penalty
  Rng rng(17);
  const MetricConfig cfg;
  for (int iter = 0; iter < 200; ++iter) {
    const NavGraph g = oracles::random_graph(rng, 7, 4);
    const Trajectory ref = oracles::random_trajectory(rng, g, 1 + rng.uniform_int(4));
    Trajectory pred = ref;
    double prev = cls(pred, ref, g, cfg);
    CHECK(prev == 1.0);
    for (int extra = 0; extra < 4; ++extra) {
      pred.states.push_back(step(g, pred.states.back(),
                                 rng.uniform_int(2) ? Action::Forward : Action::Left));
      const double cur = cls(pred, ref, g, cfg);
      CHECK(cur <= prev + 1e-12);
      prev = cur;
    }
  }
}

TEST_CASE("ndtw: identity and single-node base cases") {
  const NavGraph g = six_path();
  const MetricConfig cfg;
  for (int len = 1; len <= 5; ++len) {
    std::vector<std::string> ids;
    for (int i = 0; i < len; ++i) ids.push_back(std::string(1, static_cast<char>('A' + i)));
    const Trajectory t = node_traj(g, ids);
    CHECK(ndtw(t, t, g, cfg) == 1.0);
  }
  const Trajectory single = node_traj(g, {"B"});
  CHECK(ndtw(single, single, g, cfg) == 1.0);
}

TEST_CASE("dtw equals the exhaustive-alignment oracle on random short pairs") {
  Rng rng(23);
  const NavGraph g = oracles::random_graph(rng, 6, 4);
  auto cost = [&](int a, int b) { return hops(g, a, b); };
  for (int iter = 0; iter < 300; ++iter) {
    std::vector<int> a(1 + rng.uniform_int(6)), b(1 + rng.uniform_int(6));
    for (auto& x : a) x = rng.uniform_int(g.node_count());
    for (auto& x : b) x = rng.uniform_int(g.node_count());
    CHECK(dtw_cost(a, b, cost) == doctest::Approx(oracles::dtw_exhaustive(a, b, cost)));
  }
}

TEST_CASE("dtw: every sequence pair up to length 3 over a 6-node graph, exhaustively") {
  Rng rng(24);
  const NavGraph g = oracles::random_graph(rng, 6, 4);
  auto cost = [&](int a, int b) { return hops(g, a, b); };

  std::vector<std::vector<int>> seqs;
  for (int len = 1; len <= 3; ++len) {
    std::vector<int> s(len, 0);
    while (true) {
      seqs.push_back(s);
      int pos = len - 1;
      while (pos >= 0 && ++s[pos] == g.node_count()) s[pos--] = 0;
      if (pos < 0) break;
    }
  }
  REQUIRE(seqs.size() == 6 + 36 + 216);
  int mismatches = 0;
  for (const auto& a : seqs)
    for (const auto& b : seqs)
      if (dtw_cost(a, b, cost) != oracles::dtw_exhaustive(a, b, cost)) ++mismatches;
  CHECK(mismatches == 0);
}

TEST_CASE("ndtw is 1 exactly when the dtw cost is zero") {
  Rng rng(25);
  const MetricConfig cfg;
  for (int iter = 0; iter < 200; ++iter) {
    const NavGraph g = oracles::random_graph(rng, 6, 3);
    const Trajectory pred = oracles::random_trajectory(rng, g, rng.uniform_int(6));
    const Trajectory ref = oracles::random_trajectory(rng, g, rng.uniform_int(6));
    const auto p = dedup_nodes(pred), r = dedup_nodes(ref);
    const double cost = dtw_cost(p, r, [&](int a, int b) { return hops(g, a, b); });
    const double score = ndtw(pred, ref, g, cfg);
    CHECK((score == 1.0) == (cost == 0.0));
    CHECK(score > 0.0);
    CHECK(score <= 1.0);
  }
}

TEST_CASE("ndtw and sdtw are invariant under structure-preserving relabeling") {
  Rng rng(29);
  const MetricConfig cfg;
  const NavGraph g = oracles::random_graph(rng, 6, 3);

  // same structure, permuted ids: node k of g becomes "m<perm[k]>"
  std::vector<int> perm(g.node_count());
  for (size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<int>(i);
  for (int i = static_cast<int>(perm.size()) - 1; i > 0; --i)
    std::swap(perm[i], perm[rng.uniform_int(i + 1)]);

  std::vector<std::string> new_ids(g.node_count());
  for (int k = 0; k < g.node_count(); ++k) new_ids[k] = "m" + std::to_string(perm[k]);
  std::vector<NavGraph::EdgeRecord> edges;
  for (int u = 0; u < g.node_count(); ++u)
    for (const auto& nb : g.neighbors(u))
      if (u < nb.to)
        edges.push_back({new_ids[u], new_ids[nb.to], nb.bearing, g.bearing(nb.to, u)});
  const NavGraph h = NavGraph::build(new_ids, edges);

  auto map_traj = [&](const Trajectory& t) {
    Trajectory out;
    for (const auto& s : t.states) out.states.push_back({h.index(new_ids[s.node]), s.heading});
    return out;
  };

  for (int iter = 0; iter < 50; ++iter) {
    const Trajectory pred = oracles::random_trajectory(rng, g, 4);
    const Trajectory ref = oracles::random_trajectory(rng, g, 4);
    CHECK(ndtw(pred, ref, g, cfg) == ndtw(map_traj(pred), map_traj(ref), h, cfg));
    const NodeIndex goal = ref.end().node;
    CHECK(sdtw(pred, ref, goal, g, cfg) ==
          sdtw(map_traj(pred), map_traj(ref), map_traj(ref).end().node, h, cfg));
  }
}

TEST_CASE("sdtw: gate and composition") {
  const NavGraph g = six_path();
  const MetricConfig cfg;
  const Trajectory ref = node_traj(g, {"A", "B", "C"});
  CHECK(sdtw(ref, ref, g.index("C"), g, cfg) == 1.0);
  const Trajectory lost = node_traj(g, {"A", "B", "A"});
  CHECK(sdtw(lost, ref, g.index("C"), g, cfg) == 0.0);

  Rng rng(31);
  const NavGraph r = oracles::random_graph(rng, 6, 3);
  for (int iter = 0; iter < 50; ++iter) {
    const Trajectory pred = oracles::random_trajectory(rng, r, 4);
    const Trajectory refr = oracles::random_trajectory(rng, r, 4);
    const NodeIndex goal = refr.end().node;
    CHECK(sdtw(pred, refr, goal, r, cfg) ==
          task_completion(pred, goal, r, cfg) * ndtw(pred, refr, r, cfg));
  }
}

TEST_CASE("aggregate: single sample, split SPD, and recomputation") {
  SampleMetrics one{1, 0, 1, 1, 1, 1};
  const MetricSummary s1 = aggregate(std::vector<SampleMetrics>{one});
  CHECK(s1.mean.tc == 1.0);
  CHECK(s1.mean.spd == 0.0);
  REQUIRE(s1.success_spd.has_value());
  CHECK(*s1.success_spd == 0.0);
  CHECK_FALSE(s1.failure_spd.has_value());

  std::vector<SampleMetrics> two{{1, 0, 1, 1, 1, 1}, {0, 10, 0, 0.5, 0.5, 0}};
  const MetricSummary s2 = aggregate(two);
  REQUIRE(s2.success_spd.has_value());
  REQUIRE(s2.failure_spd.has_value());
  CHECK(*s2.success_spd == 0.0);
  CHECK(*s2.failure_spd == 10.0);
  CHECK(s2.mean.spd == 5.0);

  Rng rng(37);
  std::vector<SampleMetrics> many;
  for (int i = 0; i < 100; ++i) {
    SampleMetrics m;
    m.tc = rng.uniform_int(2);
    m.spd = rng.uniform_int(20);
    m.sed = m.tc * rng.uniform();
    m.cls = rng.uniform();
    m.ndtw = rng.uniform();
    m.sdtw = m.tc * m.ndtw;
    many.push_back(m);
  }
  const MetricSummary s = aggregate(many);
  double tc = 0, spd_sum = 0;
  for (const auto& m : many) {
    tc += m.tc;
    spd_sum += m.spd;
  }
  CHECK(s.mean.tc == doctest::Approx(tc / 100.0));
  CHECK(s.mean.spd == doctest::Approx(spd_sum / 100.0));
  CHECK(s.sample_count == 100);
}

TEST_CASE("evaluate_sample: identity trajectory scores perfectly") {
  Rng rng(41);
  const MetricConfig cfg;
  for (int iter = 0; iter < 30; ++iter) {
    const NavGraph g = oracles::random_graph(rng, 6, 3);
    const Trajectory t = oracles::random_trajectory(rng, g, 1 + rng.uniform_int(5));
    const SampleMetrics m = evaluate_sample(t, t, t.end().node, g, cfg);
    CHECK(m.tc == 1.0);
    CHECK(m.spd == 0.0);
    CHECK(m.sed == 1.0);
    CHECK(m.cls == 1.0);
    CHECK(m.ndtw == 1.0);
    CHECK(m.sdtw == 1.0);
  }
}

TEST_CASE("config validation") {
  const NavGraph g = six_path();
  const Trajectory t = node_traj(g, {"A"});
  MetricConfig bad;
  bad.success_threshold_hops = 0;
  CHECK_THROWS_AS(task_completion(t, 0, g, bad), std::runtime_error);
  bad = {};
  bad.dtw_distance_scale = 0.0;
  CHECK_THROWS_AS(ndtw(t, t, g, bad), std::runtime_error);
}
