#include "vlnwb/fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <set>
#include <stdexcept>

#include "json.hpp"
#include "vlnwb/speaker.hpp"

namespace vlnwb {

void FixtureSpec::check() const {
  if (nodes < 4 || goals < 1 || goals >= nodes)
    throw std::runtime_error("fixtures: need at least 4 nodes and 1 <= goals < nodes");
  if (min_route_nodes < 2 || max_route_nodes < min_route_nodes)
    throw std::runtime_error("fixtures: bad route length range");
  if (nav_w % 8 != 0) throw std::runtime_error("fixtures: nav_w must divide by 8");
  if (nav_h % kActionCount != 0)
    throw std::runtime_error("fixtures: nav_h must divide by 4 (one row band per action)");
  if (external_routes < 0 || target_train_routes < 1 || target_dev_routes < 1)
    throw std::runtime_error("fixtures: bad route counts");
  if (!(feature_noise >= 0.0) || !(planted_signal > 0.0))
    throw std::runtime_error("fixtures: bad feature parameters");
}

WorldPolicy::WorldPolicy(const NavGraph& graph, std::vector<NodeIndex> goals)
    : graph_(graph), goal_(graph.node_count(), 0), next_hop_(graph.node_count(), -1) {
  if (goals.empty()) throw std::runtime_error("fixtures: no goal nodes");
  std::vector<int> dist(graph.node_count(), -1);
  std::deque<NodeIndex> q;
  for (NodeIndex g : goals) {
    goal_[g] = 1;
    dist[g] = 0;
    q.push_back(g);
  }
  while (!q.empty()) {
    const NodeIndex u = q.front();
    q.pop_front();
    for (const auto& nb : graph.neighbors(u))
      if (dist[nb.to] < 0) {
        dist[nb.to] = dist[u] + 1;
        q.push_back(nb.to);
      }
  }
  for (NodeIndex u = 0; u < graph.node_count(); ++u) {
    if (goal_[u]) continue;
    // next hop: the bearing-sorted neighbor that strictly reduces goal distance
    for (const auto& nb : graph.neighbors(u))
      if (dist[nb.to] >= 0 && dist[nb.to] < dist[u]) {
        next_hop_[u] = nb.to;
        break;
      }
    if (next_hop_[u] < 0) throw std::runtime_error("fixtures: node without progress edge");
  }
}

bool WorldPolicy::is_goal(NodeIndex n) const { return goal_[n] != 0; }
NodeIndex WorldPolicy::next_hop(NodeIndex n) const { return next_hop_[n]; }

Action WorldPolicy::operator()(const AgentState& s) const {
  if (goal_[s.node]) return Action::Stop;
  const double target = graph_.bearing(s.node, next_hop_[s.node]);
  if (s.heading == target) return Action::Forward;
  // count rotation steps each way around the sorted bearing cycle
  const auto nbrs = graph_.neighbors(s.node);
  int cur = -1, tgt = -1;
  for (size_t i = 0; i < nbrs.size(); ++i) {
    if (nbrs[i].bearing == s.heading) cur = static_cast<int>(i);
    if (nbrs[i].bearing == target) tgt = static_cast<int>(i);
  }
  if (cur < 0 || tgt < 0) throw std::runtime_error("fixtures: state off the bearing set");
  const int k = static_cast<int>(nbrs.size());
  const int cw = (tgt - cur + k) % k;
  const int ccw = (cur - tgt + k) % k;
  return cw <= ccw ? Action::Right : Action::Left;
}

std::vector<GuidingSignal> turn_sequence(const std::vector<Action>& actions) {
  std::vector<GuidingSignal> out;
  for (size_t i = 0; i < actions.size(); ++i) {
    const Action a = actions[i];
    if (a != Action::Left && a != Action::Right) continue;
    const bool run_start = i == 0 || actions[i - 1] != a;
    if (run_start) out.push_back(a == Action::Left ? GuidingSignal::Left : GuidingSignal::Right);
  }
  return out;
}

namespace {

struct WorldGraph {
  NavGraph graph;
  std::vector<std::pair<double, double>> coords;
  std::vector<NavGraph::EdgeRecord> edges;
  std::vector<std::string> node_ids;
};

double compass_bearing(double dx, double dy) {
  // x east, y north; 0 = north, 90 = east
  double deg = std::atan2(dx, dy) * 180.0 / 3.14159265358979323846;
  deg = std::fmod(deg + 360.0, 360.0);
  return deg >= 360.0 ? 0.0 : deg;
}

std::string node_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "p%03d", i);
  return buf;
}

// Random connected graph with a minimum angular separation between the
// outgoing bearings at every node (headings must be unambiguous and the
// planted signal windows must not collide).
WorldGraph build_world_graph(Rng& rng, const FixtureSpec& spec) {
  for (int attempt = 0; attempt < 200; ++attempt) {
    WorldGraph w;
    w.coords.clear();
    for (int i = 0; i < spec.nodes; ++i)
      w.coords.push_back({rng.uniform(0.0, 100.0), rng.uniform(0.0, 100.0)});
    for (int i = 0; i < spec.nodes; ++i) w.node_ids.push_back(node_name(i));

    std::vector<std::vector<double>> bearings(spec.nodes);
    std::set<std::pair<int, int>> edge_set;
    auto separation_ok = [&](int u, double b) {
      for (double e : bearings[u]) {
        double d = std::fabs(e - b);
        d = std::min(d, 360.0 - d);
        if (d < spec.min_bearing_separation) return false;
      }
      return true;
    };
    auto try_add = [&](int u, int v) {
      if (u == v) return false;
      auto key = std::minmax(u, v);
      if (edge_set.count({key.first, key.second})) return false;
      const double dx = w.coords[v].first - w.coords[u].first;
      const double dy = w.coords[v].second - w.coords[u].second;
      const double buv = compass_bearing(dx, dy);
      const double bvu = compass_bearing(-dx, -dy);
      if (!separation_ok(u, buv) || !separation_ok(v, bvu)) return false;
      bearings[u].push_back(buv);
      bearings[v].push_back(bvu);
      edge_set.insert({key.first, key.second});
      w.edges.push_back({w.node_ids[u], w.node_ids[v], buv, bvu});
      return true;
    };

    bool failed = false;
    for (int i = 1; i < spec.nodes && !failed; ++i) {
      bool attached = false;
      for (int tries = 0; tries < 50 && !attached; ++tries)
        attached = try_add(i, rng.uniform_int(i));
      failed = !attached;
    }
    if (failed) continue;
    int added = 0;
    for (int tries = 0; tries < spec.extra_edges * 20 && added < spec.extra_edges; ++tries)
      if (try_add(rng.uniform_int(spec.nodes), rng.uniform_int(spec.nodes))) ++added;

    try {
      w.graph = NavGraph::build(w.node_ids, w.edges);
    } catch (const std::exception&) {
      continue;
    }
    return w;
  }
  throw std::runtime_error("fixtures: could not build a separated world graph");
}

std::vector<NodeIndex> pick_goals(Rng& rng, int nodes, int goals) {
  std::set<NodeIndex> chosen;
  while (static_cast<int>(chosen.size()) < goals) chosen.insert(rng.uniform_int(nodes));
  return {chosen.begin(), chosen.end()};
}

// Rolls the world policy from (start, heading) until Stop.
Trajectory roll_policy(const NavGraph& graph, const WorldPolicy& policy, NodeIndex start,
                       double heading, int cap) {
  Trajectory t;
  t.states.push_back({start, heading});
  for (int i = 0; i < cap; ++i) {
    const Action a = policy(t.states.back());
    if (a == Action::Stop) break;
    t.states.push_back(step(graph, t.states.back(), a));
  }
  return t;
}

const char* kNouns[] = {"light",  "intersection", "awning",  "scaffolding", "corner",
                        "bench",  "hydrant",      "tree",    "sign",        "store",
                        "fence",  "crosswalk",    "bridge",  "gate",        "fountain",
                        "statue", "mailbox",      "planter", "archway",     "mural"};
const char* kAdjectives[] = {"red",  "blue",  "green", "tall",   "small",
                             "big",  "white", "black", "narrow", "wide"};
const char* kDirections[] = {"north", "south", "east", "west", "northwest", "northeast"};
const char* kStreetLetters[] = {"E", "W", "N", "S"};
const char* kStreetTypes[] = {"St", "Ave"};

struct TaggedTok {
  std::string text;
  PosTag tag;
};

void append(std::vector<TaggedTok>& out, std::initializer_list<TaggedTok> toks) {
  out.insert(out.end(), toks);
}

std::string ordinal(int n) {
  const int tens = n % 100;
  const char* suf = "th";
  if (tens / 10 != 1) {
    if (n % 10 == 1) suf = "st";
    if (n % 10 == 2) suf = "nd";
    if (n % 10 == 3) suf = "rd";
  }
  return std::to_string(n) + suf;
}

InstructionRecord make_instruction(Rng& rng, const std::string& route_id, Style style,
                                   const std::vector<GuidingSignal>& turns) {
  auto noun = [&] { return kNouns[rng.uniform_int(static_cast<int>(std::size(kNouns)))]; };
  auto adj = [&] { return kAdjectives[rng.uniform_int(static_cast<int>(std::size(kAdjectives)))]; };

  std::vector<TaggedTok> toks;

  if (style == Style::Human) {
    switch (rng.uniform_int(3)) {
      case 0:
        append(toks, {{"go", PosTag::VB}, {"straight", PosTag::RB}, {"down", PosTag::IN},
                      {"the", PosTag::DT}, {noun(), PosTag::NN}, {".", PosTag::PUNCT}});
        break;
      case 1:
        append(toks, {{"walk", PosTag::VB}, {"along", PosTag::IN}, {"the", PosTag::DT},
                      {noun(), PosTag::NN}, {".", PosTag::PUNCT}});
        break;
      default:
        append(toks, {{"head", PosTag::VB}, {"toward", PosTag::IN}, {"the", PosTag::DT},
                      {adj(), PosTag::JJ}, {noun(), PosTag::NN}, {".", PosTag::PUNCT}});
    }
    for (const GuidingSignal s : turns) {
      const char* dir = s == GuidingSignal::Left ? "left" : "right";
      if (rng.uniform_int(2) == 0)
        append(toks, {{"turn", PosTag::VB}, {dir, PosTag::NN}, {"at", PosTag::IN},
                      {"the", PosTag::DT}, {noun(), PosTag::NN}, {".", PosTag::PUNCT}});
      else
        append(toks, {{"turn", PosTag::VB}, {dir, PosTag::NN}, {"past", PosTag::IN},
                      {"the", PosTag::DT}, {adj(), PosTag::JJ}, {noun(), PosTag::NN},
                      {".", PosTag::PUNCT}});
    }
    if (rng.uniform_int(2) == 0)
      append(toks, {{"stop", PosTag::VB}, {"at", PosTag::IN}, {"the", PosTag::DT},
                    {noun(), PosTag::NN}, {".", PosTag::PUNCT}});
    else
      append(toks, {{"stop", PosTag::VB}, {"near", PosTag::IN}, {"the", PosTag::DT},
                    {adj(), PosTag::JJ}, {noun(), PosTag::NN}, {".", PosTag::PUNCT}});
  } else {
    auto street = [&]() -> std::pair<std::string, std::string> {
      return {ordinal(1 + rng.uniform_int(40)),
              kStreetTypes[rng.uniform_int(static_cast<int>(std::size(kStreetTypes)))]};
    };
    const char* dir = kDirections[rng.uniform_int(static_cast<int>(std::size(kDirections)))];
    const char* letter = kStreetLetters[rng.uniform_int(static_cast<int>(std::size(kStreetLetters)))];
    auto [ord0, st0] = street();
    append(toks, {{"head", PosTag::VB}, {dir, PosTag::RB}, {"on", PosTag::IN},
                  {letter, PosTag::NNP}, {ord0, PosTag::CD}, {st0, PosTag::NNP},
                  {".", PosTag::PUNCT}});
    for (const GuidingSignal s : turns) {
      const char* d = s == GuidingSignal::Left ? "left" : "right";
      auto [ordn, stn] = street();
      append(toks, {{"turn", PosTag::VB}, {d, PosTag::NN}, {"onto", PosTag::IN},
                    {ordn, PosTag::CD}, {stn, PosTag::NNP}, {".", PosTag::PUNCT}});
    }
    append(toks, {{"the", PosTag::DT}, {"destination", PosTag::NN}, {"is", PosTag::VBZ},
                  {"on", PosTag::IN}, {"the", PosTag::DT}, {noun(), PosTag::NN},
                  {".", PosTag::PUNCT}});
  }

  InstructionRecord rec;
  rec.route_id = route_id;
  rec.style = style;
  for (const auto& t : toks) {
    if (!rec.text.empty()) rec.text += ' ';
    rec.text += t.text;
    rec.tokens.push_back(t.text);
    rec.tags.push_back(to_string(t.tag));
  }
  return rec;
}

}  // namespace

FixtureOutput gen_fixtures(const std::filesystem::path& out_dir, uint64_t seed,
                           const FixtureSpec& spec) {
  spec.check();
  std::filesystem::create_directories(out_dir);
  Rng rng(seed);

  const WorldGraph world = build_world_graph(rng, spec);
  const NavGraph& graph = world.graph;
  const auto goals = pick_goals(rng, spec.nodes, spec.goals);
  const WorldPolicy policy(graph, goals);

  // graph file; bearings at full round-trip precision so reloaded bearings
  // bit-match the headings stored in the trajectory files
  const auto graph_path = out_dir / "graph.txt";
  {
    std::ofstream out(graph_path, std::ios::trunc);
    for (const auto& id : world.node_ids) out << "NODE " << id << "\n";
    char line[200];
    for (const auto& e : world.edges) {
      std::snprintf(line, sizeof(line), "EDGE %s %s %.17g %.17g", e.a.c_str(), e.b.c_str(),
                    e.bearing_ab, e.bearing_ba);
      out << line << "\n";
    }
    if (!out) throw std::runtime_error("fixtures: cannot write graph file");
  }

  // planted features: for every outgoing bearing of a node, the crop window
  // centered on that bearing carries the policy action's row band
  std::vector<FeatureStore::Record> features;
  for (NodeIndex n = 0; n < graph.node_count(); ++n) {
    FeatureStore::Record nav;
    nav.id = nav_feature_id(graph.id(n));
    nav.dims = {spec.nav_c, spec.nav_h, spec.nav_w};
    nav.values.resize(static_cast<size_t>(spec.nav_c) * spec.nav_h * spec.nav_w);
    for (auto& v : nav.values) v = static_cast<float>(rng.normal() * spec.feature_noise);
    const int band = spec.nav_h / kActionCount;
    for (const auto& nb : graph.neighbors(n)) {
      const Action a = policy({n, nb.bearing});
      const int col = static_cast<int>(std::lround(nb.bearing / 360.0 * spec.nav_w)) % spec.nav_w;
      const int row0 = static_cast<int>(a) * band;
      for (int c = 0; c < spec.nav_c; ++c)
        for (int r = row0; r < row0 + band; ++r)
          for (int dx = -spec.signal_half_width; dx <= spec.signal_half_width; ++dx) {
            const int x = ((col + dx) % spec.nav_w + spec.nav_w) % spec.nav_w;
            nav.values[(static_cast<size_t>(c) * spec.nav_h + r) * spec.nav_w + x] +=
                static_cast<float>(spec.planted_signal);
          }
    }
    features.push_back(std::move(nav));

    FeatureStore::Record spk;
    spk.id = speaker_feature_id(graph.id(n));
    spk.dims = {kViewSlices, spec.d_v};
    spk.values.resize(static_cast<size_t>(kViewSlices) * spec.d_v);
    for (auto& v : spk.values) v = static_cast<float>(rng.normal());
    features.push_back(std::move(spk));
  }
  const auto features_path = out_dir / "features.bin";
  FeatureStore::write(features_path, features);

  // routes per split
  struct SplitSpec {
    const char* name;
    const char* prefix;
    int count;
    Split split;
    Style style;
  };
  const SplitSpec splits[] = {
      {"external", "ext", spec.external_routes, Split::Train, Style::Machine},
      {"target_train", "tt", spec.target_train_routes, Split::Train, Style::Human},
      {"target_dev", "td", spec.target_dev_routes, Split::Dev, Style::Human},
  };

  FixtureOutput out;
  out.world_dir = out_dir;

  for (const auto& sp : splits) {
    std::vector<TrajectoryRecord> trajs;
    std::vector<InstructionRecord> instrs;
    int made = 0, guard = 0;
    while (made < sp.count) {
      if (++guard > sp.count * 200)
        throw std::runtime_error("fixtures: route sampling stalled for split " +
                                 std::string(sp.name));
      const NodeIndex start = rng.uniform_int(spec.nodes);
      if (policy.is_goal(start)) continue;
      const auto nbrs = graph.neighbors(start);
      const double heading = nbrs[rng.uniform_int(static_cast<int>(nbrs.size()))].bearing;
      const Trajectory traj = roll_policy(graph, policy, start, heading, 6 * spec.nodes);
      const int n_nodes = static_cast<int>(dedup_nodes(traj).size());
      if (n_nodes < spec.min_route_nodes || n_nodes > spec.max_route_nodes) continue;
      const auto actions = infer_actions(graph, traj);
      const auto turns = turn_sequence(actions);
      if (static_cast<int>(turns.size()) > spec.max_turns) continue;

      char rid[32];
      std::snprintf(rid, sizeof(rid), "%s-%04d", sp.prefix, made);
      TrajectoryRecord tr;
      tr.route_id = rid;
      for (const auto& s : traj.states) {
        tr.nodes.push_back(graph.id(s.node));
        tr.headings.push_back(s.heading);
      }
      tr.goal = graph.id(traj.end().node);
      trajs.push_back(std::move(tr));

      InstructionRecord ir = make_instruction(rng, rid, sp.style, turns);
      const Instruction parsed = instruction_from_record(ir, default_tagger());
      if (guiding_signals(parsed) != turns)
        throw std::runtime_error("fixtures: generated instruction signals disagree with turns");
      instrs.push_back(std::move(ir));
      ++made;
    }

    const auto traj_path = out_dir / ("trajectories_" + std::string(sp.name) + ".jsonl");
    const auto instr_path = out_dir / ("instructions_" + std::string(sp.name) + ".jsonl");
    write_trajectory_jsonl(traj_path, trajs);
    write_instruction_jsonl(instr_path, instrs);

    DatasetManifest m;
    m.graph = graph_path;
    m.trajectories = traj_path;
    m.instructions = instr_path;
    m.features = features_path;
    m.split = sp.split;
    m.style = sp.style;
    const auto manifest_path = out_dir / ("manifest_" + std::string(sp.name) + ".json");
    m.save(manifest_path);
    if (std::string(sp.name) == "external") out.external_manifest = manifest_path;
    if (std::string(sp.name) == "target_train") out.target_train_manifest = manifest_path;
    if (std::string(sp.name) == "target_dev") out.target_dev_manifest = manifest_path;
  }

  // provenance for reproducibility checks
  {
    nlohmann::ordered_json meta;
    meta["seed"] = seed;
    meta["nodes"] = spec.nodes;
    meta["goals"] = spec.goals;
    meta["external_routes"] = spec.external_routes;
    meta["target_train_routes"] = spec.target_train_routes;
    meta["target_dev_routes"] = spec.target_dev_routes;
    std::ofstream metaf(out_dir / "fixture_meta.json", std::ios::trunc);
    metaf << meta.dump(2) << "\n";
  }
  return out;
}

}  // namespace vlnwb
