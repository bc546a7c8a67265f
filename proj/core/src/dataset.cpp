#include "vlnwb/dataset.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

#include "json.hpp"

namespace vlnwb {

using nlohmann::ordered_json;

namespace {

ordered_json parse_line(const std::string& line, const std::filesystem::path& path, int lineno) {
  try {
    return ordered_json::parse(line);
  } catch (const std::exception& e) {
    throw std::runtime_error(path.filename().string() + ":" + std::to_string(lineno) +
                             ": bad JSON record: " + e.what());
  }
}

}  // namespace

std::vector<TrajectoryRecord> read_trajectory_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("dataset: cannot open " + path.string());
  std::vector<TrajectoryRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto j = parse_line(line, path, lineno);
    TrajectoryRecord r;
    r.route_id = j.at("route_id").get<std::string>();
    r.nodes = j.at("nodes").get<std::vector<std::string>>();
    r.headings = j.at("headings").get<std::vector<double>>();
    r.goal = j.at("goal").get<std::string>();
    if (r.nodes.size() != r.headings.size())
      throw std::runtime_error("dataset: nodes/headings length mismatch for route " + r.route_id);
    out.push_back(std::move(r));
  }
  return out;
}

void write_trajectory_jsonl(const std::filesystem::path& path,
                            const std::vector<TrajectoryRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("dataset: cannot write " + path.string());
  for (const auto& r : records) {
    ordered_json j;
    j["route_id"] = r.route_id;
    j["nodes"] = r.nodes;
    j["headings"] = r.headings;
    j["goal"] = r.goal;
    out << j.dump() << "\n";
  }
}

std::vector<InstructionRecord> read_instruction_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("dataset: cannot open " + path.string());
  std::vector<InstructionRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto j = parse_line(line, path, lineno);
    InstructionRecord r;
    r.route_id = j.at("route_id").get<std::string>();
    r.text = j.at("text").get<std::string>();
    r.style = parse_style(j.value("style", "HUMAN"));
    if (j.contains("tokens")) r.tokens = j.at("tokens").get<std::vector<std::string>>();
    if (j.contains("tags")) r.tags = j.at("tags").get<std::vector<std::string>>();
    if (r.tokens.size() != r.tags.size())
      throw std::runtime_error("dataset: tokens/tags length mismatch for route " + r.route_id);
    out.push_back(std::move(r));
  }
  return out;
}

void write_instruction_jsonl(const std::filesystem::path& path,
                             const std::vector<InstructionRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("dataset: cannot write " + path.string());
  for (const auto& r : records) {
    ordered_json j;
    j["route_id"] = r.route_id;
    j["text"] = r.text;
    j["style"] = to_string(r.style);
    if (!r.tokens.empty()) {
      j["tokens"] = r.tokens;
      j["tags"] = r.tags;
    }
    out << j.dump() << "\n";
  }
}

const char* to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Dev: return "dev";
    case Split::Test: return "test";
  }
  return "?";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::Train;
  if (name == "dev") return Split::Dev;
  if (name == "test") return Split::Test;
  throw std::runtime_error("dataset: unknown split '" + name + "'");
}

DatasetManifest DatasetManifest::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("manifest: cannot open " + path.string());
  ordered_json j;
  in >> j;
  DatasetManifest m;
  const auto base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path fp(p);
    return fp.is_absolute() ? fp : base / fp;
  };
  m.graph = resolve(j.at("graph").get<std::string>());
  m.trajectories = resolve(j.at("trajectories").get<std::string>());
  m.instructions = resolve(j.at("instructions").get<std::string>());
  m.features = resolve(j.at("features").get<std::string>());
  m.split = parse_split(j.at("split").get<std::string>());
  m.style = parse_style(j.at("style").get<std::string>());
  return m;
}

void DatasetManifest::save(const std::filesystem::path& path) const {
  ordered_json j;
  // stored relative to the manifest location when possible
  const auto base = path.parent_path();
  auto rel = [&](const std::filesystem::path& p) {
    const auto r = p.lexically_relative(base);
    return (!r.empty() && r.native()[0] != '.') ? r.string() : p.string();
  };
  j["graph"] = rel(graph);
  j["trajectories"] = rel(trajectories);
  j["instructions"] = rel(instructions);
  j["features"] = rel(features);
  j["split"] = to_string(split);
  j["style"] = to_string(style);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("manifest: cannot write " + path.string());
  out << j.dump(2) << "\n";
}

Instruction instruction_from_record(const InstructionRecord& rec, const TaggerPort& tagger) {
  if (!rec.tokens.empty()) {
    Instruction instr;
    instr.raw = rec.text;
    instr.style = rec.style;
    Sentence cur;
    for (size_t i = 0; i < rec.tokens.size(); ++i) {
      const auto tag = parse_pos_tag(rec.tags[i]);
      if (!tag)
        throw std::runtime_error("dataset: unknown POS tag '" + rec.tags[i] + "' for route " +
                                 rec.route_id);
      cur.tokens.push_back({rec.tokens[i], *tag});
      const std::string& t = rec.tokens[i];
      if (t == "." || t == "!" || t == "?") {
        instr.sentences.push_back(std::move(cur));
        cur = {};
      }
    }
    if (!cur.tokens.empty()) {
      cur.tokens.push_back({".", PosTag::PUNCT});
      instr.sentences.push_back(std::move(cur));
    }
    if (instr.sentences.empty())
      throw std::runtime_error("dataset: empty gold-tagged instruction for route " + rec.route_id);
    return instr;
  }
  Instruction instr = split_and_tokenize(rec.text, rec.style);
  pos_tag(instr, tagger);
  return instr;
}

std::string nav_feature_id(const std::string& pano_id) { return pano_id + "#nav"; }
std::string speaker_feature_id(const std::string& pano_id) { return pano_id + "#spk"; }

Dataset ingest(const DatasetManifest& manifest, const IngestOptions& opts) {
  Dataset ds;
  ds.manifest = manifest;
  ds.graph = NavGraph::load(manifest.graph);
  ds.features = FeatureStore::open(manifest.features);

  const auto trajectories = read_trajectory_jsonl(manifest.trajectories);
  const auto instructions = read_instruction_jsonl(
      opts.override_instructions ? *opts.override_instructions : manifest.instructions);

  std::map<std::string, const InstructionRecord*> instr_by_route;
  for (const auto& r : instructions) {
    if (!instr_by_route.emplace(r.route_id, &r).second)
      throw std::runtime_error("dataset: duplicate instruction for route " + r.route_id);
  }

  const TaggerPort& tagger = opts.tagger ? *opts.tagger : default_tagger();
  std::set<std::string> seen_routes;
  std::set<std::string> used_instructions;

  for (const auto& tr : trajectories) {
    if (!seen_routes.insert(tr.route_id).second)
      throw std::runtime_error("dataset: duplicate trajectory for route " + tr.route_id);

    Sample s;
    s.route_id = tr.route_id;
    s.trajectory.route_id = tr.route_id;
    for (size_t i = 0; i < tr.nodes.size(); ++i) {
      if (!ds.graph.has_node(tr.nodes[i]))
        throw std::runtime_error("dataset: route " + tr.route_id + " visits unknown node '" +
                                 tr.nodes[i] + "'");
      s.trajectory.states.push_back(
          make_state(ds.graph, ds.graph.index(tr.nodes[i]), tr.headings[i]));
    }
    validate_trajectory(ds.graph, s.trajectory);
    if (!ds.graph.has_node(tr.goal))
      throw std::runtime_error("dataset: route " + tr.route_id + " has unknown goal '" + tr.goal +
                               "'");
    s.goal = ds.graph.index(tr.goal);

    const auto it = instr_by_route.find(tr.route_id);
    if (it == instr_by_route.end())
      throw std::runtime_error("dataset: route " + tr.route_id + " has no instruction");
    used_instructions.insert(tr.route_id);

    const int panoramas = static_cast<int>(dedup_nodes(s.trajectory).size());
    if (opts.pano_filter && panoramas > opts.max_panoramas) {
      ++ds.report.excluded["over_" + std::to_string(opts.max_panoramas) + "_panoramas"];
      continue;
    }

    for (const auto& node : tr.nodes) {
      if (!ds.features.contains(nav_feature_id(node)) ||
          !ds.features.contains(speaker_feature_id(node)))
        throw std::runtime_error("dataset: route " + tr.route_id +
                                 " misses feature record for node '" + node + "'");
    }

    s.instruction = instruction_from_record(*it->second, tagger);
    ds.samples.push_back(std::move(s));
    ++ds.report.loaded;
  }

  for (const auto& r : instructions)
    if (!used_instructions.count(r.route_id))
      throw std::runtime_error("dataset: instruction for unknown route '" + r.route_id + "'");

  return ds;
}

}  // namespace vlnwb
