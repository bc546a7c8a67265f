#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vlnwb/feature_store.hpp"
#include "vlnwb/street_graph.hpp"
#include "vlnwb/text.hpp"

namespace vlnwb {

struct TrajectoryRecord {
  std::string route_id;
  std::vector<std::string> nodes;
  std::vector<double> headings;
  std::string goal;
};

struct InstructionRecord {
  std::string route_id;
  std::string text;
  Style style = Style::Human;
  // optional pre-tokenized form with gold tags (parallel arrays)
  std::vector<std::string> tokens;
  std::vector<std::string> tags;
};

std::vector<TrajectoryRecord> read_trajectory_jsonl(const std::filesystem::path& path);
void write_trajectory_jsonl(const std::filesystem::path& path,
                            const std::vector<TrajectoryRecord>& records);

std::vector<InstructionRecord> read_instruction_jsonl(const std::filesystem::path& path);
void write_instruction_jsonl(const std::filesystem::path& path,
                             const std::vector<InstructionRecord>& records);

enum class Split { Train, Dev, Test };
const char* to_string(Split s);
Split parse_split(const std::string& name);

struct DatasetManifest {
  std::filesystem::path graph;
  std::filesystem::path trajectories;
  std::filesystem::path instructions;
  std::filesystem::path features;
  Split split = Split::Train;
  Style style = Style::Human;

  static DatasetManifest load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

struct Sample {
  std::string route_id;
  Trajectory trajectory;
  NodeIndex goal = -1;
  Instruction instruction;
};

struct IngestReport {
  int loaded = 0;
  std::map<std::string, int> excluded;  // reason -> count, never silent
};

struct IngestOptions {
  int max_panoramas = 50;        // Manh-50-style trajectory cap
  bool pano_filter = true;
  const TaggerPort* tagger = nullptr;  // defaulted to the built-in lexicon tagger

  // substitute instructions (e.g. style-transferred) joined by route_id
  std::optional<std::filesystem::path> override_instructions;
};

struct Dataset {
  NavGraph graph;
  FeatureStore features;
  std::vector<Sample> samples;
  IngestReport report;
  DatasetManifest manifest;
};

// Builds an Instruction from a record: gold tokens/tags bypass the tagger.
Instruction instruction_from_record(const InstructionRecord& rec, const TaggerPort& tagger);

// Loads and cross-validates a manifest: referential integrity between the
// graph, trajectory, instruction, and feature files. Over-long trajectories
// are excluded and itemized; broken references are errors.
Dataset ingest(const DatasetManifest& manifest, const IngestOptions& opts = {});

// feature-store record ids
std::string nav_feature_id(const std::string& pano_id);
std::string speaker_feature_id(const std::string& pano_id);

}  // namespace vlnwb
