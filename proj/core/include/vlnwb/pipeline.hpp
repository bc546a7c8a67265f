#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vlnwb/checkpoint.hpp"
#include "vlnwb/dataset.hpp"
#include "vlnwb/metrics.hpp"
#include "vlnwb/navigator.hpp"
#include "vlnwb/nlg.hpp"
#include "vlnwb/speaker.hpp"

namespace vlnwb {

struct SpeakerRunConfig {
  SpeakerConfig model;
  double lr = 1e-3;
  int steps = 2000;
  int batch = 4;
};

struct NavigatorRunConfig {
  NavigatorConfig model;
  double lr = 2.5e-4;
  double embedder_lr = 1e-5;  // separate rate for the token-embedding encoder
  int pretrain_epochs = 25;
  int finetune_epochs = 3;
  int batch = 30;
  double lr_decay = 0.5;
  int lr_decay_every_epochs = 5;
  int rollout_max_steps = 40;
};

struct RunConfig {
  uint64_t seed = 1;
  std::filesystem::path out_dir = "out";

  std::filesystem::path external_manifest;
  std::filesystem::path target_train_manifest;
  std::filesystem::path target_dev_manifest;
  std::optional<std::filesystem::path> style_instructions;  // +style pretraining arm
  std::string pretrain_instructions = "machine";            // "machine" | "style" | "none"

  MetricConfig metrics;
  int max_panoramas = 50;
  bool pano_filter = true;

  SpeakerRunConfig speaker;
  NavigatorRunConfig navigator;

  static RunConfig load(const std::filesystem::path& path);
  std::string canonical_json() const;
  uint64_t config_hash() const;  // FNV-1a over the canonical form
  void save(const std::filesystem::path& path) const;
};

uint64_t fnv1a64(std::string_view bytes);

// vocabulary shared by a training run, persisted beside its checkpoints
Vocab build_vocab_from_instructions(const std::vector<std::filesystem::path>& jsonl_paths);
void save_vocab(const std::filesystem::path& path, const Vocab& vocab);
Vocab load_vocab(const std::filesystem::path& path);

// ---- speaker wiring ----

std::vector<double> speaker_slice_headings();

SpeakerSample make_speaker_sample(const Dataset& ds, const Sample& sample, SpeakerModel& model,
                                  const MaskPolicy& policy);
std::vector<SpeakerSample> make_speaker_samples(const Dataset& ds, SpeakerModel& model,
                                                const MaskPolicy& policy);

struct SpeakerTrainResult {
  std::vector<double> losses;
  std::filesystem::path checkpoint;
};

SpeakerTrainResult train_speaker(SpeakerModel& model, const Dataset& train, const RunConfig& cfg);

// style transfer over an external (machine-instruction) dataset
std::vector<InstructionRecord> infer_style(SpeakerModel& model, const Dataset& external);

// ---- navigator wiring ----

EpisodeBatch make_episode(const Dataset& ds, const Sample& sample, NavigatorModel& model);

struct NavigatorTrainResult {
  std::vector<double> epoch_losses;
  std::filesystem::path checkpoint;
};

// trains `epochs` epochs starting from the model's current state; resumes from
// `resume_checkpoint` when given (mid-run restarts land on epoch boundaries)
NavigatorTrainResult train_navigator(NavigatorModel& model, const Dataset& train,
                                     const RunConfig& cfg, int epochs,
                                     const std::filesystem::path& checkpoint_path,
                                     const std::optional<std::filesystem::path>& resume_checkpoint,
                                     double lr);

struct EvalResult {
  MetricSummary summary;
  std::vector<SampleMetrics> per_sample;
  std::vector<std::string> route_ids;
  std::vector<Trajectory> rollouts;
  std::vector<RolloutLog> logs;
};

EvalResult evaluate_navigator(NavigatorModel& model, const Dataset& dev, const RunConfig& cfg);

std::string metric_report_json(const EvalResult& eval, uint64_t config_hash, uint64_t seed);
std::string per_sample_jsonl(const EvalResult& eval);

// ---- two-stage harness ----

struct StageResult {
  std::string name;
  std::vector<double> epoch_losses;
  MetricSummary dev;
  std::filesystem::path checkpoint;
};

struct TwoStageResult {
  std::optional<StageResult> pretrain;
  StageResult finetune;
  uint64_t config_hash = 0;
};

// pretrain on the external manifest (machine or style-transferred
// instructions), fine-tune on the target manifest, evaluating on dev after
// each stage; pretrain_epochs = 0 degenerates to plain training
TwoStageResult run_two_stage(const RunConfig& cfg);

}  // namespace vlnwb
