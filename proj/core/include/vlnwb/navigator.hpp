#pragma once

#include <array>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "vlnwb/adam.hpp"
#include "vlnwb/street_graph.hpp"
#include "vlnwb/tape.hpp"
#include "vlnwb/text.hpp"
#include "vlnwb/vocab.hpp"

namespace vlnwb {

struct NavigatorConfig {
  int n_layers = 8;
  int n_heads = 8;
  int model_dim = 256;
  int ff_dim = 1024;
  int crop_width = 100;
  int feature_height = 100;  // H of the stored (c x h x w) maps
  std::array<int, 3> cnn_channels = {32, 32, 32};
  int cnn_kernel = 3;
  int cnn_stride = 2;
  int cnn_pad = 1;
  int emb_dim = 64;        // trainable token-embedding encoder (the embedder port)
  int max_sentences = 8;   // M
  int max_steps = 55;      // T bound for position embeddings and rollouts
  bool split_sentences = true;
  bool text_sees_views = true;

  void check() const;
};

// Per-panorama feature map of shape (c x h x w); w must divide by 8.
struct NavPanoFeature {
  int c = 0, h = 0, w = 0;
  std::vector<Real> data;

  static NavPanoFeature from_floats(std::span<const float> values, int c, int h, int w);
  void check() const;
};

struct EpisodeBatch {
  std::vector<std::vector<int>> sentence_ids;   // M sentence token-id lists
  std::vector<NavPanoFeature> views;            // T gold views
  std::vector<double> headings;                 // T
  std::vector<Action> gold;                     // T, final entry Stop
};

struct RolloutStep {
  Action action;
  std::array<double, kActionCount> logits;
};

struct RolloutLog {
  std::vector<RolloutStep> steps;
};

// Sentence-level instruction encoder, heading-centered view encoder, masked
// cross-modal transformer, and the 4-way action predictor.
class NavigatorModel {
 public:
  NavigatorModel(NavigatorConfig cfg, Vocab vocab, uint64_t init_seed);

  const NavigatorConfig& config() const { return cfg_; }
  const Vocab& vocab() const { return vocab_; }
  ParamStore& params() { return params_; }

  // instruction -> M token-id lists (whole instruction is one sentence when
  // split_sentences is off; overflow sentences fold into the final slot)
  std::vector<std::vector<int>> sentence_ids(const Instruction& instr) const;

  // circular heading-centered crop followed by the channel mean: (h x crop_width)
  static std::vector<Real> crop_heading_mean(const NavPanoFeature& feat, double heading_deg,
                                             int crop_width);

  Var encode_sentence(Tape& tape, std::span<const int> token_ids);
  Var encode_panorama(Tape& tape, const NavPanoFeature& feat, double heading_deg);

  // stacks of per-position encodings
  Var sentence_matrix(Tape& tape, std::span<const std::vector<int>> sentences);
  Var view_matrix(Tape& tape, std::span<const NavPanoFeature> views,
                  std::span<const double> headings);

  // transformer over [sentences ; views(1..t)] with the causal view mask;
  // returns the full output matrix ((M + t) x model_dim)
  Var cross_modal_forward(Tape& tape, Var sent_mat, Var view_mat, int t);

  // action logits at step t (the transformer output at the position of view t)
  Var step_logits(Tape& tape, Var sent_mat, Var view_mat, int t);

  static Action greedy_action(std::span<const Real> logits);

  // mean per-step cross entropy over the episode (teacher forcing)
  Var episode_loss(Tape& tape, const EpisodeBatch& batch);

  // zero grads, backprop one episode, apply Adam; returns the loss value
  double train_episode(const EpisodeBatch& batch, const AdamConfig& adam);

  using FeatureFn = std::function<const NavPanoFeature*(const std::string& pano_id)>;

  // greedy closed-loop rollout; throws if a visited panorama has no feature
  Trajectory navigate(const NavGraph& graph, const AgentState& start, const Instruction& instr,
                      const FeatureFn& features, int max_steps, RolloutLog* log = nullptr);

 private:
  struct CnnDims {
    int h1, w1, h2, w2, h3, w3, flat;
  };
  CnnDims cnn_dims(int h, int w) const;
  std::vector<char> visibility_mask(int m, int t) const;

  NavigatorConfig cfg_;
  Vocab vocab_;
  ParamStore params_;
};

// Gold action sequence implied by consecutive trajectory states (one-step
// rotations or forward moves), with a final Stop.
std::vector<Action> infer_actions(const NavGraph& graph, const Trajectory& traj);

}  // namespace vlnwb
