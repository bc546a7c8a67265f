#pragma once

#include <span>
#include <string>
#include <vector>

#include "vlnwb/adam.hpp"
#include "vlnwb/tape.hpp"
#include "vlnwb/text.hpp"
#include "vlnwb/vocab.hpp"

namespace vlnwb {

// orientation block: [sin a, cos a] repeated 32 times
inline constexpr int kOrientRepeat = 32;
inline constexpr int kOrientDim = 2 * kOrientRepeat;
inline constexpr int kViewSlices = 8;

struct SpeakerConfig {
  int d_v = 512;            // visual dim per slice; desk-scale configs shrink this
  int emb_dim = 32;
  int hidden_dim = 64;
  int max_views = 8;        // N
  int max_sentences = 6;    // M
  int decode_cap_slack = 20;  // decode length cap = 2*|template| + slack

  int slice_dim() const { return d_v + kOrientDim; }
  void check() const;
};

// One panorama as the speaker sees it: 8 slices, each the concatenation of a
// visual vector and the slice-heading orientation encoding.
struct SpeakerViewFeature {
  std::vector<Real> slices;  // row-major (8 x slice_dim)
  int slice_dim = 0;

  static SpeakerViewFeature build(std::span<const float> visual /* 8 * d_v */, int d_v,
                                  std::span<const double> slice_headings_deg /* 8 */);
};

struct SpeakerSample {
  std::vector<SpeakerViewFeature> views;  // one per trajectory step, <= max_views
  InstructionTemplate tmpl;
  std::vector<int> target_ids;  // original instruction tokens + <eos>
};

// Dual-attention LSTM encoder over (trajectory, masked template) with an
// attentive LSTM decoder that recovers the full instruction.
class SpeakerModel {
 public:
  SpeakerModel(SpeakerConfig cfg, Vocab vocab, uint64_t init_seed);

  const SpeakerConfig& config() const { return cfg_; }
  const Vocab& vocab() const { return vocab_; }
  ParamStore& params() { return params_; }

  std::vector<int> template_sentence_ids(const std::vector<TemplateToken>& sentence) const;
  std::vector<int> target_ids(const Instruction& instr) const;

  struct Encoding {
    Var states;          // (n_views x hidden)
    Var sentence_encs;   // (n_sentences x emb)
    std::vector<Var> per_step_visual_attn;   // each (8)
    std::vector<Var> per_step_textual_attn;  // each (n_sentences)
  };
  Encoding encode(Tape& tape, std::span<const SpeakerViewFeature> views,
                  const InstructionTemplate& tmpl);

  // teacher-forced loss over a batch: per-sample token-summed cross entropy,
  // averaged over the batch; gradients are accumulated, not applied
  Var batch_loss(Tape& tape, std::span<const SpeakerSample> batch);

  // one optimizer step over a batch; returns the loss value
  double train_step(std::span<const SpeakerSample> batch, const AdamConfig& adam);

  // greedy argmax decode; stops at <eos> or the length cap; MASK and control
  // ids are excluded from the emission set
  std::vector<std::string> decode(const InstructionTemplate& tmpl,
                                  std::span<const SpeakerViewFeature> views);

  // teacher-forced argmax accuracy against the sample targets
  double token_accuracy(std::span<const SpeakerSample> samples);

 private:
  struct DecodeStep {
    LstmState state;
    Var logits;
  };
  DecodeStep decode_step(Tape& tape, const Encoding& enc, int prev_token, LstmState prev);

  SpeakerConfig cfg_;
  Vocab vocab_;
  ParamStore params_;
};

}  // namespace vlnwb
