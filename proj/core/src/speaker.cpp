#include "vlnwb/speaker.hpp"

#include <cmath>
#include <stdexcept>

namespace vlnwb {

void SpeakerConfig::check() const {
  if (d_v <= 0 || emb_dim <= 0 || hidden_dim <= 0 || max_views <= 0 || max_sentences <= 0)
    throw std::runtime_error("speaker: config dims must be positive");
}

SpeakerViewFeature SpeakerViewFeature::build(std::span<const float> visual, int d_v,
                                             std::span<const double> slice_headings_deg) {
  if (static_cast<int>(visual.size()) != kViewSlices * d_v)
    throw std::runtime_error("speaker: visual feature must be 8 x d_v");
  if (slice_headings_deg.size() != kViewSlices)
    throw std::runtime_error("speaker: want 8 slice headings");
  SpeakerViewFeature f;
  f.slice_dim = d_v + kOrientDim;
  f.slices.resize(static_cast<size_t>(kViewSlices) * f.slice_dim);
  constexpr double kDegToRad = 3.14159265358979323846 / 180.0;
  for (int s = 0; s < kViewSlices; ++s) {
    Real* row = &f.slices[static_cast<size_t>(s) * f.slice_dim];
    for (int i = 0; i < d_v; ++i) row[i] = static_cast<Real>(visual[s * d_v + i]);
    const double a = slice_headings_deg[s] * kDegToRad;
    const Real sin_a = std::sin(a), cos_a = std::cos(a);
    for (int r = 0; r < kOrientRepeat; ++r) {
      row[d_v + 2 * r] = sin_a;
      row[d_v + 2 * r + 1] = cos_a;
    }
  }
  return f;
}

SpeakerModel::SpeakerModel(SpeakerConfig cfg, Vocab vocab, uint64_t init_seed)
    : cfg_(cfg), vocab_(std::move(vocab)) {
  cfg_.check();
  Rng rng(init_seed);
  const int sd = cfg_.slice_dim();
  const int h = cfg_.hidden_dim;
  const int e = cfg_.emb_dim;
  params_.add_uniform("emb", {vocab_.size(), e}, rng);
  params_.add_uniform("enc.w_v", {sd, h}, rng);
  params_.add_uniform("enc.w_s", {e, h}, rng);
  params_.add_uniform("enc.lstm.w", {4 * h, 2 * sd + e + h}, rng);
  params_.add_uniform("enc.lstm.b", {4 * h}, rng);
  params_.add_uniform("dec.attn.w", {h, h}, rng);
  params_.add_uniform("dec.lstm.w", {4 * h, e + h + h}, rng);
  params_.add_uniform("dec.lstm.b", {4 * h}, rng);
  params_.add_uniform("dec.out.w", {vocab_.size(), h}, rng);
  params_.add_uniform("dec.out.b", {vocab_.size()}, rng);
}

std::vector<int> SpeakerModel::template_sentence_ids(
    const std::vector<TemplateToken>& sentence) const {
  std::vector<int> ids;
  for (const auto& t : sentence)
    ids.push_back(t.is_mask ? Vocab::kMask : vocab_.id(t.token.lower()));
  return ids;
}

std::vector<int> SpeakerModel::target_ids(const Instruction& instr) const {
  std::vector<int> ids;
  for (const auto& tok : instr.flat_tokens()) ids.push_back(vocab_.id(tok.lower()));
  ids.push_back(Vocab::kEos);
  return ids;
}

SpeakerModel::Encoding SpeakerModel::encode(Tape& tape, std::span<const SpeakerViewFeature> views,
                                            const InstructionTemplate& tmpl) {
  if (views.empty()) throw std::runtime_error("speaker: trajectory has no views");
  if (static_cast<int>(views.size()) > cfg_.max_views)
    throw std::runtime_error("speaker: trajectory exceeds max_views");
  const int m = static_cast<int>(tmpl.sentences.size());
  if (m == 0) throw std::runtime_error("speaker: template has no sentences");
  if (m > cfg_.max_sentences) throw std::runtime_error("speaker: template exceeds max_sentences");

  const int sd = cfg_.slice_dim();
  const int h = cfg_.hidden_dim;

  const Var emb = tape.param(params_.at("emb"));
  const Var w_v = tape.param(params_.at("enc.w_v"));
  const Var w_s = tape.param(params_.at("enc.w_s"));
  const Var lstm_w = tape.param(params_.at("enc.lstm.w"));
  const Var lstm_b = tape.param(params_.at("enc.lstm.b"));

  // s'_j = mean of the sentence's token embeddings (template tokens, masks included)
  std::vector<Var> sent_rows;
  for (const auto& sentence : tmpl.sentences) {
    const auto ids = template_sentence_ids(sentence);
    sent_rows.push_back(tape.reshape(tape.mean_rows(tape.embedding(emb, ids)), {1, cfg_.emb_dim}));
  }
  const Var sent_mat = m == 1 ? sent_rows[0] : tape.concat(sent_rows, 0);

  Encoding enc;
  enc.sentence_encs = sent_mat;

  LstmState state{tape.constant({h}, std::vector<Real>(h, 0.0)),
                  tape.constant({h}, std::vector<Real>(h, 0.0))};
  std::vector<Var> state_rows;
  for (const auto& view : views) {
    if (view.slice_dim != sd) throw std::runtime_error("speaker: view slice dim mismatch");
    const Var slices = tape.constant({kViewSlices, sd}, view.slices);

    // grounded visual feature
    const Var vis_scores = tape.matvec(slices, tape.matvec(w_v, state.h));
    const Var vis_attn = tape.softmax(vis_scores);
    const Var v_hat = tape.matvec(tape.transpose(slices), vis_attn);
    enc.per_step_visual_attn.push_back(vis_attn);

    // grounded textual feature
    const Var txt_scores = tape.matvec(sent_mat, tape.matvec(w_s, state.h));
    const Var txt_attn = tape.softmax(txt_scores);
    const Var s_hat = tape.matvec(tape.transpose(sent_mat), txt_attn);
    enc.per_step_textual_attn.push_back(txt_attn);

    // current-view summary: mean of the 8 slices
    const Var v_cur = tape.mean_rows(slices);

    const Var x = tape.concat(std::array<Var, 3>{v_hat, s_hat, v_cur}, 0);
    state = lstm_cell(tape, x, state, lstm_w, lstm_b);
    state_rows.push_back(tape.reshape(state.h, {1, h}));
  }
  enc.states = state_rows.size() == 1 ? state_rows[0] : tape.concat(state_rows, 0);
  return enc;
}

SpeakerModel::DecodeStep SpeakerModel::decode_step(Tape& tape, const Encoding& enc,
                                                   int prev_token, LstmState prev) {
  const Var emb = tape.param(params_.at("emb"));
  const Var attn_w = tape.param(params_.at("dec.attn.w"));
  const Var lstm_w = tape.param(params_.at("dec.lstm.w"));
  const Var lstm_b = tape.param(params_.at("dec.lstm.b"));
  const Var out_w = tape.param(params_.at("dec.out.w"));
  const Var out_b = tape.param(params_.at("dec.out.b"));

  const int prev_ids[1] = {prev_token};
  const Var prev_emb = tape.reshape(tape.embedding(emb, prev_ids), {cfg_.emb_dim});

  const Var scores = tape.matvec(enc.states, tape.matvec(attn_w, prev.h));
  const Var attn = tape.softmax(scores);
  const Var ctx = tape.matvec(tape.transpose(enc.states), attn);

  const Var x = tape.concat(std::array<Var, 2>{prev_emb, ctx}, 0);
  const LstmState next = lstm_cell(tape, x, prev, lstm_w, lstm_b);
  const Var logits = tape.linear(next.h, out_w, out_b);
  return {next, logits};
}

Var SpeakerModel::batch_loss(Tape& tape, std::span<const SpeakerSample> batch) {
  if (batch.empty()) throw std::runtime_error("speaker: empty batch");
  Var total;
  for (const auto& sample : batch) {
    if (sample.target_ids.empty()) throw std::runtime_error("speaker: sample without targets");
    const Encoding enc = encode(tape, sample.views, sample.tmpl);
    LstmState state{tape.constant({cfg_.hidden_dim}, std::vector<Real>(cfg_.hidden_dim, 0.0)),
                    tape.constant({cfg_.hidden_dim}, std::vector<Real>(cfg_.hidden_dim, 0.0))};
    std::vector<Var> logit_rows;
    int prev = Vocab::kBos;
    for (int target : sample.target_ids) {
      DecodeStep step = decode_step(tape, enc, prev, state);
      state = step.state;
      logit_rows.push_back(tape.reshape(step.logits, {1, vocab_.size()}));
      prev = target;  // teacher forcing
    }
    const Var logits =
        logit_rows.size() == 1 ? logit_rows[0] : tape.concat(logit_rows, 0);
    const int n = static_cast<int>(sample.target_ids.size());
    // token-summed negative log likelihood for this sample
    const Var nll = tape.scale(tape.cross_entropy_rows(logits, sample.target_ids),
                               static_cast<Real>(n));
    total = total.valid() ? tape.add(total, nll) : nll;
  }
  return tape.scale(total, 1.0 / static_cast<Real>(batch.size()));
}

double SpeakerModel::train_step(std::span<const SpeakerSample> batch, const AdamConfig& adam) {
  Tape tape;
  const Var loss = batch_loss(tape, batch);
  params_.zero_grads();
  tape.backward(loss);
  const double value = tape.scalar_value(loss);
  adam_step(params_, adam);
  return value;
}

std::vector<std::string> SpeakerModel::decode(const InstructionTemplate& tmpl,
                                              std::span<const SpeakerViewFeature> views) {
  Tape tape;
  const Encoding enc = encode(tape, views, tmpl);
  LstmState state{tape.constant({cfg_.hidden_dim}, std::vector<Real>(cfg_.hidden_dim, 0.0)),
                  tape.constant({cfg_.hidden_dim}, std::vector<Real>(cfg_.hidden_dim, 0.0))};

  const int cap = 2 * static_cast<int>(tmpl.flat_tokens().size()) + cfg_.decode_cap_slack;
  std::vector<std::string> out;
  int prev = Vocab::kBos;
  for (int i = 0; i < cap; ++i) {
    DecodeStep step = decode_step(tape, enc, prev, state);
    state = step.state;
    const auto& logits = tape.value(step.logits);
    int best = -1;
    for (int k = 0; k < vocab_.size(); ++k) {
      if (k == Vocab::kPad || k == Vocab::kBos || k == Vocab::kMask) continue;
      if (best < 0 || logits[k] > logits[best]) best = k;
    }
    if (best == Vocab::kEos) break;
    out.push_back(vocab_.word(best));
    prev = best;
  }
  return out;
}

double SpeakerModel::token_accuracy(std::span<const SpeakerSample> samples) {
  long correct = 0, total = 0;
  for (const auto& sample : samples) {
    Tape tape;
    const Encoding enc = encode(tape, sample.views, sample.tmpl);
    LstmState state{tape.constant({cfg_.hidden_dim}, std::vector<Real>(cfg_.hidden_dim, 0.0)),
                    tape.constant({cfg_.hidden_dim}, std::vector<Real>(cfg_.hidden_dim, 0.0))};
    int prev = Vocab::kBos;
    for (int target : sample.target_ids) {
      DecodeStep step = decode_step(tape, enc, prev, state);
      state = step.state;
      const auto& logits = tape.value(step.logits);
      int best = 0;
      for (int k = 1; k < vocab_.size(); ++k)
        if (logits[k] > logits[best]) best = k;
      if (best == target) ++correct;
      ++total;
      prev = target;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace vlnwb
