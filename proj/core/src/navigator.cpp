#include "vlnwb/navigator.hpp"

#include <cmath>
#include <stdexcept>

namespace vlnwb {

void NavigatorConfig::check() const {
  if (model_dim % n_heads != 0)
    throw std::runtime_error("navigator: model_dim must divide by n_heads");
  if (n_layers <= 0 || model_dim <= 0 || ff_dim <= 0 || crop_width <= 0 || emb_dim <= 0 ||
      max_sentences <= 0 || max_steps <= 0 || feature_height <= 0)
    throw std::runtime_error("navigator: config dims must be positive");
  for (int c : cnn_channels)
    if (c <= 0) throw std::runtime_error("navigator: cnn channels must be positive");
}

NavPanoFeature NavPanoFeature::from_floats(std::span<const float> values, int c, int h, int w) {
  NavPanoFeature f;
  f.c = c;
  f.h = h;
  f.w = w;
  f.data.assign(values.begin(), values.end());
  f.check();
  return f;
}

void NavPanoFeature::check() const {
  if (c <= 0 || h <= 0 || w <= 0 || w % 8 != 0)
    throw std::runtime_error("pano feature: bad shape (w must divide by 8)");
  if (static_cast<int64_t>(data.size()) != static_cast<int64_t>(c) * h * w)
    throw std::runtime_error("pano feature: data size mismatch");
  for (Real v : data)
    if (!std::isfinite(v)) throw std::runtime_error("pano feature: non-finite value");
}

NavigatorModel::NavigatorModel(NavigatorConfig cfg, Vocab vocab, uint64_t init_seed)
    : cfg_(cfg), vocab_(std::move(vocab)) {
  cfg_.check();
  Rng rng(init_seed);
  const int d = cfg_.model_dim;
  params_.add_uniform("embed.words", {vocab_.size(), cfg_.emb_dim}, rng);
  params_.add_uniform("sent.fc.w", {d, cfg_.emb_dim}, rng);
  params_.add_uniform("sent.fc.b", {d}, rng);

  const int k = cfg_.cnn_kernel;
  params_.add_uniform("view.conv1.k", {cfg_.cnn_channels[0], 1, k, k}, rng);
  params_.add_uniform("view.conv1.b", {cfg_.cnn_channels[0]}, rng);
  params_.add_uniform("view.conv2.k", {cfg_.cnn_channels[1], cfg_.cnn_channels[0], k, k}, rng);
  params_.add_uniform("view.conv2.b", {cfg_.cnn_channels[1]}, rng);
  params_.add_uniform("view.conv3.k", {cfg_.cnn_channels[2], cfg_.cnn_channels[1], k, k}, rng);
  params_.add_uniform("view.conv3.b", {cfg_.cnn_channels[2]}, rng);
  const CnnDims dims = cnn_dims(cfg_.feature_height, cfg_.crop_width);
  params_.add_uniform("view.fc.w", {d, dims.flat}, rng);
  params_.add_uniform("view.fc.b", {d}, rng);

  params_.add_uniform("seg", {2, d}, rng);
  params_.add_uniform("pos.text", {cfg_.max_sentences, d}, rng);
  params_.add_uniform("pos.view", {cfg_.max_steps + 1, d}, rng);

  for (int l = 0; l < cfg_.n_layers; ++l) {
    const std::string p = "xmod.l" + std::to_string(l) + ".";
    for (const char* w : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"})
      params_.add_uniform(p + w, {d, d}, rng);
    for (const char* b : {"attn.bq", "attn.bk", "attn.bv", "attn.bo"})
      params_.add_uniform(p + b, {d}, rng);
    params_.add_uniform(p + "ln1.g", {d}, rng);
    params_.add_uniform(p + "ln1.b", {d}, rng);
    params_.add_uniform(p + "ffn.w1", {cfg_.ff_dim, d}, rng);
    params_.add_uniform(p + "ffn.b1", {cfg_.ff_dim}, rng);
    params_.add_uniform(p + "ffn.w2", {d, cfg_.ff_dim}, rng);
    params_.add_uniform(p + "ffn.b2", {d}, rng);
    params_.add_uniform(p + "ln2.g", {d}, rng);
    params_.add_uniform(p + "ln2.b", {d}, rng);
  }
  params_.add_uniform("act.w", {kActionCount, d}, rng);
  params_.add_uniform("act.b", {kActionCount}, rng);
}

std::vector<std::vector<int>> NavigatorModel::sentence_ids(const Instruction& instr) const {
  std::vector<std::vector<int>> out;
  if (!cfg_.split_sentences) {
    std::vector<int> ids;
    for (const auto& tok : instr.flat_tokens()) ids.push_back(vocab_.id(tok.lower()));
    out.push_back(std::move(ids));
    return out;
  }
  for (const auto& sentence : instr.sentences) {
    std::vector<int> ids;
    for (const auto& tok : sentence.tokens) ids.push_back(vocab_.id(tok.lower()));
    if (static_cast<int>(out.size()) < cfg_.max_sentences)
      out.push_back(std::move(ids));
    else  // overflow folds into the final slot
      out.back().insert(out.back().end(), ids.begin(), ids.end());
  }
  return out;
}

std::vector<Real> NavigatorModel::crop_heading_mean(const NavPanoFeature& feat,
                                                    double heading_deg, int crop_width) {
  feat.check();
  if (crop_width <= 0 || crop_width > feat.w)
    throw std::runtime_error("navigator: crop width exceeds feature width");
  const int w = feat.w;
  const int center = static_cast<int>(std::lround(heading_deg / 360.0 * w)) % w;
  const int first = center - crop_width / 2;

  std::vector<Real> out(static_cast<size_t>(feat.h) * crop_width, 0.0);
  for (int ch = 0; ch < feat.c; ++ch)
    for (int y = 0; y < feat.h; ++y) {
      const Real* row = &feat.data[(static_cast<size_t>(ch) * feat.h + y) * w];
      for (int x = 0; x < crop_width; ++x) {
        const int src = ((first + x) % w + w) % w;  // circular across the seam
        out[static_cast<size_t>(y) * crop_width + x] += row[src];
      }
    }
  const Real inv_c = 1.0 / static_cast<Real>(feat.c);
  for (auto& v : out) v *= inv_c;
  return out;
}

NavigatorModel::CnnDims NavigatorModel::cnn_dims(int h, int w) const {
  auto shrink = [&](int n) { return (n + 2 * cfg_.cnn_pad - cfg_.cnn_kernel) / cfg_.cnn_stride + 1; };
  CnnDims d{};
  d.h1 = shrink(h);
  d.w1 = shrink(w);
  d.h2 = shrink(d.h1);
  d.w2 = shrink(d.w1);
  d.h3 = shrink(d.h2);
  d.w3 = shrink(d.w2);
  if (d.h3 <= 0 || d.w3 <= 0)
    throw std::runtime_error("navigator: feature map too small for the 3-layer cnn");
  d.flat = cfg_.cnn_channels[2] * d.h3 * d.w3;
  return d;
}

Var NavigatorModel::encode_sentence(Tape& tape, std::span<const int> token_ids) {
  if (token_ids.empty()) throw std::runtime_error("navigator: empty sentence");
  const Var emb = tape.param(params_.at("embed.words"));
  const Var mean = tape.mean_rows(tape.embedding(emb, token_ids));
  return tape.linear(mean, tape.param(params_.at("sent.fc.w")),
                     tape.param(params_.at("sent.fc.b")));
}

Var NavigatorModel::encode_panorama(Tape& tape, const NavPanoFeature& feat, double heading_deg) {
  if (feat.h != cfg_.feature_height)
    throw std::runtime_error("navigator: feature map height does not match feature_height");
  auto cropped = crop_heading_mean(feat, heading_deg, cfg_.crop_width);
  const CnnDims dims = cnn_dims(feat.h, cfg_.crop_width);
  Var x = tape.constant({1, feat.h, cfg_.crop_width}, std::move(cropped));
  x = tape.relu(tape.conv2d(x, tape.param(params_.at("view.conv1.k")),
                            tape.param(params_.at("view.conv1.b")), cfg_.cnn_stride, cfg_.cnn_pad));
  x = tape.relu(tape.conv2d(x, tape.param(params_.at("view.conv2.k")),
                            tape.param(params_.at("view.conv2.b")), cfg_.cnn_stride, cfg_.cnn_pad));
  x = tape.relu(tape.conv2d(x, tape.param(params_.at("view.conv3.k")),
                            tape.param(params_.at("view.conv3.b")), cfg_.cnn_stride, cfg_.cnn_pad));
  x = tape.reshape(x, {dims.flat});
  return tape.linear(x, tape.param(params_.at("view.fc.w")), tape.param(params_.at("view.fc.b")));
}

Var NavigatorModel::sentence_matrix(Tape& tape, std::span<const std::vector<int>> sentences) {
  if (sentences.empty()) throw std::runtime_error("navigator: no sentences");
  if (static_cast<int>(sentences.size()) > cfg_.max_sentences)
    throw std::runtime_error("navigator: sentence count exceeds max_sentences");
  std::vector<Var> rows;
  for (const auto& ids : sentences)
    rows.push_back(tape.reshape(encode_sentence(tape, ids), {1, cfg_.model_dim}));
  return rows.size() == 1 ? rows[0] : tape.concat(rows, 0);
}

Var NavigatorModel::view_matrix(Tape& tape, std::span<const NavPanoFeature> views,
                                std::span<const double> headings) {
  if (views.empty()) throw std::runtime_error("navigator: no views");
  if (views.size() != headings.size())
    throw std::runtime_error("navigator: view/heading count mismatch");
  if (static_cast<int>(views.size()) > cfg_.max_steps + 1)
    throw std::runtime_error("navigator: episode exceeds max_steps");
  std::vector<Var> rows;
  for (size_t i = 0; i < views.size(); ++i)
    rows.push_back(tape.reshape(encode_panorama(tape, views[i], headings[i]), {1, cfg_.model_dim}));
  return rows.size() == 1 ? rows[0] : tape.concat(rows, 0);
}

std::vector<char> NavigatorModel::visibility_mask(int m, int t) const {
  const int n = m + t;
  std::vector<char> mask(static_cast<size_t>(n) * n, 0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      bool visible;
      if (j < m) {
        visible = true;  // every position sees all instruction positions
      } else if (i < m) {
        visible = cfg_.text_sees_views;  // text rows see the views fed so far
      } else {
        visible = (j - m) <= (i - m);  // views see only their own prefix
      }
      mask[static_cast<size_t>(i) * n + j] = visible ? 1 : 0;
    }
  return mask;
}

Var NavigatorModel::cross_modal_forward(Tape& tape, Var sent_mat, Var view_mat, int t) {
  const int m = tape.shape(sent_mat)[0];
  const int t_have = tape.shape(view_mat)[0];
  if (t < 1 || t > t_have)
    throw std::runtime_error("navigator: step t out of range (at least one view required)");

  const Var views_t = t == t_have ? view_mat : tape.slice(view_mat, 0, 0, t);

  const Var seg = tape.param(params_.at("seg"));
  const Var pos_text = tape.param(params_.at("pos.text"));
  const Var pos_view = tape.param(params_.at("pos.view"));

  // segment + per-segment position embeddings (positions contiguous from 0)
  Var text = tape.add(sent_mat, tape.slice(pos_text, 0, 0, m));
  text = tape.add_bias(text, tape.row(seg, 0));
  Var view = tape.add(views_t, tape.slice(pos_view, 0, 0, t));
  view = tape.add_bias(view, tape.row(seg, 1));

  Var x = tape.concat(std::array<Var, 2>{text, view}, 0);
  const std::vector<char> mask = visibility_mask(m, t);

  for (int l = 0; l < cfg_.n_layers; ++l) {
    const std::string p = "xmod.l" + std::to_string(l) + ".";
    AttentionParams ap{
        tape.param(params_.at(p + "attn.wq")), tape.param(params_.at(p + "attn.wk")),
        tape.param(params_.at(p + "attn.wv")), tape.param(params_.at(p + "attn.wo")),
        tape.param(params_.at(p + "attn.bq")), tape.param(params_.at(p + "attn.bk")),
        tape.param(params_.at(p + "attn.bv")), tape.param(params_.at(p + "attn.bo"))};
    const Var attn = multi_head_attention(tape, x, x, cfg_.n_heads, &mask, ap);
    x = tape.layer_norm(tape.add(x, attn), tape.param(params_.at(p + "ln1.g")),
                        tape.param(params_.at(p + "ln1.b")));
    const Var ff = tape.linear(
        tape.relu(tape.linear(x, tape.param(params_.at(p + "ffn.w1")),
                              tape.param(params_.at(p + "ffn.b1")))),
        tape.param(params_.at(p + "ffn.w2")), tape.param(params_.at(p + "ffn.b2")));
    x = tape.layer_norm(tape.add(x, ff), tape.param(params_.at(p + "ln2.g")),
                        tape.param(params_.at(p + "ln2.b")));
  }
  return x;
}

Var NavigatorModel::step_logits(Tape& tape, Var sent_mat, Var view_mat, int t) {
  const int m = tape.shape(sent_mat)[0];
  const Var out = cross_modal_forward(tape, sent_mat, view_mat, t);
  const Var at_t = tape.row(out, m + t - 1);  // position of view t
  return tape.linear(at_t, tape.param(params_.at("act.w")), tape.param(params_.at("act.b")));
}

Action NavigatorModel::greedy_action(std::span<const Real> logits) {
  int best = 0;
  for (int k = 1; k < kActionCount; ++k)
    if (logits[k] > logits[best]) best = k;  // ties keep Left < Right < Forward < Stop
  return static_cast<Action>(best);
}

Var NavigatorModel::episode_loss(Tape& tape, const EpisodeBatch& batch) {
  const int t_total = static_cast<int>(batch.views.size());
  if (t_total == 0) throw std::runtime_error("navigator: empty episode");
  if (batch.gold.size() != batch.views.size() || batch.headings.size() != batch.views.size())
    throw std::runtime_error("navigator: episode field lengths disagree");

  const Var sent_mat = sentence_matrix(tape, batch.sentence_ids);
  const Var view_mat = view_matrix(tape, batch.views, batch.headings);

  Var total;
  for (int t = 1; t <= t_total; ++t) {
    const Var logits = step_logits(tape, sent_mat, view_mat, t);
    const Var nll = tape.cross_entropy(logits, static_cast<int>(batch.gold[t - 1]));
    total = total.valid() ? tape.add(total, nll) : nll;
  }
  return tape.scale(total, 1.0 / static_cast<Real>(t_total));
}

double NavigatorModel::train_episode(const EpisodeBatch& batch, const AdamConfig& adam) {
  Tape tape;
  const Var loss = episode_loss(tape, batch);
  params_.zero_grads();
  tape.backward(loss);
  const double value = tape.scalar_value(loss);
  adam_step(params_, adam);
  return value;
}

Trajectory NavigatorModel::navigate(const NavGraph& graph, const AgentState& start,
                                    const Instruction& instr, const FeatureFn& features,
                                    int max_steps, RolloutLog* log) {
  if (max_steps < 1) throw std::runtime_error("navigator: max_steps must be >= 1");
  if (!state_valid(graph, start)) throw std::runtime_error("navigator: invalid start state");

  const auto sentences = sentence_ids(instr);

  // sentence encodings and already-seen view encodings are frozen values;
  // re-inject them as constants on each step's tape
  std::vector<std::vector<Real>> sent_vals;
  {
    Tape tape;
    for (const auto& ids : sentences) sent_vals.push_back(tape.value(encode_sentence(tape, ids)));
  }
  const int m = static_cast<int>(sent_vals.size());
  const int d = cfg_.model_dim;
  std::vector<Real> sent_flat;
  for (const auto& row : sent_vals) sent_flat.insert(sent_flat.end(), row.begin(), row.end());

  Trajectory traj;
  traj.states.push_back(start);
  std::vector<Real> view_flat;

  for (int stepno = 0; stepno < max_steps; ++stepno) {
    const AgentState& cur = traj.states.back();
    const NavPanoFeature* feat = features(graph.id(cur.node));
    if (!feat)
      throw std::runtime_error("navigator: missing panorama feature for '" + graph.id(cur.node) +
                               "'");
    {
      Tape tape;
      const auto& hv = tape.value(encode_panorama(tape, *feat, cur.heading));
      view_flat.insert(view_flat.end(), hv.begin(), hv.end());
    }
    const int t = stepno + 1;

    Tape tape;
    const Var sent_mat = tape.constant({m, d}, sent_flat);
    const Var view_mat = tape.constant({t, d}, view_flat);
    const Var logits = step_logits(tape, sent_mat, view_mat, t);
    const auto& lv = tape.value(logits);
    const Action a = greedy_action(lv);
    if (log) {
      RolloutStep rs;
      rs.action = a;
      for (int k = 0; k < kActionCount; ++k) rs.logits[k] = lv[k];
      log->steps.push_back(rs);
    }
    if (a == Action::Stop) break;
    traj.states.push_back(step(graph, cur, a));
  }
  return traj;
}

std::vector<Action> infer_actions(const NavGraph& graph, const Trajectory& traj) {
  std::vector<Action> out;
  for (size_t i = 1; i < traj.states.size(); ++i) {
    const AgentState& a = traj.states[i - 1];
    const AgentState& b = traj.states[i];
    if (a.node == b.node) {
      if (step(graph, a, Action::Right) == b) {
        out.push_back(Action::Right);
      } else if (step(graph, a, Action::Left) == b) {
        out.push_back(Action::Left);
      } else {
        throw std::runtime_error("trajectory: rotation is not a single turn step");
      }
    } else {
      if (!(step(graph, a, Action::Forward) == b))
        throw std::runtime_error("trajectory: move is not a forward step");
      out.push_back(Action::Forward);
    }
  }
  out.push_back(Action::Stop);
  return out;
}

}  // namespace vlnwb
