#include "vlnwb/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace vlnwb {

using nlohmann::ordered_json;

uint64_t fnv1a64(std::string_view bytes) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

ordered_json speaker_json(const SpeakerRunConfig& s) {
  ordered_json j;
  j["d_v"] = s.model.d_v;
  j["emb_dim"] = s.model.emb_dim;
  j["hidden_dim"] = s.model.hidden_dim;
  j["max_views"] = s.model.max_views;
  j["max_sentences"] = s.model.max_sentences;
  j["decode_cap_slack"] = s.model.decode_cap_slack;
  j["lr"] = s.lr;
  j["steps"] = s.steps;
  j["batch"] = s.batch;
  return j;
}

ordered_json navigator_json(const NavigatorRunConfig& n) {
  ordered_json j;
  j["n_layers"] = n.model.n_layers;
  j["n_heads"] = n.model.n_heads;
  j["model_dim"] = n.model.model_dim;
  j["ff_dim"] = n.model.ff_dim;
  j["crop_width"] = n.model.crop_width;
  j["feature_height"] = n.model.feature_height;
  j["cnn_channels"] = n.model.cnn_channels;
  j["emb_dim"] = n.model.emb_dim;
  j["max_sentences"] = n.model.max_sentences;
  j["max_steps"] = n.model.max_steps;
  j["split_sentences"] = n.model.split_sentences;
  j["text_sees_views"] = n.model.text_sees_views;
  j["lr"] = n.lr;
  j["embedder_lr"] = n.embedder_lr;
  j["pretrain_epochs"] = n.pretrain_epochs;
  j["finetune_epochs"] = n.finetune_epochs;
  j["batch"] = n.batch;
  j["lr_decay"] = n.lr_decay;
  j["lr_decay_every_epochs"] = n.lr_decay_every_epochs;
  j["rollout_max_steps"] = n.rollout_max_steps;
  return j;
}

void speaker_from_json(const ordered_json& j, SpeakerRunConfig& s) {
  s.model.d_v = j.value("d_v", s.model.d_v);
  s.model.emb_dim = j.value("emb_dim", s.model.emb_dim);
  s.model.hidden_dim = j.value("hidden_dim", s.model.hidden_dim);
  s.model.max_views = j.value("max_views", s.model.max_views);
  s.model.max_sentences = j.value("max_sentences", s.model.max_sentences);
  s.model.decode_cap_slack = j.value("decode_cap_slack", s.model.decode_cap_slack);
  s.lr = j.value("lr", s.lr);
  s.steps = j.value("steps", s.steps);
  s.batch = j.value("batch", s.batch);
}

void navigator_from_json(const ordered_json& j, NavigatorRunConfig& n) {
  n.model.n_layers = j.value("n_layers", n.model.n_layers);
  n.model.n_heads = j.value("n_heads", n.model.n_heads);
  n.model.model_dim = j.value("model_dim", n.model.model_dim);
  n.model.ff_dim = j.value("ff_dim", n.model.ff_dim);
  n.model.crop_width = j.value("crop_width", n.model.crop_width);
  n.model.feature_height = j.value("feature_height", n.model.feature_height);
  if (j.contains("cnn_channels")) {
    const auto c = j.at("cnn_channels").get<std::vector<int>>();
    if (c.size() != 3) throw std::runtime_error("config: cnn_channels wants 3 entries");
    std::copy(c.begin(), c.end(), n.model.cnn_channels.begin());
  }
  n.model.emb_dim = j.value("emb_dim", n.model.emb_dim);
  n.model.max_sentences = j.value("max_sentences", n.model.max_sentences);
  n.model.max_steps = j.value("max_steps", n.model.max_steps);
  n.model.split_sentences = j.value("split_sentences", n.model.split_sentences);
  n.model.text_sees_views = j.value("text_sees_views", n.model.text_sees_views);
  n.lr = j.value("lr", n.lr);
  n.embedder_lr = j.value("embedder_lr", n.embedder_lr);
  n.pretrain_epochs = j.value("pretrain_epochs", n.pretrain_epochs);
  n.finetune_epochs = j.value("finetune_epochs", n.finetune_epochs);
  n.batch = j.value("batch", n.batch);
  n.lr_decay = j.value("lr_decay", n.lr_decay);
  n.lr_decay_every_epochs = j.value("lr_decay_every_epochs", n.lr_decay_every_epochs);
  n.rollout_max_steps = j.value("rollout_max_steps", n.rollout_max_steps);
}

ordered_json config_json(const RunConfig& c) {
  ordered_json j;
  j["seed"] = c.seed;
  j["out_dir"] = c.out_dir.string();
  j["external_manifest"] = c.external_manifest.string();
  j["target_train_manifest"] = c.target_train_manifest.string();
  j["target_dev_manifest"] = c.target_dev_manifest.string();
  j["style_instructions"] = c.style_instructions ? c.style_instructions->string() : "";
  j["pretrain_instructions"] = c.pretrain_instructions;
  j["success_threshold_hops"] = c.metrics.success_threshold_hops;
  j["dtw_distance_scale"] = c.metrics.dtw_distance_scale;
  j["max_panoramas"] = c.max_panoramas;
  j["pano_filter"] = c.pano_filter;
  j["speaker"] = speaker_json(c.speaker);
  j["navigator"] = navigator_json(c.navigator);
  return j;
}

}  // namespace

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path.string());
  ordered_json j;
  in >> j;
  RunConfig c;
  c.seed = j.value("seed", c.seed);
  c.out_dir = j.value("out_dir", c.out_dir.string());
  c.external_manifest = j.value("external_manifest", std::string{});
  c.target_train_manifest = j.value("target_train_manifest", std::string{});
  c.target_dev_manifest = j.value("target_dev_manifest", std::string{});
  const std::string style = j.value("style_instructions", std::string{});
  if (!style.empty()) c.style_instructions = style;
  c.pretrain_instructions = j.value("pretrain_instructions", c.pretrain_instructions);
  c.metrics.success_threshold_hops =
      j.value("success_threshold_hops", c.metrics.success_threshold_hops);
  c.metrics.dtw_distance_scale = j.value("dtw_distance_scale", c.metrics.dtw_distance_scale);
  c.max_panoramas = j.value("max_panoramas", c.max_panoramas);
  c.pano_filter = j.value("pano_filter", c.pano_filter);
  if (j.contains("speaker")) speaker_from_json(j.at("speaker"), c.speaker);
  if (j.contains("navigator")) navigator_from_json(j.at("navigator"), c.navigator);
  return c;
}

std::string RunConfig::canonical_json() const { return config_json(*this).dump(); }

uint64_t RunConfig::config_hash() const {
  // out_dir is where results land, not what they are; identical runs into
  // different directories must produce identical artifacts
  ordered_json j = config_json(*this);
  j["out_dir"] = "";
  return fnv1a64(j.dump());
}

void RunConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("config: cannot write " + path.string());
  out << config_json(*this).dump(2) << "\n";
}

Vocab build_vocab_from_instructions(const std::vector<std::filesystem::path>& jsonl_paths) {
  std::vector<std::vector<std::string>> corpus;
  for (const auto& path : jsonl_paths) {
    for (const auto& rec : read_instruction_jsonl(path)) {
      const Instruction instr = instruction_from_record(rec, default_tagger());
      std::vector<std::string> stream;
      for (const auto& tok : instr.flat_tokens()) stream.push_back(tok.lower());
      corpus.push_back(std::move(stream));
    }
  }
  return Vocab::build(corpus);
}

void save_vocab(const std::filesystem::path& path, const Vocab& vocab) {
  ordered_json j = ordered_json::array();
  for (const auto& w : vocab.words()) j.push_back(w);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("vocab: cannot write " + path.string());
  out << j.dump() << "\n";
}

Vocab load_vocab(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("vocab: cannot open " + path.string());
  ordered_json j;
  in >> j;
  const auto words = j.get<std::vector<std::string>>();
  if (words.size() < 5) throw std::runtime_error("vocab: file is not a saved vocabulary");
  std::vector<std::vector<std::string>> corpus{
      std::vector<std::string>(words.begin() + 5, words.end())};
  Vocab v = Vocab::build(corpus);
  if (v.words() != words) throw std::runtime_error("vocab: file is not a saved vocabulary");
  return v;
}

std::vector<double> speaker_slice_headings() {
  std::vector<double> headings;
  for (int i = 0; i < kViewSlices; ++i) headings.push_back(45.0 * i);
  return headings;
}

SpeakerSample make_speaker_sample(const Dataset& ds, const Sample& sample, SpeakerModel& model,
                                  const MaskPolicy& policy) {
  SpeakerSample out;
  const auto headings = speaker_slice_headings();
  std::vector<NodeIndex> panos = dedup_nodes(sample.trajectory);
  if (static_cast<int>(panos.size()) > model.config().max_views)
    panos.resize(model.config().max_views);
  for (NodeIndex n : panos) {
    const auto& rec = ds.features.get(speaker_feature_id(ds.graph.id(n)));
    out.views.push_back(SpeakerViewFeature::build(rec.values, model.config().d_v, headings));
  }
  out.tmpl = mask_instruction(sample.instruction, policy);
  out.tmpl.route_id = sample.route_id;
  out.target_ids = model.target_ids(sample.instruction);
  return out;
}

std::vector<SpeakerSample> make_speaker_samples(const Dataset& ds, SpeakerModel& model,
                                                const MaskPolicy& policy) {
  std::vector<SpeakerSample> out;
  for (const auto& sample : ds.samples) out.push_back(make_speaker_sample(ds, sample, model, policy));
  return out;
}

SpeakerTrainResult train_speaker(SpeakerModel& model, const Dataset& train, const RunConfig& cfg) {
  const MaskPolicy policy = MaskPolicy::defaults(MaskMode::ObjectMask);
  const auto samples = make_speaker_samples(train, model, policy);
  if (samples.empty()) throw std::runtime_error("speaker: no training samples");

  Rng rng(cfg.seed ^ 0x5eeda11ULL);
  AdamConfig adam;
  adam.lr = cfg.speaker.lr;

  SpeakerTrainResult result;
  std::vector<SpeakerSample> batch;
  for (int step = 0; step < cfg.speaker.steps; ++step) {
    batch.clear();
    for (int b = 0; b < cfg.speaker.batch; ++b)
      batch.push_back(samples[rng.uniform_int(static_cast<int>(samples.size()))]);
    result.losses.push_back(model.train_step(batch, adam));
  }

  std::filesystem::create_directories(cfg.out_dir);
  result.checkpoint = cfg.out_dir / "speaker.ckpt";
  CheckpointMeta meta;
  meta.seed = cfg.seed;
  meta.step = model.params().step;
  meta.config_hash = cfg.config_hash();
  meta.rng_state = rng.state();
  save_checkpoint(result.checkpoint, model.params(), meta);
  save_vocab(result.checkpoint.string() + ".vocab.json", model.vocab());
  return result;
}

std::vector<InstructionRecord> infer_style(SpeakerModel& model, const Dataset& external) {
  std::vector<InstructionRecord> out;
  const MaskPolicy policy = MaskPolicy::defaults(MaskMode::StreetNameMask);
  for (const auto& sample : external.samples) {
    const SpeakerSample prepared = make_speaker_sample(external, sample, model, policy);
    const auto tokens = model.decode(prepared.tmpl, prepared.views);
    InstructionRecord rec;
    rec.route_id = sample.route_id;
    rec.style = Style::StyleTransferred;
    for (const auto& t : tokens) {
      if (!rec.text.empty()) rec.text += ' ';
      rec.text += t;
    }
    if (rec.text.empty()) rec.text = ".";
    out.push_back(std::move(rec));
  }
  return out;
}

EpisodeBatch make_episode(const Dataset& ds, const Sample& sample, NavigatorModel& model) {
  EpisodeBatch ep;
  ep.sentence_ids = model.sentence_ids(sample.instruction);
  ep.gold = infer_actions(ds.graph, sample.trajectory);
  for (const auto& s : sample.trajectory.states) {
    const auto& rec = ds.features.get(nav_feature_id(ds.graph.id(s.node)));
    if (rec.dims.size() != 3)
      throw std::runtime_error("dataset: nav feature for '" + ds.graph.id(s.node) +
                               "' is not a (c,h,w) map");
    ep.views.push_back(
        NavPanoFeature::from_floats(rec.values, rec.dims[0], rec.dims[1], rec.dims[2]));
    ep.headings.push_back(s.heading);
  }
  return ep;
}

NavigatorTrainResult train_navigator(NavigatorModel& model, const Dataset& train,
                                     const RunConfig& cfg, int epochs,
                                     const std::filesystem::path& checkpoint_path,
                                     const std::optional<std::filesystem::path>& resume_checkpoint,
                                     double lr) {
  if (train.samples.empty()) throw std::runtime_error("navigator: no training samples");
  std::vector<EpisodeBatch> episodes;
  for (const auto& sample : train.samples) episodes.push_back(make_episode(train, sample, model));

  Rng train_rng(cfg.seed ^ 0x7ab1e5ULL);
  uint64_t start_epoch = 0;
  if (resume_checkpoint) {
    const CheckpointMeta meta = load_checkpoint(*resume_checkpoint, model.params());
    train_rng.set_state(meta.rng_state);
    start_epoch = meta.epoch;
  }

  NavigatorTrainResult result;
  std::vector<int> order(episodes.size());

  for (uint64_t epoch = start_epoch; epoch < static_cast<uint64_t>(epochs); ++epoch) {
    // identity then seeded shuffle: epoch order is a pure function of the RNG
    // state at epoch start, so resumed runs replay the uninterrupted schedule
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
      std::swap(order[i], order[train_rng.uniform_int(i + 1)]);

    AdamConfig adam;
    adam.lr = lr * std::pow(cfg.navigator.lr_decay,
                            static_cast<double>(epoch / cfg.navigator.lr_decay_every_epochs));
    adam.lr_overrides = {{"embed.", cfg.navigator.embedder_lr}};

    double epoch_loss = 0.0;
    size_t i = 0;
    while (i < order.size()) {
      const size_t chunk = std::min<size_t>(cfg.navigator.batch, order.size() - i);
      model.params().zero_grads();
      double chunk_loss = 0.0;
      for (size_t b = 0; b < chunk; ++b) {
        Tape tape;
        const Var loss =
            tape.scale(model.episode_loss(tape, episodes[order[i + b]]), 1.0 / chunk);
        tape.backward(loss);
        chunk_loss += tape.scalar_value(loss);
      }
      adam_step(model.params(), adam);
      epoch_loss += chunk_loss * chunk;
      i += chunk;
    }
    result.epoch_losses.push_back(epoch_loss / static_cast<double>(order.size()));

    CheckpointMeta meta;
    meta.seed = cfg.seed;
    meta.step = model.params().step;
    meta.epoch = epoch + 1;
    meta.config_hash = cfg.config_hash();
    meta.rng_state = train_rng.state();
    save_checkpoint(checkpoint_path, model.params(), meta);
  }

  if (start_epoch >= static_cast<uint64_t>(epochs)) {
    // nothing left to train; still materialize the checkpoint at this path
    CheckpointMeta meta;
    meta.seed = cfg.seed;
    meta.step = model.params().step;
    meta.epoch = start_epoch;
    meta.config_hash = cfg.config_hash();
    meta.rng_state = train_rng.state();
    save_checkpoint(checkpoint_path, model.params(), meta);
  }
  save_vocab(checkpoint_path.string() + ".vocab.json", model.vocab());
  result.checkpoint = checkpoint_path;
  return result;
}

EvalResult evaluate_navigator(NavigatorModel& model, const Dataset& dev, const RunConfig& cfg) {
  EvalResult out;
  NavigatorModel::FeatureFn features = [&](const std::string& pano_id) -> const NavPanoFeature* {
    static thread_local NavPanoFeature scratch;
    if (!dev.features.contains(nav_feature_id(pano_id))) return nullptr;
    const auto& rec = dev.features.get(nav_feature_id(pano_id));
    scratch = NavPanoFeature::from_floats(rec.values, rec.dims[0], rec.dims[1], rec.dims[2]);
    return &scratch;
  };

  for (const auto& sample : dev.samples) {
    RolloutLog log;
    Trajectory pred = model.navigate(dev.graph, sample.trajectory.start(), sample.instruction,
                                     features, cfg.navigator.rollout_max_steps, &log);
    pred.route_id = sample.route_id;
    out.per_sample.push_back(
        evaluate_sample(pred, sample.trajectory, sample.goal, dev.graph, cfg.metrics));
    out.route_ids.push_back(sample.route_id);
    out.rollouts.push_back(std::move(pred));
    out.logs.push_back(std::move(log));
  }
  out.summary = aggregate(out.per_sample);
  return out;
}

std::string metric_report_json(const EvalResult& eval, uint64_t config_hash, uint64_t seed) {
  ordered_json j;
  j["samples"] = eval.summary.sample_count;
  j["tc"] = eval.summary.mean.tc;
  j["spd"] = eval.summary.mean.spd;
  j["sed"] = eval.summary.mean.sed;
  j["cls"] = eval.summary.mean.cls;
  j["ndtw"] = eval.summary.mean.ndtw;
  j["sdtw"] = eval.summary.mean.sdtw;
  if (eval.summary.success_spd)
    j["s_spd"] = *eval.summary.success_spd;
  else
    j["s_spd"] = nullptr;
  if (eval.summary.failure_spd)
    j["f_spd"] = *eval.summary.failure_spd;
  else
    j["f_spd"] = nullptr;
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  return j.dump(2);
}

std::string per_sample_jsonl(const EvalResult& eval) {
  std::string out;
  for (size_t i = 0; i < eval.per_sample.size(); ++i) {
    const auto& m = eval.per_sample[i];
    ordered_json j;
    j["route_id"] = eval.route_ids[i];
    j["tc"] = m.tc;
    j["spd"] = m.spd;
    j["sed"] = m.sed;
    j["cls"] = m.cls;
    j["ndtw"] = m.ndtw;
    j["sdtw"] = m.sdtw;
    out += j.dump();
    out += "\n";
  }
  return out;
}

TwoStageResult run_two_stage(const RunConfig& cfg) {
  std::filesystem::create_directories(cfg.out_dir);
  TwoStageResult result;
  result.config_hash = cfg.config_hash();

  IngestOptions opts;
  opts.max_panoramas = cfg.max_panoramas;
  opts.pano_filter = cfg.pano_filter;

  const Dataset target_train = ingest(DatasetManifest::load(cfg.target_train_manifest), opts);
  const Dataset target_dev = ingest(DatasetManifest::load(cfg.target_dev_manifest), opts);

  const bool pretrain = cfg.pretrain_instructions != "none" &&
                        cfg.navigator.pretrain_epochs > 0 && !cfg.external_manifest.empty();

  // one vocabulary per run, from every instruction source in play
  std::vector<std::filesystem::path> vocab_sources{
      DatasetManifest::load(cfg.target_train_manifest).instructions,
      DatasetManifest::load(cfg.target_dev_manifest).instructions};
  if (!cfg.external_manifest.empty())
    vocab_sources.push_back(DatasetManifest::load(cfg.external_manifest).instructions);
  if (cfg.style_instructions) vocab_sources.push_back(*cfg.style_instructions);
  const Vocab vocab = build_vocab_from_instructions(vocab_sources);

  NavigatorModel model(cfg.navigator.model, vocab, cfg.seed);

  if (pretrain) {
    IngestOptions ext_opts = opts;
    if (cfg.pretrain_instructions == "style") {
      if (!cfg.style_instructions)
        throw std::runtime_error("pipeline: style pretraining needs style_instructions");
      ext_opts.override_instructions = cfg.style_instructions;
    }
    const Dataset external = ingest(DatasetManifest::load(cfg.external_manifest), ext_opts);
    StageResult stage;
    stage.name = "pretrain";
    const auto trained =
        train_navigator(model, external, cfg, cfg.navigator.pretrain_epochs,
                        cfg.out_dir / "navigator_pretrain.ckpt", std::nullopt, cfg.navigator.lr);
    stage.epoch_losses = trained.epoch_losses;
    stage.checkpoint = trained.checkpoint;
    stage.dev = evaluate_navigator(model, target_dev, cfg).summary;
    result.pretrain = std::move(stage);
    model.params().reset_optimizer();  // the fine-tuning stage optimizes afresh
  }

  StageResult stage;
  stage.name = "finetune";
  const auto trained =
      train_navigator(model, target_train, cfg, cfg.navigator.finetune_epochs,
                      cfg.out_dir / "navigator_finetune.ckpt", std::nullopt, cfg.navigator.lr);
  stage.epoch_losses = trained.epoch_losses;
  stage.checkpoint = trained.checkpoint;
  stage.dev = evaluate_navigator(model, target_dev, cfg).summary;
  result.finetune = std::move(stage);
  return result;
}

}  // namespace vlnwb
