// vlnwb: desk-scale outdoor VLN workbench CLI.

#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "vlnwb/fixtures.hpp"
#include "vlnwb/pipeline.hpp"

using namespace vlnwb;
namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

struct CommonArgs {
  std::string config_path;
  uint64_t seed = 0;
  bool seed_set = false;
  std::string out_dir;
};

RunConfig load_config(const CommonArgs& args) {
  RunConfig cfg = args.config_path.empty() ? RunConfig{} : RunConfig::load(args.config_path);
  if (args.seed_set) cfg.seed = args.seed;
  if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
  return cfg;
}

void add_common(CLI::App* cmd, CommonArgs& args, bool config_required = true) {
  auto* opt = cmd->add_option("--config", args.config_path, "run configuration (JSON)");
  if (config_required) opt->required();
  cmd->add_option("--seed", args.seed, "override the config seed")
      ->each([&args](const std::string&) { args.seed_set = true; });
  cmd->add_option("--out-dir", args.out_dir, "override the config output directory");
}

void write_text(const fs::path& path, const std::string& body) {
  fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << body;
  if (!body.empty() && body.back() != '\n') out << "\n";
}

ordered_json report_header(const RunConfig& cfg) {
  ordered_json j;
  j["config_hash"] = cfg.config_hash();
  j["seed"] = cfg.seed;
  return j;
}

Vocab run_vocab(const RunConfig& cfg) {
  std::vector<fs::path> sources;
  for (const auto& manifest_path :
       {cfg.target_train_manifest, cfg.target_dev_manifest, cfg.external_manifest})
    if (!manifest_path.empty())
      sources.push_back(DatasetManifest::load(manifest_path).instructions);
  if (cfg.style_instructions) sources.push_back(*cfg.style_instructions);
  return build_vocab_from_instructions(sources);
}

IngestOptions ingest_options(const RunConfig& cfg) {
  IngestOptions opts;
  opts.max_panoramas = cfg.max_panoramas;
  opts.pano_filter = cfg.pano_filter;
  return opts;
}

int cmd_gen_fixtures(const CommonArgs& common, const fs::path& out, FixtureSpec spec) {
  const RunConfig cfg = load_config(common);
  const auto result = gen_fixtures(out, cfg.seed, spec);
  ordered_json j = report_header(cfg);
  j["world_dir"] = result.world_dir.string();
  j["external_manifest"] = result.external_manifest.string();
  j["target_train_manifest"] = result.target_train_manifest.string();
  j["target_dev_manifest"] = result.target_dev_manifest.string();
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_ingest(const CommonArgs& common, const std::string& manifest_path) {
  const RunConfig cfg = load_config(common);
  const Dataset ds = ingest(DatasetManifest::load(manifest_path), ingest_options(cfg));
  ordered_json j = report_header(cfg);
  j["loaded"] = ds.report.loaded;
  j["excluded"] = ordered_json::object();
  for (const auto& [reason, count] : ds.report.excluded) j["excluded"][reason] = count;
  j["graph_nodes"] = ds.graph.node_count();
  j["graph_edges"] = ds.graph.edge_count();
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_mask(const std::string& in_path, const std::string& out_path, const std::string& mode) {
  const MaskPolicy policy = MaskPolicy::defaults(
      mode == "street" ? MaskMode::StreetNameMask : MaskMode::ObjectMask);
  std::string body;
  for (const auto& rec : read_instruction_jsonl(in_path)) {
    const Instruction instr = instruction_from_record(rec, default_tagger());
    const InstructionTemplate tmpl = mask_instruction(instr, policy);
    ordered_json j;
    j["route_id"] = rec.route_id;
    ordered_json tokens = ordered_json::array();
    for (const auto& t : tmpl.flat_tokens()) tokens.push_back(t.is_mask ? "[MASK]" : t.token.text);
    j["template_tokens"] = tokens;
    ordered_json spans = ordered_json::array();
    for (const auto& [b, e] : tmpl.protected_spans) spans.push_back(ordered_json::array({b, e}));
    j["protected_spans"] = spans;
    body += j.dump();
    body += "\n";
  }
  write_text(out_path, body);
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

int cmd_train_mtst(const CommonArgs& common) {
  RunConfig cfg = load_config(common);
  const Dataset train = ingest(DatasetManifest::load(cfg.target_train_manifest),
                               ingest_options(cfg));
  std::vector<std::vector<std::string>> corpus;
  for (const auto& s : train.samples) {
    std::vector<std::string> stream;
    for (const auto& tok : s.instruction.flat_tokens()) stream.push_back(tok.lower());
    corpus.push_back(std::move(stream));
  }
  SpeakerModel model(cfg.speaker.model, Vocab::build(corpus), cfg.seed);
  const SpeakerTrainResult result = train_speaker(model, train, cfg);

  ordered_json j = report_header(cfg);
  j["steps"] = result.losses.size();
  j["first_loss"] = result.losses.empty() ? 0.0 : result.losses.front();
  j["final_loss"] = result.losses.empty() ? 0.0 : result.losses.back();
  j["checkpoint"] = result.checkpoint.string();
  write_text(cfg.out_dir / "mtst_train_report.json", j.dump(2));
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_infer_style(const CommonArgs& common, const std::string& checkpoint,
                    const std::string& out_path) {
  RunConfig cfg = load_config(common);
  const Vocab vocab = load_vocab(checkpoint + ".vocab.json");
  SpeakerModel model(cfg.speaker.model, vocab, cfg.seed);
  load_checkpoint(checkpoint, model.params());

  const Dataset external = ingest(DatasetManifest::load(cfg.external_manifest),
                                  ingest_options(cfg));
  const auto records = infer_style(model, external);
  write_instruction_jsonl(out_path, records);

  ordered_json meta = report_header(cfg);
  meta["checkpoint"] = checkpoint;
  meta["records"] = records.size();
  write_text(out_path + ".meta.json", meta.dump(2));
  std::cout << "wrote " << records.size() << " style-transferred instructions to " << out_path
            << "\n";
  return 0;
}

int cmd_train_nav(const CommonArgs& common, bool pretrain_stage, const std::string& init_ckpt) {
  RunConfig cfg = load_config(common);
  fs::create_directories(cfg.out_dir);
  const Vocab vocab = run_vocab(cfg);
  NavigatorModel model(cfg.navigator.model, vocab, cfg.seed);

  IngestOptions opts = ingest_options(cfg);
  fs::path manifest = cfg.target_train_manifest;
  int epochs = cfg.navigator.finetune_epochs;
  fs::path ckpt = cfg.out_dir / "navigator_finetune.ckpt";
  if (pretrain_stage) {
    manifest = cfg.external_manifest;
    epochs = cfg.navigator.pretrain_epochs;
    ckpt = cfg.out_dir / "navigator_pretrain.ckpt";
    if (cfg.pretrain_instructions == "style") {
      if (!cfg.style_instructions)
        throw std::runtime_error("style pretraining needs style_instructions in the config");
      opts.override_instructions = cfg.style_instructions;
    }
  }

  if (!init_ckpt.empty()) {
    load_checkpoint(init_ckpt, model.params());
    model.params().reset_optimizer();  // a new stage starts with a fresh optimizer
  }

  const Dataset train = ingest(DatasetManifest::load(manifest), opts);
  const auto result =
      train_navigator(model, train, cfg, epochs, ckpt, std::nullopt, cfg.navigator.lr);

  ordered_json j = report_header(cfg);
  j["stage"] = pretrain_stage ? "pretrain" : "finetune";
  j["epochs"] = result.epoch_losses.size();
  j["epoch_losses"] = result.epoch_losses;
  j["checkpoint"] = result.checkpoint.string();

  if (!cfg.target_dev_manifest.empty()) {
    const Dataset dev = ingest(DatasetManifest::load(cfg.target_dev_manifest), ingest_options(cfg));
    const EvalResult eval = evaluate_navigator(model, dev, cfg);
    j["dev"] = ordered_json::parse(metric_report_json(eval, cfg.config_hash(), cfg.seed));
  }
  const fs::path report =
      cfg.out_dir / (pretrain_stage ? "pretrain_report.json" : "finetune_report.json");
  write_text(report, j.dump(2));
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_rollout(const CommonArgs& common, const std::string& checkpoint,
                const std::string& manifest_path, const std::string& out_path) {
  RunConfig cfg = load_config(common);
  const Vocab vocab = load_vocab(checkpoint + ".vocab.json");
  NavigatorModel model(cfg.navigator.model, vocab, cfg.seed);
  load_checkpoint(checkpoint, model.params());

  const Dataset ds = ingest(DatasetManifest::load(manifest_path), ingest_options(cfg));
  const EvalResult eval = evaluate_navigator(model, ds, cfg);

  std::string body;
  for (size_t i = 0; i < eval.rollouts.size(); ++i) {
    ordered_json j;
    j["route_id"] = eval.route_ids[i];
    ordered_json nodes = ordered_json::array();
    for (const auto& s : eval.rollouts[i].states) nodes.push_back(ds.graph.id(s.node));
    j["nodes"] = nodes;
    ordered_json actions = ordered_json::array();
    ordered_json logits = ordered_json::array();
    for (const auto& step : eval.logs[i].steps) {
      actions.push_back(to_string(step.action));
      logits.push_back(step.logits);
    }
    j["actions"] = actions;
    j["logits"] = logits;
    body += j.dump();
    body += "\n";
  }
  write_text(out_path, body);
  std::cout << "wrote " << eval.rollouts.size() << " rollouts to " << out_path << "\n";
  return 0;
}

int cmd_eval(const CommonArgs& common, const std::string& checkpoint,
             const std::string& manifest_path) {
  RunConfig cfg = load_config(common);
  fs::create_directories(cfg.out_dir);
  const Vocab vocab = load_vocab(checkpoint + ".vocab.json");
  NavigatorModel model(cfg.navigator.model, vocab, cfg.seed);
  load_checkpoint(checkpoint, model.params());

  const fs::path manifest =
      manifest_path.empty() ? cfg.target_dev_manifest : fs::path(manifest_path);
  const Dataset ds = ingest(DatasetManifest::load(manifest), ingest_options(cfg));
  const EvalResult eval = evaluate_navigator(model, ds, cfg);

  ordered_json j = ordered_json::parse(metric_report_json(eval, cfg.config_hash(), cfg.seed));

  // NLG quality rides along when style-transferred instructions are configured
  if (cfg.style_instructions) {
    std::map<std::string, const Sample*> by_route;
    for (const auto& s : ds.samples) by_route[s.route_id] = &s;
    std::vector<Instruction> gen, ref;
    for (const auto& rec : read_instruction_jsonl(*cfg.style_instructions)) {
      const auto it = by_route.find(rec.route_id);
      if (it == by_route.end()) continue;
      gen.push_back(instruction_from_record(rec, default_tagger()));
      ref.push_back(it->second->instruction);
    }
    if (!gen.empty()) {
      const NlgReport nlg = evaluate_nlg(gen, ref);
      ordered_json n;
      n["bleu"] = nlg.bleu;
      n["rouge_l"] = nlg.rouge_l;
      n["mr"] = nlg.match_rate;
      n["infill_total"] = nlg.infill_total;
      n["infill_mean"] = nlg.infill_mean;
      n["pairs"] = nlg.pair_count;
      j["nlg"] = n;
    }
  }

  write_text(cfg.out_dir / "eval_report.json", j.dump(2));
  write_text(cfg.out_dir / "eval_samples.jsonl", per_sample_jsonl(eval));
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_nlg_eval(const std::string& gen_path, const std::string& ref_path) {
  std::map<std::string, InstructionRecord> refs;
  for (const auto& rec : read_instruction_jsonl(ref_path)) refs[rec.route_id] = rec;
  std::vector<Instruction> gen, ref;
  for (const auto& rec : read_instruction_jsonl(gen_path)) {
    const auto it = refs.find(rec.route_id);
    if (it == refs.end())
      throw std::runtime_error("nlg-eval: no reference for route " + rec.route_id);
    gen.push_back(instruction_from_record(rec, default_tagger()));
    ref.push_back(instruction_from_record(it->second, default_tagger()));
  }
  const NlgReport report = evaluate_nlg(gen, ref);
  ordered_json j;
  j["bleu"] = report.bleu;
  j["rouge_l"] = report.rouge_l;
  j["mr"] = report.match_rate;
  j["infill_total"] = report.infill_total;
  j["infill_mean"] = report.infill_mean;
  j["pairs"] = report.pair_count;
  std::cout << j.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vlnwb: outdoor vision-and-language navigation workbench"};
  app.require_subcommand(1);

  // gen-fixtures
  CommonArgs fx_args;
  std::string fx_out = "fixtures";
  FixtureSpec fx_spec;
  auto* fx = app.add_subcommand("gen-fixtures", "generate a synthetic fixture world");
  add_common(fx, fx_args, false);
  fx->add_option("--out", fx_out, "output directory")->required();
  fx->add_option("--nodes", fx_spec.nodes, "graph size");
  fx->add_option("--goals", fx_spec.goals, "goal node count");
  fx->add_option("--external-routes", fx_spec.external_routes, "machine-style route count");
  fx->add_option("--train-routes", fx_spec.target_train_routes, "human-style training routes");
  fx->add_option("--dev-routes", fx_spec.target_dev_routes, "human-style dev routes");

  // ingest
  CommonArgs ingest_args;
  std::string ingest_manifest;
  auto* ing = app.add_subcommand("ingest", "validate a dataset manifest");
  add_common(ing, ingest_args, false);
  ing->add_option("--manifest", ingest_manifest, "dataset manifest (JSON)")->required();

  // mask
  std::string mask_in, mask_out, mask_mode = "object";
  auto* mask = app.add_subcommand("mask", "mask instructions into templates");
  mask->add_option("--in", mask_in, "instruction JSONL")->required();
  mask->add_option("--out", mask_out, "template JSONL")->required();
  mask->add_option("--mode", mask_mode, "object | street")
      ->check(CLI::IsMember({"object", "street"}));

  // train-mtst
  CommonArgs mtst_args;
  auto* mtst = app.add_subcommand("train-mtst", "train the multimodal style transfer model");
  add_common(mtst, mtst_args);

  // infer-style
  CommonArgs style_args;
  std::string style_ckpt, style_out = "styled.jsonl";
  auto* style = app.add_subcommand("infer-style", "style-transfer external instructions");
  add_common(style, style_args);
  style->add_option("--checkpoint", style_ckpt, "speaker checkpoint")->required();
  style->add_option("--out", style_out, "output instruction JSONL");

  // pretrain-nav / finetune-nav
  CommonArgs pre_args, fine_args;
  std::string fine_init;
  auto* pre = app.add_subcommand("pretrain-nav", "pretrain the navigator on external data");
  add_common(pre, pre_args);
  auto* fine = app.add_subcommand("finetune-nav", "fine-tune the navigator on target data");
  add_common(fine, fine_args);
  fine->add_option("--init", fine_init, "initial checkpoint (e.g. the pretrain stage)");

  // rollout
  CommonArgs roll_args;
  std::string roll_ckpt, roll_manifest, roll_out = "rollouts.jsonl";
  auto* roll = app.add_subcommand("rollout", "closed-loop rollouts with a trained navigator");
  add_common(roll, roll_args);
  roll->add_option("--checkpoint", roll_ckpt, "navigator checkpoint")->required();
  roll->add_option("--manifest", roll_manifest, "dataset manifest")->required();
  roll->add_option("--out", roll_out, "rollout log JSONL");

  // eval
  CommonArgs eval_args;
  std::string eval_ckpt, eval_manifest;
  auto* ev = app.add_subcommand("eval", "rollouts plus the metric suite");
  add_common(ev, eval_args);
  ev->add_option("--checkpoint", eval_ckpt, "navigator checkpoint")->required();
  ev->add_option("--manifest", eval_manifest, "dataset manifest (defaults to target dev)");

  // nlg-eval
  std::string nlg_gen, nlg_ref;
  auto* nlg = app.add_subcommand("nlg-eval", "BLEU / ROUGE-L / MR / #infill");
  nlg->add_option("--gen", nlg_gen, "generated instruction JSONL")->required();
  nlg->add_option("--ref", nlg_ref, "reference instruction JSONL")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (fx->parsed()) return cmd_gen_fixtures(fx_args, fx_out, fx_spec);
    if (ing->parsed()) return cmd_ingest(ingest_args, ingest_manifest);
    if (mask->parsed()) return cmd_mask(mask_in, mask_out, mask_mode);
    if (mtst->parsed()) return cmd_train_mtst(mtst_args);
    if (style->parsed()) return cmd_infer_style(style_args, style_ckpt, style_out);
    if (pre->parsed()) return cmd_train_nav(pre_args, true, "");
    if (fine->parsed()) return cmd_train_nav(fine_args, false, fine_init);
    if (roll->parsed()) return cmd_rollout(roll_args, roll_ckpt, roll_manifest, roll_out);
    if (ev->parsed()) return cmd_eval(eval_args, eval_ckpt, eval_manifest);
    if (nlg->parsed()) return cmd_nlg_eval(nlg_gen, nlg_ref);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
