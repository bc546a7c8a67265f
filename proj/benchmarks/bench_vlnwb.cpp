#include <benchmark/benchmark.h>

#include "vlnwb/fixtures.hpp"
#include "vlnwb/metrics.hpp"
#include "vlnwb/navigator.hpp"
#include "vlnwb/pipeline.hpp"
#include "vlnwb/rng.hpp"

using namespace vlnwb;

namespace {

NavGraph grid_graph(int side) {
  std::vector<std::string> ids;
  std::vector<NavGraph::EdgeRecord> edges;
  auto name = [&](int r, int c) { return "g" + std::to_string(r) + "_" + std::to_string(c); };
  for (int r = 0; r < side; ++r)
    for (int c = 0; c < side; ++c) ids.push_back(name(r, c));
  for (int r = 0; r < side; ++r)
    for (int c = 0; c < side; ++c) {
      if (c + 1 < side) edges.push_back({name(r, c), name(r, c + 1), 90.0, 270.0});
      if (r + 1 < side) edges.push_back({name(r, c), name(r + 1, c), 180.0, 0.0});
    }
  return NavGraph::build(ids, edges);
}

Trajectory random_walk(Rng& rng, const NavGraph& g, int steps) {
  const NodeIndex start = rng.uniform_int(g.node_count());
  Trajectory t;
  t.states.push_back({start, g.neighbors(start).front().bearing});
  for (int i = 0; i < steps; ++i)
    t.states.push_back(step(g, t.states.back(),
                            rng.uniform_int(2) ? Action::Forward : Action::Right));
  return t;
}

void BM_ShortestPath(benchmark::State& state) {
  const NavGraph g = grid_graph(static_cast<int>(state.range(0)));
  Rng rng(1);
  for (auto _ : state) {
    const int a = rng.uniform_int(g.node_count());
    const int b = rng.uniform_int(g.node_count());
    benchmark::DoNotOptimize(g.shortest_path_len(a, b));
  }
}
BENCHMARK(BM_ShortestPath)->Arg(8)->Arg(16)->Arg(32);

void BM_Ndtw(benchmark::State& state) {
  const NavGraph g = grid_graph(8);
  Rng rng(2);
  const MetricConfig cfg;
  const Trajectory ref = random_walk(rng, g, static_cast<int>(state.range(0)));
  const Trajectory pred = random_walk(rng, g, static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(ndtw(pred, ref, g, cfg));
}
BENCHMARK(BM_Ndtw)->Arg(10)->Arg(25)->Arg(50);

void BM_MaskInstruction(benchmark::State& state) {
  Instruction instr = split_and_tokenize(
      "head north on the wide street past the red awning. turn left at the 2nd light. "
      "walk along the narrow sidewalk toward the tall tree. stop near the blue mailbox.");
  pos_tag(instr, default_tagger());
  const MaskPolicy policy = MaskPolicy::defaults();
  for (auto _ : state) benchmark::DoNotOptimize(mask_instruction(instr, policy));
}
BENCHMARK(BM_MaskInstruction);

void BM_NavigatorEpisodeStep(benchmark::State& state) {
  NavigatorConfig cfg;
  cfg.n_layers = 2;
  cfg.n_heads = 4;
  cfg.model_dim = static_cast<int>(state.range(0));
  cfg.ff_dim = 2 * cfg.model_dim;
  cfg.crop_width = 8;
  cfg.feature_height = 8;
  cfg.cnn_channels = {4, 6, 6};
  cfg.emb_dim = 12;
  cfg.max_sentences = 6;
  cfg.max_steps = 12;
  const std::vector<std::vector<std::string>> corpus{
      {"turn", "left", "right", "at", "the", "light", "stop", "go", "straight", "."}};
  NavigatorModel model(cfg, Vocab::build(corpus), 3);

  Rng rng(4);
  EpisodeBatch ep;
  ep.sentence_ids = model.sentence_ids(split_and_tokenize("go straight. turn left. stop."));
  for (int t = 0; t < 8; ++t) {
    std::vector<float> data(2 * 8 * 16);
    for (auto& v : data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    ep.views.push_back(NavPanoFeature::from_floats(data, 2, 8, 16));
    ep.headings.push_back(45.0 * rng.uniform_int(8));
    ep.gold.push_back(t == 7 ? Action::Stop : Action::Forward);
  }
  AdamConfig adam;
  for (auto _ : state) benchmark::DoNotOptimize(model.train_episode(ep, adam));
}
BENCHMARK(BM_NavigatorEpisodeStep)->Arg(16)->Arg(24)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_SpeakerTrainStep(benchmark::State& state) {
  SpeakerConfig cfg;
  cfg.d_v = 16;
  cfg.emb_dim = 24;
  cfg.hidden_dim = static_cast<int>(state.range(0));
  cfg.max_views = 8;
  cfg.max_sentences = 6;
  const std::vector<std::vector<std::string>> corpus{
      {"turn", "left", "right", "at", "the", "light", "stop", "go", "straight", ".", "tree",
       "awning", "red", "walk"}};
  SpeakerModel model(cfg, Vocab::build(corpus), 5);

  Rng rng(6);
  SpeakerSample s;
  std::vector<double> headings;
  for (int i = 0; i < kViewSlices; ++i) headings.push_back(45.0 * i);
  for (int v = 0; v < 4; ++v) {
    std::vector<float> vis(kViewSlices * cfg.d_v);
    for (auto& x : vis) x = static_cast<float>(rng.uniform(-1.0, 1.0));
    s.views.push_back(SpeakerViewFeature::build(vis, cfg.d_v, headings));
  }
  Instruction instr = split_and_tokenize("walk to the red awning. turn left at the light. stop.");
  pos_tag(instr, default_tagger());
  s.tmpl = mask_instruction(instr, MaskPolicy::defaults());
  s.target_ids = model.target_ids(instr);
  AdamConfig adam;
  const std::vector<SpeakerSample> batch{s};
  for (auto _ : state) benchmark::DoNotOptimize(model.train_step(batch, adam));
}
BENCHMARK(BM_SpeakerTrainStep)->Arg(32)->Arg(48)->Arg(64)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
