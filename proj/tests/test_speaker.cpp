#include "vlnwb/speaker.hpp"

#include <cmath>

#include "doctest.h"
#include "oracles.hpp"

using namespace vlnwb;

namespace {

SpeakerConfig tiny_config() {
  SpeakerConfig cfg;
  cfg.d_v = 6;
  cfg.emb_dim = 8;
  cfg.hidden_dim = 10;
  cfg.max_views = 4;
  cfg.max_sentences = 4;
  return cfg;
}

Vocab tiny_vocab() {
  const std::vector<std::vector<std::string>> corpus{
      {"turn", "left", "right", "at", "the", "light", "awning", "stop", "go", "straight", ".",
       "walk", "red", "tree"}};
  return Vocab::build(corpus);
}

SpeakerViewFeature random_view(Rng& rng, int d_v) {
  std::vector<float> visual(kViewSlices * d_v);
  for (auto& v : visual) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  std::vector<double> headings;
  for (int i = 0; i < kViewSlices; ++i) headings.push_back(45.0 * i);
  return SpeakerViewFeature::build(visual, d_v, headings);
}

SpeakerViewFeature constant_view(int d_v, float fill) {
  std::vector<float> visual(kViewSlices * d_v, fill);
  std::vector<double> headings(kViewSlices, 90.0);  // identical slices need equal orientation
  return SpeakerViewFeature::build(visual, d_v, headings);
}

InstructionTemplate template_of(const std::string& text) {
  Instruction instr = split_and_tokenize(text);
  pos_tag(instr, default_tagger());
  return mask_instruction(instr, MaskPolicy::defaults());
}

SpeakerSample sample_of(SpeakerModel& model, Rng& rng, const std::string& text, int n_views) {
  SpeakerSample s;
  for (int i = 0; i < n_views; ++i) s.views.push_back(random_view(rng, model.config().d_v));
  s.tmpl = template_of(text);
  Instruction instr = split_and_tokenize(text);
  s.target_ids = model.target_ids(instr);
  return s;
}

void zero_params(ParamStore& ps) {
  for (const auto& name : ps.names())
    std::fill(ps.at(name).data.begin(), ps.at(name).data.end(), 0.0);
}

}  // namespace

TEST_CASE("view feature: orientation block is [sin, cos] repeated 32 times") {
  Rng rng(1);
  const int d_v = 6;
  const auto f = random_view(rng, d_v);
  REQUIRE(f.slice_dim == d_v + kOrientDim);
  for (int s = 0; s < kViewSlices; ++s) {
    const double a = 45.0 * s * 3.14159265358979323846 / 180.0;
    for (int r = 0; r < kOrientRepeat; ++r) {
      CHECK(f.slices[s * f.slice_dim + d_v + 2 * r] == doctest::Approx(std::sin(a)));
      CHECK(f.slices[s * f.slice_dim + d_v + 2 * r + 1] == doctest::Approx(std::cos(a)));
    }
  }
  std::vector<float> bad(kViewSlices * d_v);
  const std::vector<double> seven(7, 0.0);
  CHECK_THROWS_AS(SpeakerViewFeature::build(bad, d_v, seven), std::runtime_error);
}

TEST_CASE("visual attention: identical slices and zero hidden give uniform weights") {
  SpeakerModel model(tiny_config(), tiny_vocab(), 17);
  Tape tape;
  const std::vector<SpeakerViewFeature> views{constant_view(model.config().d_v, 0.4f),
                                              constant_view(model.config().d_v, -0.2f)};
  const auto enc = model.encode(tape, views, template_of("turn left at the light."));

  // step 1: h_0 = 0 so scores vanish -> uniform
  for (Real w : tape.value(enc.per_step_visual_attn[0]))
    CHECK(w == doctest::Approx(1.0 / 8).epsilon(1e-12));
  // step 2: h_1 != 0 but all slices are identical -> equal scores -> uniform
  for (Real w : tape.value(enc.per_step_visual_attn[1]))
    CHECK(w == doctest::Approx(1.0 / 8).epsilon(1e-12));
}

TEST_CASE("textual attention: singleton sentence takes full weight, duplicates go uniform") {
  SpeakerModel model(tiny_config(), tiny_vocab(), 18);
  Rng rng(2);
  Tape tape;
  const std::vector<SpeakerViewFeature> views{random_view(rng, model.config().d_v)};

  const auto single = model.encode(tape, views, template_of("turn left."));
  REQUIRE(tape.value(single.per_step_textual_attn[0]).size() == 1);
  CHECK(tape.value(single.per_step_textual_attn[0])[0] == doctest::Approx(1.0).epsilon(1e-12));

  Tape tape2;
  const std::vector<SpeakerViewFeature> views2{random_view(rng, model.config().d_v),
                                               random_view(rng, model.config().d_v)};
  const auto dup = model.encode(tape2, views2, template_of("turn left. turn left."));
  for (int step = 0; step < 2; ++step)
    for (Real w : tape2.value(dup.per_step_textual_attn[step]))
      CHECK(w == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("attention weights match a hand-rolled softmax at step two") {
  SpeakerModel model(tiny_config(), tiny_vocab(), 44);
  Rng rng(12);
  const int d_v = model.config().d_v;
  const int sd = model.config().slice_dim();
  const int hidden = model.config().hidden_dim;
  const int emb = model.config().emb_dim;

  const std::vector<SpeakerViewFeature> views{random_view(rng, d_v), random_view(rng, d_v)};
  const auto tmpl = template_of("turn left at the light. go straight. stop at the tree.");

  Tape tape;
  const auto enc = model.encode(tape, views, tmpl);

  // recompute the step-2 scores from the parameters and h_1
  std::vector<Real> h1(hidden);
  for (int i = 0; i < hidden; ++i) h1[i] = tape.value(enc.states)[i];

  const auto& w_v = model.params().at("enc.w_v").data;  // (sd x hidden)
  std::vector<Real> wv_h(sd, 0.0);
  for (int r = 0; r < sd; ++r)
    for (int c = 0; c < hidden; ++c) wv_h[r] += w_v[r * hidden + c] * h1[c];
  std::vector<Real> scores(kViewSlices, 0.0);
  for (int s = 0; s < kViewSlices; ++s)
    for (int r = 0; r < sd; ++r) scores[s] += views[1].slices[s * sd + r] * wv_h[r];
  const Real mx = *std::max_element(scores.begin(), scores.end());
  Real z = 0.0;
  for (Real& v : scores) {
    v = std::exp(v - mx);
    z += v;
  }
  const auto& attn = tape.value(enc.per_step_visual_attn[1]);
  for (int s = 0; s < kViewSlices; ++s)
    CHECK(attn[s] == doctest::Approx(scores[s] / z).epsilon(1e-10));

  // textual side: three sentences, same drill with W_s and the sentence means
  const auto& w_s = model.params().at("enc.w_s").data;  // (emb x hidden)
  std::vector<Real> ws_h(emb, 0.0);
  for (int r = 0; r < emb; ++r)
    for (int c = 0; c < hidden; ++c) ws_h[r] += w_s[r * hidden + c] * h1[c];
  const auto& sent = tape.value(enc.sentence_encs);  // (3 x emb)
  std::vector<Real> tscores(3, 0.0);
  for (int j = 0; j < 3; ++j)
    for (int r = 0; r < emb; ++r) tscores[j] += sent[j * emb + r] * ws_h[r];
  const Real tmx = *std::max_element(tscores.begin(), tscores.end());
  Real tz = 0.0;
  for (Real& v : tscores) {
    v = std::exp(v - tmx);
    tz += v;
  }
  const auto& tattn = tape.value(enc.per_step_textual_attn[1]);
  for (int j = 0; j < 3; ++j)
    CHECK(tattn[j] == doctest::Approx(tscores[j] / tz).epsilon(1e-10));
}

TEST_CASE("attention weights sum to one at every step, both modalities") {
  SpeakerModel model(tiny_config(), tiny_vocab(), 19);
  Rng rng(3);
  Tape tape;
  std::vector<SpeakerViewFeature> views;
  for (int i = 0; i < 3; ++i) views.push_back(random_view(rng, model.config().d_v));
  const auto enc =
      model.encode(tape, views, template_of("go straight. turn left at the tree. stop."));
  for (int step = 0; step < 3; ++step) {
    Real v_sum = 0.0, s_sum = 0.0;
    for (Real w : tape.value(enc.per_step_visual_attn[step])) v_sum += w;
    for (Real w : tape.value(enc.per_step_textual_attn[step])) s_sum += w;
    CHECK(v_sum == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(s_sum == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("encoder: zero parameters and inputs give zero hidden states") {
  SpeakerModel model(tiny_config(), tiny_vocab(), 20);
  zero_params(model.params());
  Tape tape;
  const std::vector<SpeakerViewFeature> views{constant_view(model.config().d_v, 0.0f)};
  // orientation block is nonzero but all weights are zero
  const auto enc = model.encode(tape, views, template_of("turn left."));
  for (Real v : tape.value(enc.states)) CHECK(v == 0.0);
}

TEST_CASE("encoder: N steps produce N hidden states of constant shape") {
  SpeakerModel model(tiny_config(), tiny_vocab(), 21);
  Rng rng(4);
  for (int n = 1; n <= model.config().max_views; ++n) {
    Tape tape;
    std::vector<SpeakerViewFeature> views;
    for (int i = 0; i < n; ++i) views.push_back(random_view(rng, model.config().d_v));
    const auto enc = model.encode(tape, views, template_of("turn left."));
    CHECK(tape.shape(enc.states) == std::vector<int>{n, model.config().hidden_dim});
    CHECK(enc.per_step_visual_attn.size() == static_cast<size_t>(n));
  }
}

TEST_CASE("encoder: slice permutation leaves the grounded feature unchanged") {
  SpeakerModel model(tiny_config(), tiny_vocab(), 22);
  Rng rng(5);
  SpeakerViewFeature v = random_view(rng, model.config().d_v);
  SpeakerViewFeature permuted = v;
  // rotate slices by 3 (a joint permutation of slice vectors)
  const int sd = v.slice_dim;
  for (int s = 0; s < kViewSlices; ++s)
    std::copy(v.slices.begin() + ((s + 3) % kViewSlices) * sd,
              v.slices.begin() + ((s + 3) % kViewSlices + 1) * sd,
              permuted.slices.begin() + s * sd);

  const auto tmpl = template_of("turn left.");
  Tape t1, t2;
  const auto e1 = model.encode(t1, std::vector<SpeakerViewFeature>{v}, tmpl);
  const auto e2 = model.encode(t2, std::vector<SpeakerViewFeature>{permuted}, tmpl);
  // v-hat is a weight-matched sum over slices, so h_1 agrees up to fp reordering
  const auto& h1 = t1.value(e1.states);
  const auto& h2 = t2.value(e2.states);
  for (size_t i = 0; i < h1.size(); ++i) CHECK(h1[i] == doctest::Approx(h2[i]).epsilon(1e-10));
}

TEST_CASE("train_step: single-token target with uniform logits costs ln |vocab|") {
  SpeakerModel model(tiny_config(), tiny_vocab(), 23);
  zero_params(model.params());
  Rng rng(6);
  SpeakerSample s;
  s.views.push_back(constant_view(model.config().d_v, 0.0f));
  s.tmpl = template_of("turn left.");
  s.target_ids = {model.vocab().id("left")};
  Tape tape;
  const Var loss = model.batch_loss(tape, std::vector<SpeakerSample>{s});
  CHECK(tape.scalar_value(loss) ==
        doctest::Approx(std::log(double(model.vocab().size()))).epsilon(1e-12));
}

TEST_CASE("train_step: loss decreases on a single sample; duplicated batch matches") {
  SpeakerModel model(tiny_config(), tiny_vocab(), 24);
  Rng rng(7);
  SpeakerSample s = sample_of(model, rng, "turn left at the light. stop.", 2);

  // batch of identical samples costs exactly the single-sample loss
  Tape t1, t2;
  const double solo = t1.scalar_value(model.batch_loss(t1, std::vector<SpeakerSample>{s}));
  const double dup = t2.scalar_value(model.batch_loss(t2, std::vector<SpeakerSample>{s, s}));
  CHECK(solo == dup);

  AdamConfig adam;
  adam.lr = 1e-3;
  std::vector<double> losses;
  for (int i = 0; i < 50; ++i)
    losses.push_back(model.train_step(std::vector<SpeakerSample>{s}, adam));
  for (size_t i = 1; i < losses.size(); ++i) CHECK(losses[i] < losses[i - 1]);
}

TEST_CASE("decode: deterministic, never emits MASK or control tokens") {
  SpeakerModel model(tiny_config(), tiny_vocab(), 25);
  Rng rng(8);
  const auto tmpl = template_of("turn left at the light.");
  std::vector<SpeakerViewFeature> views{random_view(rng, model.config().d_v)};

  const auto a = model.decode(tmpl, views);
  const auto b = model.decode(tmpl, views);
  CHECK(a == b);
  const int cap = 2 * static_cast<int>(tmpl.flat_tokens().size()) + model.config().decode_cap_slack;
  CHECK(static_cast<int>(a.size()) <= cap);
  for (const auto& w : a) {
    CHECK(w != "<mask>");
    CHECK(w != "<pad>");
    CHECK(w != "<bos>");
    CHECK(w != "<eos>");
  }

  // zero parameters: still deterministic, still clean
  zero_params(model.params());
  const auto z1 = model.decode(tmpl, views);
  const auto z2 = model.decode(tmpl, views);
  CHECK(z1 == z2);
  for (const auto& w : z1) CHECK(w != "<mask>");
}

TEST_CASE("decode: overfitting one pair reproduces the target exactly") {
  SpeakerModel model(tiny_config(), tiny_vocab(), 26);
  Rng rng(9);
  const std::string text = "turn left at the light. stop.";
  SpeakerSample s = sample_of(model, rng, text, 2);

  AdamConfig adam;
  adam.lr = 5e-3;
  for (int i = 0; i < 400; ++i) model.train_step(std::vector<SpeakerSample>{s}, adam);
  CHECK(model.token_accuracy(std::vector<SpeakerSample>{s}) == doctest::Approx(1.0));

  const auto decoded = model.decode(s.tmpl, s.views);
  std::vector<std::string> expected;
  for (const auto& tok : split_and_tokenize(text).flat_tokens()) expected.push_back(tok.lower());
  CHECK(decoded == expected);
}

TEST_CASE("encoder+decoder end-to-end gradient check at toy dims") {
  SpeakerConfig cfg;
  cfg.d_v = 3;
  cfg.emb_dim = 4;
  cfg.hidden_dim = 5;
  cfg.max_views = 2;
  cfg.max_sentences = 2;
  SpeakerModel model(cfg, tiny_vocab(), 27);
  Rng rng(10);
  SpeakerSample s = sample_of(model, rng, "turn left.", 2);
  const std::vector<SpeakerSample> batch{s};
  const double err = oracles::finite_diff_max_rel_err(
      model.params(), [&](Tape& t) { return model.batch_loss(t, batch); }, 1e-5, 6);
  CHECK(err < 1e-3);
}

TEST_CASE("encode: input bounds are enforced") {
  SpeakerModel model(tiny_config(), tiny_vocab(), 28);
  Rng rng(11);
  Tape tape;
  const std::vector<SpeakerViewFeature> none;
  CHECK_THROWS_AS(model.encode(tape, none, template_of("turn left.")), std::runtime_error);

  std::vector<SpeakerViewFeature> too_many;
  for (int i = 0; i < model.config().max_views + 1; ++i)
    too_many.push_back(random_view(rng, model.config().d_v));
  CHECK_THROWS_AS(model.encode(tape, too_many, template_of("turn left.")), std::runtime_error);

  const std::vector<SpeakerViewFeature> one{random_view(rng, model.config().d_v)};
  CHECK_THROWS_AS(
      model.encode(tape, one, template_of("a. b. c. d. e.")),  // five sentences, max four
      std::runtime_error);
}
