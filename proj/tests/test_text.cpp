#include "vlnwb/text.hpp"

#include <set>

#include "doctest.h"
#include "vlnwb/nlg.hpp"
#include "vlnwb/rng.hpp"

using namespace vlnwb;

namespace {

std::vector<std::string> lower_of(const Instruction& instr) {
  std::vector<std::string> out;
  for (const auto& t : instr.flat_tokens()) out.push_back(t.lower());
  return out;
}

Instruction tagged(const std::string& text, Style style = Style::Human) {
  Instruction instr = split_and_tokenize(text, style);
  pos_tag(instr, default_tagger());
  return instr;
}

// Random tagged token stream with guiding phrases salted in, for the masking
// property tests.
Instruction random_tagged_stream(Rng& rng) {
  static const std::vector<std::pair<std::string, PosTag>> pool = {
      {"light", PosTag::NN},   {"red", PosTag::JJ},     {"quickly", PosTag::RB},
      {"cars", PosTag::NNS},   {"2nd", PosTag::CD},     {"your", PosTag::PRPS},
      {"walk", PosTag::VB},    {"the", PosTag::DT},     {"at", PosTag::IN},
      {"and", PosTag::CC},     {"zxqv", PosTag::UNTAGGED}, {"Main", PosTag::NNP},
      {"should", PosTag::MD},  {"down", PosTag::IN},    {"awning", PosTag::NN},
  };
  Instruction instr;
  instr.style = Style::Human;
  Sentence s;
  const int len = 3 + rng.uniform_int(12);
  for (int i = 0; i < len; ++i) {
    switch (rng.uniform_int(8)) {
      case 0:
        s.tokens.push_back({"turn", PosTag::VB});
        s.tokens.push_back({rng.uniform_int(2) ? "left" : "right", PosTag::NN});
        break;
      case 1:
        s.tokens.push_back({"take", PosTag::VB});
        s.tokens.push_back({"a", PosTag::DT});
        s.tokens.push_back({rng.uniform_int(2) ? "left" : "right", PosTag::NN});
        break;
      case 2:
        s.tokens.push_back({"go", PosTag::VB});
        s.tokens.push_back({"straight", PosTag::RB});
        break;
      default: {
        const auto& [w, t] = pool[rng.uniform_int(static_cast<int>(pool.size()))];
        s.tokens.push_back({w, t});
      }
    }
  }
  s.tokens.push_back({".", PosTag::PUNCT});
  instr.sentences.push_back(std::move(s));
  instr.raw = instr.normalized();
  return instr;
}

bool templates_equal(const InstructionTemplate& a, const InstructionTemplate& b) {
  const auto fa = a.flat_tokens(), fb = b.flat_tokens();
  if (fa.size() != fb.size()) return false;
  for (size_t i = 0; i < fa.size(); ++i) {
    if (fa[i].is_mask != fb[i].is_mask) return false;
    if (!fa[i].is_mask && fa[i].token.text != fb[i].token.text) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("split_and_tokenize: two sentences, case preserved, lowercase view") {
  const Instruction instr = split_and_tokenize("Turn left. Stop.");
  REQUIRE(instr.sentences.size() == 2);
  CHECK(lower_of(instr) == std::vector<std::string>{"turn", "left", ".", "stop", "."});
  CHECK(instr.sentences[0].tokens[0].text == "Turn");  // storage keeps the case
  CHECK(instr.normalized() == "Turn left . Stop .");
}

TEST_CASE("split_and_tokenize: empty input is an error") {
  CHECK_THROWS_AS(split_and_tokenize(""), std::runtime_error);
  CHECK_THROWS_AS(split_and_tokenize("   \t\n"), std::runtime_error);
}

TEST_CASE("split_and_tokenize: the machine-style example splits into two sentences") {
  const Instruction instr = split_and_tokenize(
      "Head northwest on E 23rd St toward 2nd Ave. Turn left at the 2nd cross street onto 3rd "
      "Ave.",
      Style::Machine);
  CHECK(instr.sentences.size() == 2);
  CHECK(instr.sentences[0].tokens.back().text == ".");
  CHECK(instr.sentences[1].tokens.back().text == ".");
}

TEST_CASE("split_and_tokenize: every sentence ends in a full stop") {
  for (const char* text :
       {"turn left", "go straight. then stop", "wait! where? here.", "one, two; three"}) {
    const Instruction instr = split_and_tokenize(text);
    for (const auto& s : instr.sentences) {
      REQUIRE(!s.tokens.empty());
      const std::string& last = s.tokens.back().text;
      CHECK((last == "." || last == "!" || last == "?"));
      for (const auto& t : s.tokens) CHECK(!t.text.empty());
    }
  }
}

TEST_CASE("split_and_tokenize: missing terminal stop is supplied; punctuation splits") {
  const Instruction instr = split_and_tokenize("go straight, then stop");
  REQUIRE(instr.sentences.size() == 1);
  CHECK(lower_of(instr) == std::vector<std::string>{"go", "straight", ",", "then", "stop", "."});

  // retokenizing the normalized text is a fixed point
  const Instruction again = split_and_tokenize(instr.normalized());
  CHECK(lower_of(again) == lower_of(instr));
}

TEST_CASE("pos_tag: lexicon, suffix rules, and the unknown fallback") {
  const TaggerPort& tagger = default_tagger();
  CHECK(tagger.tag("street") == PosTag::NN);
  CHECK(tagger.tag("2nd") == PosTag::CD);
  CHECK(tagger.tag("42") == PosTag::CD);
  CHECK(tagger.tag("quickly") == PosTag::RB);
  CHECK(tagger.tag("Main") == PosTag::NNP);
  CHECK(tagger.tag("turn") == PosTag::VB);
  CHECK(tagger.tag(".") == PosTag::PUNCT);
  CHECK(tagger.tag("zxqv") == PosTag::UNTAGGED);  // unknown words are never masked
}

TEST_CASE("mask_instruction: tag rule with protection") {
  const Instruction instr = tagged("turn left at the light .");
  const InstructionTemplate tmpl = mask_instruction(instr, MaskPolicy::defaults());
  CHECK(tmpl.render() == "turn left at the [MASK] .");
  REQUIRE(!tmpl.protected_spans.empty());
  CHECK(tmpl.protected_spans[0] == std::pair<int, int>{0, 2});
}

TEST_CASE("mask_instruction: fully protected sentence is unchanged") {
  const Instruction instr = tagged("turn left .");
  CHECK(mask_instruction(instr, MaskPolicy::defaults()).render() == "turn left .");
}

TEST_CASE("mask_instruction: machine-style example collapses masked runs") {
  // derived by applying the default lexicon to the machine-style sample:
  // northwest/RB, E/NNP, 23rd/CD, St/NNP, 2nd/CD, Ave/NNP, street/NN are
  // maskable; head/turn/cross are verbs; left is protected by "turn left"
  const Instruction instr = tagged(
      "Head northwest on E 23rd St toward 2nd Ave. Turn left at the 2nd cross street onto 3rd "
      "Ave.",
      Style::Machine);
  const InstructionTemplate tmpl =
      mask_instruction(instr, MaskPolicy::defaults(MaskMode::StreetNameMask));
  CHECK(tmpl.render() ==
        "Head [MASK] on [MASK] toward [MASK] . Turn left at the [MASK] cross [MASK] onto [MASK] .");
}

TEST_CASE("masking properties: protection, collapse, idempotence, subsequence") {
  const MaskPolicy policy = MaskPolicy::defaults();
  Rng rng(99);
  for (int iter = 0; iter < 2000; ++iter) {
    const Instruction instr = random_tagged_stream(rng);
    const InstructionTemplate tmpl = mask_instruction(instr, policy);
    const auto flat = tmpl.flat_tokens();

    // no adjacent masks
    for (size_t i = 1; i < flat.size(); ++i) CHECK_FALSE((flat[i].is_mask && flat[i - 1].is_mask));

    // protected phrases survive verbatim (scan the template for them)
    for (const auto& [begin, end] : tmpl.protected_spans)
      for (int k = begin; k < end; ++k) CHECK_FALSE(flat[k].is_mask);

    // every original protected occurrence is still present
    const auto orig_signals = guiding_signals(instr);
    std::vector<Token> kept;
    for (const auto& t : flat)
      if (!t.is_mask) kept.push_back(t.token);
    CHECK(guiding_signals(kept) == orig_signals);

    // unmasked tokens keep their original relative order (subsequence)
    const auto orig = instr.flat_tokens();
    size_t pos = 0;
    for (const auto& t : kept) {
      while (pos < orig.size() && orig[pos].text != t.text) ++pos;
      const bool found = pos < orig.size();
      CHECK(found);
      if (found) ++pos;
    }

    // idempotence
    CHECK(templates_equal(mask_template(tmpl, policy), tmpl));
  }
}

TEST_CASE("guiding_signals: order, absence, and phrase variants") {
  auto sig = [](const std::string& text) { return guiding_signals(split_and_tokenize(text)); };
  CHECK(sig("turn left then turn right") ==
        std::vector<GuidingSignal>{GuidingSignal::Left, GuidingSignal::Right});
  CHECK(sig("walk to the light").empty());
  CHECK(sig("take a right at the corner and later turn left") ==
        std::vector<GuidingSignal>{GuidingSignal::Right, GuidingSignal::Left});
}

TEST_CASE("match_rate: equality of ordered signal lists") {
  const Instruction a = split_and_tokenize("turn left. turn right.");
  const Instruction b = split_and_tokenize("first turn left and then turn right");
  const Instruction c = split_and_tokenize("turn right.");
  const Instruction d = split_and_tokenize("turn left.");
  CHECK(match_rate(a, b));
  CHECK_FALSE(match_rate(d, c));   // LEFT vs RIGHT
  CHECK_FALSE(match_rate(a, d));   // count differs
  for (const auto& x : {a, b, c, d}) CHECK(match_rate(x, x));
}

TEST_CASE("infill_count: distinct maskable token texts") {
  Instruction none = tagged("go to .");
  // "go" VB, "to" TO, "." PUNCT: no content tags
  CHECK(infill_count(none) == 0);

  Instruction dup;
  dup.style = Style::Human;
  dup.sentences.push_back(
      {{{"light", PosTag::NN}, {"light", PosTag::NN}, {"awning", PosTag::NN}, {".", PosTag::PUNCT}}});
  CHECK(infill_count(dup) == 2);
}

TEST_CASE("infill_count: hand counts on five fixtures") {
  struct Fixture {
    const char* text;
    int expected;
  };
  // counted by hand against the default lexicon and the footnoted tag list
  const Fixture fixtures[] = {
      {"turn left at the light .", 2},            // left/NN, light/NN
      {"walk along the narrow street .", 2},      // narrow/JJ, street/NN
      {"you should stop near the red awning .", 4},  // you, should, red, awning
      {"go straight .", 1},                       // straight/RB (protected but still counted)
      {"head north past the 2nd tree .", 3},      // north/RB, 2nd/CD, tree/NN
  };
  for (const auto& f : fixtures) CHECK(infill_count(tagged(f.text)) == f.expected);
}

TEST_CASE("bleu: identity, disjoint vocab, empty hypothesis") {
  const Instruction a = split_and_tokenize("go straight to the light and stop there now.");
  CHECK(bleu(a, a) == doctest::Approx(1.0));

  const Instruction b = split_and_tokenize("red awning near corner!");
  // different tokens everywhere (including the stop): zero overlap
  const Instruction c = split_and_tokenize("walk down this street .");
  std::vector<std::vector<std::string>> h{lower_tokens(b)}, r{lower_tokens(c)};
  CHECK(bleu(h, r) == 0.0);

  std::vector<std::vector<std::string>> empty_h{{}}, some_r{{"a", "b"}};
  CHECK(bleu(empty_h, some_r) == 0.0);
}

TEST_CASE("bleu: three-pair corpus against the hand computation") {
  const std::vector<std::vector<std::string>> hyp{
      {"the", "red", "light"},
      {"turn", "left", "now"},
      {"go", "straight", "ahead", "to", "the", "end"},
  };
  const std::vector<std::vector<std::string>> ref{
      {"the", "red", "light"},
      {"turn", "left", "here"},
      {"go", "straight", "ahead", "to", "the", "light"},
  };
  // clipped matches by order: 10/12, 7/9, 4/6, 2/3; lengths equal so BP = 1
  const double expected = std::pow((10.0 / 12.0) * (7.0 / 9.0) * (4.0 / 6.0) * (2.0 / 3.0), 0.25);
  CHECK(bleu(hyp, ref) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("rouge_l: identity, disjoint, and a hand-computed case") {
  const Instruction a = split_and_tokenize("turn left at the corner.");
  CHECK(rouge_l(a, a) == doctest::Approx(1.0));

  const std::vector<std::string> h{"a", "b", "c", "d"};
  const std::vector<std::string> r{"a", "c", "b", "d"};
  CHECK(rouge_l(h, r) == doctest::Approx(0.75));  // LCS 3, P = R = 3/4

  const std::vector<std::string> x{"q", "w"};
  const std::vector<std::string> y{"e", "r"};
  CHECK(rouge_l(x, y) == 0.0);
}

TEST_CASE("evaluate_nlg: corpus aggregation") {
  std::vector<Instruction> gen{tagged("turn left at the light ."),
                               tagged("turn right at the tree .")};
  std::vector<Instruction> ref{tagged("turn left at the awning ."),
                               tagged("turn left at the tree .")};
  const NlgReport report = evaluate_nlg(gen, ref);
  CHECK(report.pair_count == 2);
  CHECK(report.match_rate == doctest::Approx(0.5));
  CHECK(report.infill_total == infill_count(gen[0]) + infill_count(gen[1]));
  CHECK(report.rouge_l > 0.0);
  CHECK(report.bleu > 0.0);
}
