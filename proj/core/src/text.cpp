#include "vlnwb/text.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

namespace vlnwb {

namespace {

const std::pair<PosTag, const char*> kTagNames[] = {
    {PosTag::JJ, "JJ"},     {PosTag::JJR, "JJR"},   {PosTag::JJS, "JJS"},
    {PosTag::NN, "NN"},     {PosTag::NNS, "NNS"},   {PosTag::NNP, "NNP"},
    {PosTag::NNPS, "NNPS"}, {PosTag::PDT, "PDT"},   {PosTag::POS, "POS"},
    {PosTag::RB, "RB"},     {PosTag::RBR, "RBR"},   {PosTag::RBS, "RBS"},
    {PosTag::PRPS, "PRP$"}, {PosTag::PRP, "PRP"},   {PosTag::MD, "MD"},
    {PosTag::CD, "CD"},     {PosTag::VB, "VB"},     {PosTag::VBD, "VBD"},
    {PosTag::VBG, "VBG"},   {PosTag::VBN, "VBN"},   {PosTag::VBP, "VBP"},
    {PosTag::VBZ, "VBZ"},   {PosTag::DT, "DT"},     {PosTag::IN, "IN"},
    {PosTag::CC, "CC"},     {PosTag::TO, "TO"},     {PosTag::RP, "RP"},
    {PosTag::EX, "EX"},     {PosTag::WDT, "WDT"},   {PosTag::WP, "WP"},
    {PosTag::WRB, "WRB"},   {PosTag::UH, "UH"},     {PosTag::PUNCT, "PUNCT"},
    {PosTag::UNTAGGED, "UNTAGGED"},
};

bool is_sentence_end(char c) { return c == '.' || c == '!' || c == '?'; }

bool is_split_punct(char c) {
  return is_sentence_end(c) || c == ',' || c == ';' || c == ':' || c == '(' || c == ')' ||
         c == '"' || c == '`';
}

}  // namespace

const char* to_string(PosTag tag) {
  for (const auto& [t, name] : kTagNames)
    if (t == tag) return name;
  return "UNTAGGED";
}

std::optional<PosTag> parse_pos_tag(const std::string& name) {
  for (const auto& [t, n] : kTagNames)
    if (name == n) return t;
  return std::nullopt;
}

std::string ascii_lower(const std::string& s) {
  std::string out = s;
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

const char* to_string(Style s) {
  switch (s) {
    case Style::Human: return "HUMAN";
    case Style::Machine: return "MACHINE";
    case Style::StyleTransferred: return "STYLE_TRANSFERRED";
  }
  return "?";
}

Style parse_style(const std::string& name) {
  if (name == "HUMAN") return Style::Human;
  if (name == "MACHINE") return Style::Machine;
  if (name == "STYLE_TRANSFERRED") return Style::StyleTransferred;
  throw std::runtime_error("unknown instruction style '" + name + "'");
}

std::vector<Token> Instruction::flat_tokens() const {
  std::vector<Token> out;
  for (const auto& s : sentences) out.insert(out.end(), s.tokens.begin(), s.tokens.end());
  return out;
}

std::string Instruction::normalized() const {
  std::string out;
  for (const auto& s : sentences)
    for (const auto& t : s.tokens) {
      if (!out.empty()) out += ' ';
      out += t.text;
    }
  return out;
}

Instruction split_and_tokenize(const std::string& raw, Style style) {
  Instruction instr;
  instr.raw = raw;
  instr.style = style;

  Sentence cur;
  std::string word;
  auto flush_word = [&] {
    if (!word.empty()) {
      cur.tokens.push_back({word, PosTag::UNTAGGED});
      word.clear();
    }
  };
  auto flush_sentence = [&](const char* stop) {
    flush_word();
    if (!cur.tokens.empty()) {
      cur.tokens.push_back({stop, PosTag::UNTAGGED});
      instr.sentences.push_back(std::move(cur));
      cur = {};
    }
  };

  for (char c : raw) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      flush_word();
    } else if (is_sentence_end(c)) {
      const char stop[2] = {c, '\0'};
      flush_sentence(stop);
    } else if (is_split_punct(c)) {
      flush_word();
      cur.tokens.push_back({std::string(1, c), PosTag::UNTAGGED});
    } else {
      word += c;  // apostrophes and hyphens stay inside the word
    }
  }
  flush_sentence(".");  // trailing text without a full stop gets one

  if (instr.sentences.empty())
    throw std::runtime_error("instruction: empty or whitespace-only input");
  return instr;
}

void pos_tag(Sentence& sentence, const TaggerPort& tagger) {
  for (auto& tok : sentence.tokens) tok.tag = tagger.tag(tok.text);
}

void pos_tag(Instruction& instr, const TaggerPort& tagger) {
  for (auto& s : instr.sentences) pos_tag(s, tagger);
}

MaskPolicy MaskPolicy::defaults(MaskMode mode) {
  MaskPolicy p;
  p.maskable_tags = {PosTag::JJ,  PosTag::JJR, PosTag::JJS,  PosTag::NN,  PosTag::NNS,
                     PosTag::NNP, PosTag::NNPS, PosTag::PDT, PosTag::POS, PosTag::RB,
                     PosTag::RBR, PosTag::RBS, PosTag::PRPS, PosTag::PRP, PosTag::MD,
                     PosTag::CD};
  p.protected_phrases = {
      {"turn", "left"}, {"turn", "right"}, {"take", "a", "left"}, {"take", "a", "right"},
      {"go", "straight"},
  };
  p.mode = mode;
  return p;
}

std::vector<TemplateToken> InstructionTemplate::flat_tokens() const {
  std::vector<TemplateToken> out;
  for (const auto& s : sentences) out.insert(out.end(), s.begin(), s.end());
  return out;
}

std::string InstructionTemplate::render() const {
  std::string out;
  for (const auto& s : sentences)
    for (const auto& t : s) {
      if (!out.empty()) out += ' ';
      out += t.is_mask ? "[MASK]" : t.token.text;
    }
  return out;
}

namespace {

// Marks every token index covered by a protected phrase occurrence.
// `lower` holds the lowercased surface of each flat position ([MASK] entries
// get a sentinel that never matches).
std::vector<char> protected_mask(const std::vector<std::string>& lower,
                                 const std::vector<std::vector<std::string>>& phrases,
                                 std::vector<std::pair<int, int>>* spans) {
  std::vector<char> keep(lower.size(), 0);
  for (size_t i = 0; i < lower.size(); ++i) {
    for (const auto& phrase : phrases) {
      if (phrase.empty() || i + phrase.size() > lower.size()) continue;
      bool hit = true;
      for (size_t k = 0; k < phrase.size(); ++k)
        if (lower[i + k] != phrase[k]) {
          hit = false;
          break;
        }
      if (hit) {
        for (size_t k = 0; k < phrase.size(); ++k) keep[i + k] = 1;
        if (spans) spans->push_back({static_cast<int>(i), static_cast<int>(i + phrase.size())});
      }
    }
  }
  return keep;
}

InstructionTemplate mask_token_stream(const std::vector<std::vector<TemplateToken>>& sentences,
                                      const MaskPolicy& policy, std::string route_id) {
  std::vector<std::string> lower;
  for (const auto& s : sentences)
    for (const auto& t : s) lower.push_back(t.is_mask ? "\x01MASK" : t.token.lower());

  std::vector<std::pair<int, int>> spans;
  const auto keep = protected_mask(lower, policy.protected_phrases, &spans);

  InstructionTemplate out;
  out.route_id = std::move(route_id);
  size_t flat = 0;
  for (const auto& s : sentences) {
    std::vector<TemplateToken> masked;
    for (const auto& t : s) {
      const bool maskable = t.is_mask || (policy.maskable_tags.count(t.token.tag) && !keep[flat]);
      if (maskable) {
        if (masked.empty() || !masked.back().is_mask) masked.push_back({true, {}});
      } else {
        masked.push_back(t);
      }
      ++flat;
    }
    out.sentences.push_back(std::move(masked));
  }

  // protected spans re-addressed to post-collapse flat indices
  std::vector<std::string> out_lower;
  for (const auto& s : out.sentences)
    for (const auto& t : s) out_lower.push_back(t.is_mask ? "\x01MASK" : t.token.lower());
  out.protected_spans.clear();
  protected_mask(out_lower, policy.protected_phrases, &out.protected_spans);
  std::sort(out.protected_spans.begin(), out.protected_spans.end());
  return out;
}

}  // namespace

InstructionTemplate mask_instruction(const Instruction& instr, const MaskPolicy& policy) {
  std::vector<std::vector<TemplateToken>> sentences;
  for (const auto& s : instr.sentences) {
    std::vector<TemplateToken> row;
    for (const auto& t : s.tokens) row.push_back({false, t});
    sentences.push_back(std::move(row));
  }
  return mask_token_stream(sentences, policy, {});
}

InstructionTemplate mask_template(const InstructionTemplate& tmpl, const MaskPolicy& policy) {
  return mask_token_stream(tmpl.sentences, policy, tmpl.route_id);
}

const std::vector<GuidingPhrase>& default_guiding_phrases() {
  static const std::vector<GuidingPhrase> phrases = {
      {{"turn", "left"}, GuidingSignal::Left},
      {{"turn", "right"}, GuidingSignal::Right},
      {{"take", "a", "left"}, GuidingSignal::Left},
      {{"take", "a", "right"}, GuidingSignal::Right},
  };
  return phrases;
}

std::vector<GuidingSignal> guiding_signals(const std::vector<Token>& tokens) {
  std::vector<std::string> lower;
  lower.reserve(tokens.size());
  for (const auto& t : tokens) lower.push_back(t.lower());

  const auto& table = default_guiding_phrases();
  std::vector<GuidingSignal> out;
  size_t i = 0;
  while (i < lower.size()) {
    const GuidingPhrase* best = nullptr;
    for (const auto& gp : table) {
      if (i + gp.pattern.size() > lower.size()) continue;
      if (best && gp.pattern.size() <= best->pattern.size()) continue;
      bool hit = true;
      for (size_t k = 0; k < gp.pattern.size(); ++k)
        if (lower[i + k] != gp.pattern[k]) {
          hit = false;
          break;
        }
      if (hit) best = &gp;
    }
    if (best) {
      out.push_back(best->signal);
      i += best->pattern.size();
    } else {
      ++i;
    }
  }
  return out;
}

std::vector<GuidingSignal> guiding_signals(const Instruction& instr) {
  return guiding_signals(instr.flat_tokens());
}

bool match_rate(const Instruction& gen, const Instruction& ref) {
  return guiding_signals(gen) == guiding_signals(ref);
}

int infill_count(const Instruction& gen, const MaskPolicy& policy) {
  std::set<std::string> distinct;
  for (const auto& s : gen.sentences)
    for (const auto& t : s.tokens)
      if (policy.maskable_tags.count(t.tag)) distinct.insert(t.lower());
  return static_cast<int>(distinct.size());
}

}  // namespace vlnwb
