#pragma once

#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace vlnwb {

enum class PosTag {
  // maskable content tags
  JJ, JJR, JJS, NN, NNS, NNP, NNPS, PDT, POS, RB, RBR, RBS, PRPS, PRP, MD, CD,
  // non-maskable structure tags
  VB, VBD, VBG, VBN, VBP, VBZ, DT, IN, CC, TO, RP, EX, WDT, WP, WRB, UH, PUNCT,
  UNTAGGED,
};

const char* to_string(PosTag tag);
std::optional<PosTag> parse_pos_tag(const std::string& name);

std::string ascii_lower(const std::string& s);

struct Token {
  std::string text;               // original surface form
  PosTag tag = PosTag::UNTAGGED;

  std::string lower() const { return ascii_lower(text); }
};

struct Sentence {
  std::vector<Token> tokens;  // last token is the terminating full stop
};

enum class Style { Human, Machine, StyleTransferred };

const char* to_string(Style s);
Style parse_style(const std::string& name);

struct Instruction {
  std::string raw;
  std::vector<Sentence> sentences;
  Style style = Style::Human;

  std::vector<Token> flat_tokens() const;
  // Token stream joined with single spaces; tokenizing it again is a fixed point.
  std::string normalized() const;
};

// Splits on . ! ? and tokenizes on whitespace with punctuation split off.
// Case is preserved; matching elsewhere lowercases. A missing terminal full stop
// is supplied so every sentence ends in one. Throws on empty/whitespace input.
Instruction split_and_tokenize(const std::string& raw, Style style = Style::Human);

// Pluggable per-token tagger. The default is a deterministic lexicon plus
// suffix rules; datasets that ship gold tags bypass tagging entirely.
class TaggerPort {
 public:
  virtual ~TaggerPort() = default;
  // `surface` keeps original case (capitalization feeds the NNP fallback).
  virtual PosTag tag(const std::string& surface) const = 0;
};

class LexiconTagger : public TaggerPort {
 public:
  LexiconTagger();
  PosTag tag(const std::string& surface) const override;

 private:
  std::vector<std::pair<std::string, PosTag>> lexicon_;  // sorted for lookup
};

const TaggerPort& default_tagger();

void pos_tag(Sentence& sentence, const TaggerPort& tagger);
void pos_tag(Instruction& instr, const TaggerPort& tagger);

enum class MaskMode { ObjectMask, StreetNameMask };

struct MaskPolicy {
  std::set<PosTag> maskable_tags;
  std::vector<std::vector<std::string>> protected_phrases;  // lowercased token patterns
  MaskMode mode = MaskMode::ObjectMask;

  static MaskPolicy defaults(MaskMode mode = MaskMode::ObjectMask);
};

struct TemplateToken {
  bool is_mask = false;
  Token token;  // unset when is_mask
};

struct InstructionTemplate {
  std::vector<std::vector<TemplateToken>> sentences;
  std::vector<std::pair<int, int>> protected_spans;  // [begin,end) over flat indices
  std::string route_id;

  std::vector<TemplateToken> flat_tokens() const;
  std::string render() const;  // masks printed as [MASK]
};

// Replaces tokens whose tag is maskable and which lie outside every protected
// phrase with a MASK, collapsing runs of masks into one. Idempotent.
InstructionTemplate mask_instruction(const Instruction& instr, const MaskPolicy& policy);
InstructionTemplate mask_template(const InstructionTemplate& tmpl, const MaskPolicy& policy);

enum class GuidingSignal { Left, Right };

struct GuidingPhrase {
  std::vector<std::string> pattern;  // lowercased tokens
  GuidingSignal signal;
};

const std::vector<GuidingPhrase>& default_guiding_phrases();

// Ordered left/right guidance phrases found in the token stream.
std::vector<GuidingSignal> guiding_signals(const std::vector<Token>& tokens);
std::vector<GuidingSignal> guiding_signals(const Instruction& instr);

// Matched iff both instructions carry the same signals in the same order.
bool match_rate(const Instruction& gen, const Instruction& ref);

// Number of distinct (lowercased) token texts with a maskable tag.
int infill_count(const Instruction& gen, const MaskPolicy& policy = MaskPolicy::defaults());

}  // namespace vlnwb
