#include <algorithm>
#include <cctype>

#include "vlnwb/text.hpp"

namespace vlnwb {

namespace {

struct Entry {
  const char* word;
  PosTag tag;
};

// Context-free lexicon for the built-in tagger. Words the navigation corpora
// lean on; anything else falls through to the suffix rules.
const Entry kLexicon[] = {
    // determiners / predeterminers
    {"the", PosTag::DT}, {"a", PosTag::DT}, {"an", PosTag::DT}, {"this", PosTag::DT},
    {"that", PosTag::DT}, {"these", PosTag::DT}, {"those", PosTag::DT}, {"all", PosTag::PDT},
    {"both", PosTag::PDT}, {"half", PosTag::PDT},
    // prepositions / subordinators
    {"at", PosTag::IN}, {"on", PosTag::IN}, {"in", PosTag::IN}, {"of", PosTag::IN},
    {"to", PosTag::TO}, {"toward", PosTag::IN}, {"towards", PosTag::IN}, {"onto", PosTag::IN},
    {"into", PosTag::IN}, {"from", PosTag::IN}, {"with", PosTag::IN}, {"until", PosTag::IN},
    {"past", PosTag::IN}, {"through", PosTag::IN}, {"along", PosTag::IN}, {"across", PosTag::IN},
    {"down", PosTag::IN}, {"up", PosTag::IN}, {"before", PosTag::IN}, {"after", PosTag::IN},
    {"behind", PosTag::IN}, {"near", PosTag::IN}, {"by", PosTag::IN}, {"as", PosTag::IN},
    {"over", PosTag::IN}, {"under", PosTag::IN},
    // conjunctions, wh-words, misc function words
    {"and", PosTag::CC}, {"or", PosTag::CC}, {"but", PosTag::CC}, {"so", PosTag::IN},
    {"when", PosTag::WRB}, {"where", PosTag::WRB}, {"which", PosTag::WDT}, {"what", PosTag::WP},
    {"there", PosTag::EX}, {"not", PosTag::RB}, {"n't", PosTag::RB},
    // pronouns (maskable per the content-tag list)
    {"you", PosTag::PRP}, {"yourself", PosTag::PRP}, {"it", PosTag::PRP}, {"they", PosTag::PRP},
    {"your", PosTag::PRPS}, {"its", PosTag::PRPS}, {"their", PosTag::PRPS},
    {"you'll", PosTag::PRP}, {"you're", PosTag::PRP},
    // modals
    {"will", PosTag::MD}, {"should", PosTag::MD}, {"can", PosTag::MD}, {"must", PosTag::MD},
    {"may", PosTag::MD}, {"would", PosTag::MD},
    // verbs of motion and copulas
    {"turn", PosTag::VB}, {"go", PosTag::VB}, {"walk", PosTag::VB}, {"head", PosTag::VB},
    {"take", PosTag::VB}, {"stop", PosTag::VB}, {"continue", PosTag::VB}, {"travel", PosTag::VB},
    {"move", PosTag::VB}, {"proceed", PosTag::VB}, {"follow", PosTag::VB}, {"orient", PosTag::VB},
    {"face", PosTag::VB}, {"cross", PosTag::VB}, {"make", PosTag::VB}, {"keep", PosTag::VB},
    {"reach", PosTag::VB}, {"pass", PosTag::VB}, {"see", PosTag::VB}, {"be", PosTag::VB},
    {"is", PosTag::VBZ}, {"are", PosTag::VBP}, {"was", PosTag::VBD}, {"facing", PosTag::VBG},
    {"stripped", PosTag::VBN}, {"striped", PosTag::VBN},
    // directions and spatial adverbs (content tags: maskable unless protected)
    {"left", PosTag::NN}, {"right", PosTag::NN}, {"straight", PosTag::RB},
    {"north", PosTag::RB}, {"south", PosTag::RB}, {"east", PosTag::RB}, {"west", PosTag::RB},
    {"northwest", PosTag::RB}, {"northeast", PosTag::RB}, {"southwest", PosTag::RB},
    {"southeast", PosTag::RB}, {"ahead", PosTag::RB}, {"forward", PosTag::RB},
    {"here", PosTag::RB}, {"then", PosTag::RB}, {"again", PosTag::RB}, {"just", PosTag::RB},
    {"same", PosTag::JJ},
    // street furniture and landmarks
    {"street", PosTag::NN}, {"avenue", PosTag::NN}, {"road", PosTag::NN}, {"block", PosTag::NN},
    {"intersection", PosTag::NN}, {"corner", PosTag::NN}, {"light", PosTag::NN},
    {"awning", PosTag::NN}, {"scaffolding", PosTag::NN}, {"car", PosTag::NN},
    {"truck", PosTag::NN}, {"bike", PosTag::NN}, {"lane", PosTag::NN}, {"traffic", PosTag::NN},
    {"flow", PosTag::NN}, {"building", PosTag::NN}, {"door", PosTag::NN}, {"tree", PosTag::NN},
    {"sign", PosTag::NN}, {"hydrant", PosTag::NN}, {"bench", PosTag::NN}, {"fence", PosTag::NN},
    {"store", PosTag::NN}, {"shop", PosTag::NN}, {"crosswalk", PosTag::NN},
    {"sidewalk", PosTag::NN}, {"curb", PosTag::NN}, {"plaza", PosTag::NN}, {"park", PosTag::NN},
    {"bridge", PosTag::NN}, {"gate", PosTag::NN}, {"fountain", PosTag::NN},
    {"statue", PosTag::NN}, {"mailbox", PosTag::NN}, {"planter", PosTag::NN},
    {"archway", PosTag::NN}, {"mural", PosTag::NN}, {"destination", PosTag::NN},
    {"end", PosTag::NN}, {"side", PosTag::NN},
    // adjectives
    {"red", PosTag::JJ}, {"blue", PosTag::JJ}, {"green", PosTag::JJ}, {"white", PosTag::JJ},
    {"black", PosTag::JJ}, {"tall", PosTag::JJ}, {"small", PosTag::JJ}, {"big", PosTag::JJ},
    {"large", PosTag::JJ}, {"narrow", PosTag::JJ}, {"wide", PosTag::JJ}, {"next", PosTag::JJ},
    {"first", PosTag::JJ}, {"second", PosTag::JJ}, {"third", PosTag::JJ}, {"last", PosTag::JJ},
    {"new", PosTag::JJ}, {"old", PosTag::JJ}, {"brick", PosTag::NN},
    // numerals
    {"one", PosTag::CD}, {"two", PosTag::CD}, {"three", PosTag::CD}, {"four", PosTag::CD},
    {"five", PosTag::CD}, {"six", PosTag::CD}, {"seven", PosTag::CD}, {"eight", PosTag::CD},
    {"nine", PosTag::CD}, {"ten", PosTag::CD},
};

bool all_digits(const std::string& s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(),
                     [](unsigned char c) { return std::isdigit(c) != 0; });
}

bool ordinal_numeral(const std::string& s) {
  // 1st / 2nd / 23rd / 4th
  if (s.size() < 3) return false;
  size_t i = 0;
  while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
  if (i == 0 || i + 2 != s.size()) return false;
  const std::string suf = s.substr(i);
  return suf == "st" || suf == "nd" || suf == "rd" || suf == "th";
}

bool ends_with(const std::string& s, const char* suffix) {
  const size_t n = std::char_traits<char>::length(suffix);
  return s.size() >= n && s.compare(s.size() - n, n, suffix) == 0;
}

}  // namespace

LexiconTagger::LexiconTagger() {
  for (const auto& e : kLexicon) lexicon_.push_back({e.word, e.tag});
  std::sort(lexicon_.begin(), lexicon_.end());
}

PosTag LexiconTagger::tag(const std::string& surface) const {
  if (surface.empty()) return PosTag::UNTAGGED;
  if (!std::isalnum(static_cast<unsigned char>(surface[0])) && surface.size() == 1)
    return PosTag::PUNCT;

  const std::string lower = ascii_lower(surface);
  const auto it = std::lower_bound(lexicon_.begin(), lexicon_.end(), lower,
                                   [](const auto& e, const std::string& w) { return e.first < w; });
  if (it != lexicon_.end() && it->first == lower) return it->second;

  if (all_digits(lower)) return PosTag::CD;
  if (ordinal_numeral(lower)) return PosTag::CD;
  if (ends_with(lower, "ly")) return PosTag::RB;
  if (ends_with(lower, "est") && lower.size() > 4) return PosTag::JJS;
  if (ends_with(lower, "ing") && lower.size() > 4) return PosTag::VBG;
  if (ends_with(lower, "ed") && lower.size() > 3) return PosTag::VBD;
  if (std::isupper(static_cast<unsigned char>(surface[0])))
    return ends_with(lower, "s") && lower.size() > 3 ? PosTag::NNPS : PosTag::NNP;
  if (ends_with(lower, "s") && !ends_with(lower, "ss") && lower.size() > 3) return PosTag::NNS;
  return PosTag::UNTAGGED;  // unknown words are never masked
}

const TaggerPort& default_tagger() {
  static const LexiconTagger tagger;
  return tagger;
}

}  // namespace vlnwb
