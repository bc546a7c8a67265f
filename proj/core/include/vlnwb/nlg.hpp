#pragma once

#include <span>
#include <string>
#include <vector>

#include "vlnwb/text.hpp"

namespace vlnwb {

// Corpus BLEU-4 with brevity penalty over lowercased token sequences.
// A single pair is scored as a one-entry corpus. Empty hypotheses score 0.
double bleu(std::span<const std::vector<std::string>> hyps,
            std::span<const std::vector<std::string>> refs, int max_order = 4);
double bleu(const Instruction& gen, const Instruction& ref, int max_order = 4);

// ROUGE-L F1 via longest common subsequence.
double rouge_l(std::span<const std::string> hyp, std::span<const std::string> ref);
double rouge_l(const Instruction& gen, const Instruction& ref);

std::vector<std::string> lower_tokens(const Instruction& instr);

struct NlgReport {
  double bleu = 0.0;
  double rouge_l = 0.0;           // corpus mean of per-pair F1
  double match_rate = 0.0;        // fraction of pairs with matching guiding signals
  int infill_total = 0;           // distinct content tokens summed over generated corpus
  double infill_mean = 0.0;
  int pair_count = 0;
};

NlgReport evaluate_nlg(std::span<const Instruction> gen, std::span<const Instruction> ref,
                       const MaskPolicy& policy = MaskPolicy::defaults());

}  // namespace vlnwb
