#include "vlnwb/nlg.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace vlnwb {

std::vector<std::string> lower_tokens(const Instruction& instr) {
  std::vector<std::string> out;
  for (const auto& s : instr.sentences)
    for (const auto& t : s.tokens) out.push_back(t.lower());
  return out;
}

namespace {

using Counts = std::map<std::vector<std::string>, int>;

Counts ngram_counts(const std::vector<std::string>& tokens, int order) {
  Counts counts;
  if (static_cast<int>(tokens.size()) < order) return counts;
  for (size_t i = 0; i + order <= tokens.size(); ++i)
    ++counts[{tokens.begin() + i, tokens.begin() + i + order}];
  return counts;
}

}  // namespace

double bleu(std::span<const std::vector<std::string>> hyps,
            std::span<const std::vector<std::string>> refs, int max_order) {
  if (hyps.size() != refs.size()) throw std::runtime_error("bleu: corpus size mismatch");
  if (hyps.empty()) return 0.0;

  std::vector<long> matched(max_order, 0), total(max_order, 0);
  long hyp_len = 0, ref_len = 0;
  for (size_t i = 0; i < hyps.size(); ++i) {
    hyp_len += static_cast<long>(hyps[i].size());
    ref_len += static_cast<long>(refs[i].size());
    for (int n = 1; n <= max_order; ++n) {
      const auto h = ngram_counts(hyps[i], n);
      const auto r = ngram_counts(refs[i], n);
      for (const auto& [gram, count] : h) {
        total[n - 1] += count;
        const auto it = r.find(gram);
        if (it != r.end()) matched[n - 1] += std::min(count, it->second);
      }
    }
  }
  if (hyp_len == 0) return 0.0;

  double log_precision = 0.0;
  for (int n = 0; n < max_order; ++n) {
    if (matched[n] == 0 || total[n] == 0) return 0.0;  // unsmoothed
    log_precision += std::log(static_cast<double>(matched[n]) / static_cast<double>(total[n]));
  }
  const double bp =
      hyp_len >= ref_len ? 1.0 : std::exp(1.0 - static_cast<double>(ref_len) / hyp_len);
  return bp * std::exp(log_precision / max_order);
}

double bleu(const Instruction& gen, const Instruction& ref, int max_order) {
  const std::vector<std::vector<std::string>> h{lower_tokens(gen)};
  const std::vector<std::vector<std::string>> r{lower_tokens(ref)};
  return bleu(h, r, max_order);
}

double rouge_l(std::span<const std::string> hyp, std::span<const std::string> ref) {
  if (hyp.empty() || ref.empty()) return 0.0;
  const size_t n = hyp.size(), m = ref.size();
  std::vector<int> prev(m + 1, 0), cur(m + 1, 0);
  for (size_t i = 1; i <= n; ++i) {
    for (size_t j = 1; j <= m; ++j)
      cur[j] = hyp[i - 1] == ref[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  const double lcs = prev[m];
  if (lcs == 0.0) return 0.0;
  const double p = lcs / static_cast<double>(n);
  const double r = lcs / static_cast<double>(m);
  return 2.0 * p * r / (p + r);
}

double rouge_l(const Instruction& gen, const Instruction& ref) {
  const auto h = lower_tokens(gen);
  const auto r = lower_tokens(ref);
  return rouge_l(h, r);
}

NlgReport evaluate_nlg(std::span<const Instruction> gen, std::span<const Instruction> ref,
                       const MaskPolicy& policy) {
  if (gen.size() != ref.size()) throw std::runtime_error("nlg: corpus size mismatch");
  NlgReport report;
  report.pair_count = static_cast<int>(gen.size());
  if (gen.empty()) return report;

  std::vector<std::vector<std::string>> h, r;
  int matched = 0;
  for (size_t i = 0; i < gen.size(); ++i) {
    h.push_back(lower_tokens(gen[i]));
    r.push_back(lower_tokens(ref[i]));
    report.rouge_l += rouge_l(h.back(), r.back());
    if (match_rate(gen[i], ref[i])) ++matched;
    report.infill_total += infill_count(gen[i], policy);
  }
  report.bleu = bleu(h, r);
  report.rouge_l /= static_cast<double>(gen.size());
  report.match_rate = static_cast<double>(matched) / static_cast<double>(gen.size());
  report.infill_mean = static_cast<double>(report.infill_total) / static_cast<double>(gen.size());
  return report;
}

}  // namespace vlnwb
