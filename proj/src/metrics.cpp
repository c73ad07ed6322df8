#include <cmath>
#include <cstdio>
#include <map>

#include "tlm/loss.hpp"
#include "tlm/metrics.hpp"
#include "tlm/vocab.hpp"

TLM_BEGIN_NAMESPACE

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts countNgrams(const std::vector<std::string>& toks, std::size_t n) {
  NgramCounts c;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) ++c[std::vector<std::string>(toks.begin() + i, toks.begin() + i + n)];
  return c;
}

}  // namespace

std::string BleuReport::summary() const {
  char buf[160];
  std::snprintf(buf, sizeof buf, "BLEU %.2f (%.4f/%.4f/%.4f/%.4f, BP=%.4f, hyp=%zu, ref=%zu)", bleu, precision[0],
                precision[1], precision[2], precision[3], brevityPenalty, hypLength, refLength);
  return buf;
}

BleuReport corpusBleu(std::span<const std::vector<std::string>> hyps, std::span<const std::vector<std::string>> refs) {
  if (hyps.size() != refs.size())
    throw DataError("BLEU: " + std::to_string(hyps.size()) + " hypotheses but " + std::to_string(refs.size()) +
                    " references");
  if (hyps.empty()) throw DataError("BLEU: empty corpus");
  BleuReport r;
  for (std::size_t s = 0; s < hyps.size(); ++s) {
    r.hypLength += hyps[s].size();
    r.refLength += refs[s].size();
    for (std::size_t n = 1; n <= 4; ++n) {
      const NgramCounts h = countNgrams(hyps[s], n);
      const NgramCounts ref = countNgrams(refs[s], n);
      for (const auto& [gram, count] : h) {
        auto it = ref.find(gram);
        if (it != ref.end()) r.matches[n - 1] += std::min(count, it->second);
      }
      if (hyps[s].size() >= n) r.totals[n - 1] += hyps[s].size() - n + 1;
    }
  }
  double logSum = 0;
  bool anyZero = false;
  for (std::size_t n = 0; n < 4; ++n) {
    r.precision[n] = r.totals[n] ? static_cast<double>(r.matches[n]) / static_cast<double>(r.totals[n]) : 0.0;
    if (r.precision[n] == 0) anyZero = true;
    else logSum += std::log(r.precision[n]);
  }
  if (r.hypLength == 0) {
    r.brevityPenalty = 0;
  } else {
    r.brevityPenalty =
        std::min(1.0, std::exp(1.0 - static_cast<double>(r.refLength) / static_cast<double>(r.hypLength)));
  }
  r.bleu = anyZero ? 0.0 : 100.0 * r.brevityPenalty * std::exp(logSum / 4.0);
  return r;
}

BleuReport corpusBleu(std::span<const std::string> hyps, std::span<const std::string> refs) {
  std::vector<std::vector<std::string>> h, r;
  for (const std::string& s : hyps) h.push_back(splitWhitespace(s));
  for (const std::string& s : refs) r.push_back(splitWhitespace(s));
  return corpusBleu(std::span<const std::vector<std::string>>(h), std::span<const std::vector<std::string>>(r));
}

std::vector<ConcatExample> evaluationExamples(std::span<const SentencePair> pairs) {
  std::vector<ConcatExample> out;
  out.reserve(pairs.size());
  for (const SentencePair& p : pairs)
    out.push_back(makeReconstructionTargets(concatPair(p.src, p.tgt, p.tags), ReconTask::LM));
  return out;
}

PerplexityReport perplexity(const Model& model, std::span<const ConcatExample> examples, PplScope scope,
                            std::size_t batchTokens) {
  if (examples.empty()) throw DataError("perplexity: empty corpus");
  double nll = 0;
  std::size_t count = 0;
  std::size_t i = 0;
  while (i < examples.size()) {
    std::vector<const ConcatExample*> batch;
    std::size_t tokens = 0;
    while (i < examples.size() && (batch.empty() || tokens + examples[i].length() <= batchTokens)) {
      tokens += examples[i].length();
      batch.push_back(&examples[i++]);
    }
    Tape tape(false);
    const BatchLogits bl = model.infer(tape, batch);
    const Tensor& z = tape.value(bl.logits);
    const std::size_t v = z.cols();
    for (std::size_t r = 0; r < bl.example.size(); ++r) {
      const ConcatExample& ex = *batch[bl.example[r]];
      const std::size_t p = bl.position[r];
      if (ex.lossWeights[p] <= 0) continue;
      if (scope == PplScope::TargetOnly && p < ex.boundary) continue;
      const real* row = z.ptr() + r * v;
      double mx = row[0];
      for (std::size_t j = 1; j < v; ++j) mx = std::max(mx, static_cast<double>(row[j]));
      double se = 0;
      for (std::size_t j = 0; j < v; ++j) se += std::exp(row[j] - mx);
      nll += mx + std::log(se) - row[ex.targetIds[p]];
      ++count;
    }
  }
  if (count == 0) throw DataError("perplexity: no loss-bearing positions");
  PerplexityReport rep;
  rep.positions = count;
  rep.meanNll = nll / static_cast<double>(count);
  rep.perplexity = std::exp(rep.meanNll);
  return rep;
}

TLM_END_NAMESPACE
