#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tlm/data.hpp"
#include "tlm/model.hpp"

TLM_BEGIN_NAMESPACE

/// Corpus-level BLEU-4, single reference, no smoothing.
struct BleuReport {
  double bleu = 0;  // 0..100
  std::array<double, 4> precision{};
  std::array<std::size_t, 4> matches{};
  std::array<std::size_t, 4> totals{};
  double brevityPenalty = 0;
  std::size_t hypLength = 0;
  std::size_t refLength = 0;

  /// "BLEU 77.88 (1.0000/1.0000/1.0000/1.0000, BP=0.7788, hyp=4, ref=5)"
  std::string summary() const;
};

/// Sentences are whitespace-tokenized.
BleuReport corpusBleu(std::span<const std::string> hyps, std::span<const std::string> refs);
BleuReport corpusBleu(std::span<const std::vector<std::string>> hyps, std::span<const std::vector<std::string>> refs);

enum class PplScope { TargetOnly, FullSequence };

struct PerplexityReport {
  double perplexity = 0;
  double meanNll = 0;
  std::size_t positions = 0;
};

/// exp(mean NLL) over loss-bearing positions of `examples` in the given scope
/// (plain NLL, no label smoothing). The encoder-decoder model only scores
/// target positions, so both scopes agree for it. Batches of at most
/// batchTokens tokens.
PerplexityReport perplexity(const Model& model, std::span<const ConcatExample> examples, PplScope scope,
                            std::size_t batchTokens = 4000);

/// Evaluation examples for a parallel corpus: concatenated pairs with
/// shifted (LM) source targets and no noise, so FullSequence scores the
/// joint P(f, e).
std::vector<ConcatExample> evaluationExamples(std::span<const SentencePair> pairs);

TLM_END_NAMESPACE
