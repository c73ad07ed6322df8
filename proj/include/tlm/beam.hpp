#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tlm/model.hpp"
#include "tlm/vocab.hpp"

TLM_BEGIN_NAMESPACE

/// Supplies next-token log-probabilities for a batch of target prefixes
/// (each starts with the target begin tag) under a fixed source.
class StepScorer {
 public:
  virtual ~StepScorer() = default;
  virtual std::size_t vocabSize() const = 0;
  virtual std::vector<std::vector<double>> nextLogProbs(std::span<const std::vector<TokenId>> prefixes) = 0;
};

/// Scores prefixes with a frozen model. The source span <s> f </s> is fed
/// in full and the beam only extends the target side.
class ModelScorer : public StepScorer {
 public:
  ModelScorer(const Model& model, std::vector<TokenId> sourceFramed);
  std::size_t vocabSize() const override { return model_.config().vocabSize; }
  std::vector<std::vector<double>> nextLogProbs(std::span<const std::vector<TokenId>> prefixes) override;

 private:
  const Model& model_;
  std::vector<TokenId> source_;
};

struct BeamHypothesis {
  std::vector<TokenId> tokens;  // starts with the target begin tag
  double logProb = 0;
  bool finished = false;
};

struct BeamOptions {
  std::size_t beamSize = 4;
  /// 0 means 2 * source length + 10.
  std::size_t maxTargetLen = 0;
  double alpha = 0.6;
  TokenId targetBegin = special::kTgtBegin;
  TokenId targetEnd = special::kTgtEnd;
};

struct BeamResult {
  /// Generated tokens without the begin tag or end tag.
  std::vector<TokenId> tokens;
  /// Sum of chosen-token log-probabilities (end tag included when finished).
  double logProb = 0;
  /// logProb / length^alpha, length counting generated tokens plus the end tag.
  double score = 0;
  bool truncated = false;
};

double lengthNormalized(double logProb, std::size_t length, double alpha);

/// Left-to-right beam search. Candidates are ranked by log-probability, ties
/// broken toward the smaller token id; the final pick maximizes the
/// length-normalized score, ties toward the shorter then lexicographically
/// smaller output. When nothing finishes within maxTargetLen the best
/// unfinished hypothesis is returned with truncated set.
BeamResult beamSearch(StepScorer& scorer, const BeamOptions& opts);

/// Argmax decoding with the same tie rules (smaller token id wins).
BeamResult greedyDecode(StepScorer& scorer, const BeamOptions& opts);

/// Framed source <s> f </s> for a translation model.
std::vector<TokenId> frameSource(std::span<const TokenId> src, const TagSet& tags);

/// Convenience: decode one source sentence with a model.
BeamResult translate(const Model& model, std::span<const TokenId> src, const TagSet& tags, BeamOptions opts);

/// Per-candidate log P(e|f) (target positions) and log P(f, e) = log P(f) +
/// log P(e|f), where log P(f) sums the source-side next-token predictions
/// <s> -> f1 .. fn -> </s>. Rankings list candidate indices best first
/// (ties by index).
struct JointConditionalScores {
  std::vector<double> conditional;
  std::vector<double> joint;
  std::vector<std::size_t> conditionalRanking;
  std::vector<std::size_t> jointRanking;
};

JointConditionalScores scoreJointVsConditional(const Model& model, std::span<const TokenId> src,
                                               std::span<const std::vector<TokenId>> candidates, const TagSet& tags);

/// log P(e|f) of a full candidate (without tags), including the end tag,
/// from a single full-sequence forward.
double scoreTarget(const Model& model, std::span<const TokenId> src, std::span<const TokenId> tgt,
                   const TagSet& tags);

TLM_END_NAMESPACE
