#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "tlm/vocab.hpp"

TLM_BEGIN_NAMESPACE

/// One concatenated training item.
///
///   position:  0    1 .. n   n+1   n+2   n+3 .. n+m+2
///   input:     <s>  f1 .. fn  </s>  <t>   e1  .. em
///   boundary = n + 2 (the <t> position starts the target side)
///
/// Target-side targets are always the next token (e1 .. em </t>). Source-side
/// targets are filled by makeReconstructionTargets; until then they carry
/// <pad> with weight 0. A monolingual example has boundary 0.
struct ConcatExample {
  std::vector<TokenId> inputIds;
  std::size_t boundary = 0;
  std::vector<TokenId> targetIds;
  std::vector<real> lossWeights;
  std::vector<std::uint8_t> noiseApplied;
  TagSet tags;

  std::size_t length() const { return inputIds.size(); }
  std::size_t sourceLength() const { return boundary; }
  std::size_t targetLength() const { return inputIds.size() - boundary; }
  bool monolingual() const { return boundary == 0; }
  /// Count of loss-bearing positions on each side.
  std::size_t sourceLossPositions() const;
  std::size_t targetLossPositions() const;
};

enum class ReconTask { LM, AE };

const char* toString(ReconTask t);
ReconTask parseReconTask(const std::string& s);

struct NoiseSpec {
  double selectProb = 0.15;
  double maskFrac = 0.8;
  double randomFrac = 0.1;
  double keepFrac = 0.1;

  void validate() const;
};

ConcatExample concatPair(std::span<const TokenId> src, std::span<const TokenId> tgt, const TagSet& tags = {});

/// Fills source-side targets. LM: position p predicts input p+1 for
/// p in [0, J-2] (the </s> position has no target). AE: every source position
/// predicts its own input token.
ConcatExample makeReconstructionTargets(ConcatExample ex, ReconTask task);

/// Corrupts source content tokens (never the framing tags) in place of
/// inputIds: each is selected with spec.selectProb, then replaced by <m>,
/// replaced by a uniform non-reserved token, or kept. Targets and weights are
/// left untouched, so unmasked positions keep their loss.
ConcatExample applyBertNoise(ConcatExample ex, const NoiseSpec& spec, const Vocab& vocab, std::mt19937_64& rng);

/// [<t>, e1..em] with targets [e1..em, </t>] all weighted as target loss.
ConcatExample makeMonolingualExample(std::span<const TokenId> tgt, const TagSet& tags = {});

// ---------------------------------------------------------------------------
// Corpora and batching

struct SentencePair {
  std::vector<TokenId> src;
  std::vector<TokenId> tgt;
  TagSet tags;
};

struct Corpus {
  std::vector<SentencePair> pairs;
  std::vector<std::vector<TokenId>> mono;
  TagSet monoTags;
};

std::vector<std::string> readLines(const std::string& path);
void writeLines(const std::string& path, std::span<const std::string> lines);

/// Reads two aligned one-sentence-per-line files. Blank pairs are dropped.
std::vector<SentencePair> readParallel(const std::string& srcPath, const std::string& tgtPath, const Vocab& vocab,
                                       const TagSet& tags);

struct ExampleRef {
  bool mono = false;
  std::size_t index = 0;
  std::size_t epoch = 0;
};

struct BatchOptions {
  std::size_t batchTokens = 2000;
  double monoRatio = 0.0;
  std::uint64_t seed = 1;
  /// Examples per length-sorting window, in batches.
  std::size_t bucketBatches = 16;
};

/// Endless deterministic stream of token-bounded batches. Each epoch visits
/// every parallel pair once in shuffled order; every stream slot is filled
/// with a monolingual example with probability monoRatio, otherwise with the
/// next parallel pair. Within windows of bucketBatches batches examples are
/// sorted by length, and the resulting batches are shuffled.
class BatchStream {
 public:
  BatchStream(const Corpus& corpus, BatchOptions opts);

  std::vector<ExampleRef> next();
  std::size_t epoch() const { return epoch_; }

 private:
  void refill();
  std::size_t lengthOf(const ExampleRef& r) const;

  const Corpus& corpus_;
  BatchOptions opts_;
  std::size_t epoch_ = 0;
  std::vector<std::vector<ExampleRef>> pending_;
  std::size_t cursor_ = 0;
  bool started_ = false;
};

/// Deterministic 64-bit mix of (seed, a, b, c) used for per-example RNG
/// seeds so example construction does not depend on iteration order.
std::uint64_t mixSeed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0);

struct ExampleOptions {
  ReconTask task = ReconTask::AE;
  bool noise = false;
  NoiseSpec noiseSpec;
};

/// Builds the training example for `ref`, including dynamic noise seeded from
/// (seed, epoch, index).
ConcatExample buildExample(const Corpus& corpus, const ExampleRef& ref, const ExampleOptions& opts,
                           const Vocab& vocab, std::uint64_t seed);

TLM_END_NAMESPACE
