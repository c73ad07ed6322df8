#include "tlm/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

TLM_BEGIN_NAMESPACE

std::size_t ConcatExample::sourceLossPositions() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < boundary; ++i) n += lossWeights[i] > 0;
  return n;
}

std::size_t ConcatExample::targetLossPositions() const {
  std::size_t n = 0;
  for (std::size_t i = boundary; i < lossWeights.size(); ++i) n += lossWeights[i] > 0;
  return n;
}

const char* toString(ReconTask t) { return t == ReconTask::LM ? "LM" : "AE"; }

ReconTask parseReconTask(const std::string& s) {
  if (s == "LM" || s == "lm") return ReconTask::LM;
  if (s == "AE" || s == "ae") return ReconTask::AE;
  throw ConfigError("unknown reconstruction task '" + s + "' (expected LM|AE)");
}

void NoiseSpec::validate() const {
  if (selectProb < 0 || selectProb > 1) throw ConfigError("noise select probability must lie in [0,1]");
  if (maskFrac < 0 || randomFrac < 0 || keepFrac < 0) throw ConfigError("noise fractions must be non-negative");
  if (std::abs(maskFrac + randomFrac + keepFrac - 1.0) > 1e-9)
    throw ConfigError("noise mask/random/keep fractions must sum to 1");
}

ConcatExample concatPair(std::span<const TokenId> src, std::span<const TokenId> tgt, const TagSet& tags) {
  if (src.empty() || tgt.empty()) throw DataError("concatPair: source and target must be non-empty");
  ConcatExample ex;
  ex.tags = tags;
  ex.inputIds.push_back(tags.srcBegin);
  ex.inputIds.insert(ex.inputIds.end(), src.begin(), src.end());
  ex.inputIds.push_back(tags.srcEnd);
  ex.boundary = ex.inputIds.size();
  ex.inputIds.push_back(tags.tgtBegin);
  ex.inputIds.insert(ex.inputIds.end(), tgt.begin(), tgt.end());

  const std::size_t n = ex.inputIds.size();
  ex.targetIds.assign(n, special::kPad);
  ex.lossWeights.assign(n, real(0));
  ex.noiseApplied.assign(n, 0);
  for (std::size_t p = ex.boundary; p < n; ++p) {
    ex.targetIds[p] = p + 1 < n ? ex.inputIds[p + 1] : tags.tgtEnd;
    ex.lossWeights[p] = 1;
  }
  return ex;
}

ConcatExample makeReconstructionTargets(ConcatExample ex, ReconTask task) {
  const std::size_t j = ex.boundary;
  if (j < 2) throw DataError("makeReconstructionTargets: example has no source span");
  for (std::size_t p = 0; p < j; ++p) {
    if (task == ReconTask::LM) {
      const bool defined = p + 1 < j;
      ex.targetIds[p] = defined ? ex.inputIds[p + 1] : special::kPad;
      ex.lossWeights[p] = defined ? real(1) : real(0);
    } else {
      ex.targetIds[p] = ex.inputIds[p];
      ex.lossWeights[p] = 1;
    }
  }
  return ex;
}

ConcatExample applyBertNoise(ConcatExample ex, const NoiseSpec& spec, const Vocab& vocab, std::mt19937_64& rng) {
  spec.validate();
  if (spec.selectProb <= 0 || ex.boundary < 3) return ex;
  const std::size_t firstRandom = vocab.numReserved();
  const bool canRandomize = vocab.size() > firstRandom;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  // Content tokens only: <s> at 0 and </s> at boundary-1 stay intact.
  for (std::size_t p = 1; p + 1 < ex.boundary; ++p) {
    if (u(rng) >= spec.selectProb) continue;
    ex.noiseApplied[p] = 1;
    const double r = u(rng);
    if (r < spec.maskFrac) {
      ex.inputIds[p] = special::kMask;
    } else if (r < spec.maskFrac + spec.randomFrac) {
      if (canRandomize) {
        std::uniform_int_distribution<std::size_t> pick(firstRandom, vocab.size() - 1);
        ex.inputIds[p] = static_cast<TokenId>(pick(rng));
      }
    }
  }
  return ex;
}

ConcatExample makeMonolingualExample(std::span<const TokenId> tgt, const TagSet& tags) {
  if (tgt.empty()) throw DataError("makeMonolingualExample: empty sentence");
  ConcatExample ex;
  ex.tags = tags;
  ex.boundary = 0;
  ex.inputIds.push_back(tags.tgtBegin);
  ex.inputIds.insert(ex.inputIds.end(), tgt.begin(), tgt.end());
  const std::size_t n = ex.inputIds.size();
  ex.targetIds.resize(n);
  ex.lossWeights.assign(n, real(1));
  ex.noiseApplied.assign(n, 0);
  for (std::size_t p = 0; p < n; ++p) ex.targetIds[p] = p + 1 < n ? ex.inputIds[p + 1] : tags.tgtEnd;
  return ex;
}

// ---------------------------------------------------------------------------

std::vector<std::string> readLines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

void writeLines(const std::string& path, std::span<const std::string> lines) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  for (const std::string& l : lines) out << l << '\n';
}

std::vector<SentencePair> readParallel(const std::string& srcPath, const std::string& tgtPath, const Vocab& vocab,
                                       const TagSet& tags) {
  const std::vector<std::string> src = readLines(srcPath);
  const std::vector<std::string> tgt = readLines(tgtPath);
  if (src.size() != tgt.size())
    throw DataError("parallel corpus line counts differ: " + srcPath + " has " + std::to_string(src.size()) + ", " +
                    tgtPath + " has " + std::to_string(tgt.size()));
  std::vector<SentencePair> out;
  for (std::size_t i = 0; i < src.size(); ++i) {
    SentencePair p{vocab.encode(src[i]), vocab.encode(tgt[i]), tags};
    if (p.src.empty() || p.tgt.empty()) continue;
    out.push_back(std::move(p));
  }
  return out;
}

std::uint64_t mixSeed(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  auto splitmix = [](std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
  };
  std::uint64_t h = splitmix(seed);
  h = splitmix(h ^ a);
  h = splitmix(h ^ (b * 0x9E3779B97F4A7C15ULL));
  return splitmix(h ^ (c + 0x632BE59BD9B4E019ULL));
}

BatchStream::BatchStream(const Corpus& corpus, BatchOptions opts) : corpus_(corpus), opts_(opts) {
  if (corpus_.pairs.empty() && corpus_.mono.empty()) throw DataError("empty training corpus");
  if (opts_.monoRatio < 0 || opts_.monoRatio >= 1) throw ConfigError("mono ratio must lie in [0,1)");
  if (opts_.monoRatio > 0 && corpus_.mono.empty()) throw ConfigError("mono ratio > 0 but no monolingual corpus");
  if (opts_.batchTokens == 0) throw ConfigError("batch token budget must be positive");
}

std::size_t BatchStream::lengthOf(const ExampleRef& r) const {
  if (r.mono) return corpus_.mono[r.index].size() + 1;
  const SentencePair& p = corpus_.pairs[r.index];
  return p.src.size() + p.tgt.size() + 3;
}

void BatchStream::refill() {
  std::mt19937_64 rng(mixSeed(opts_.seed, 0xBA7C4, epoch_));
  std::vector<std::size_t> order(corpus_.pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> monoOrder(corpus_.mono.size());
  std::iota(monoOrder.begin(), monoOrder.end(), 0);
  std::shuffle(monoOrder.begin(), monoOrder.end(), rng);

  std::vector<ExampleRef> refs;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::size_t nextPair = 0, nextMono = 0;
  const bool monoOnly = corpus_.pairs.empty();
  const std::size_t monoOnlyCount = corpus_.mono.size();
  while (monoOnly ? refs.size() < monoOnlyCount : nextPair < order.size()) {
    if (monoOnly || (opts_.monoRatio > 0 && u(rng) < opts_.monoRatio)) {
      refs.push_back({true, monoOrder[nextMono % monoOrder.size()], epoch_});
      ++nextMono;
    } else {
      refs.push_back({false, order[nextPair++], epoch_});
    }
  }

  // Length-sorted windows, then token-bounded batches, then shuffle batches.
  std::size_t totalLen = 0;
  for (const ExampleRef& r : refs) totalLen += lengthOf(r);
  const std::size_t avgLen = std::max<std::size_t>(1, totalLen / std::max<std::size_t>(1, refs.size()));
  const std::size_t window = std::max<std::size_t>(1, opts_.bucketBatches * opts_.batchTokens / avgLen);
  pending_.clear();
  for (std::size_t start = 0; start < refs.size(); start += window) {
    const std::size_t end = std::min(refs.size(), start + window);
    std::stable_sort(refs.begin() + start, refs.begin() + end,
                     [&](const ExampleRef& a, const ExampleRef& b) { return lengthOf(a) < lengthOf(b); });
    std::vector<ExampleRef> batch;
    std::size_t tokens = 0;
    for (std::size_t i = start; i < end; ++i) {
      const std::size_t len = lengthOf(refs[i]);
      if (!batch.empty() && tokens + len > opts_.batchTokens) {
        pending_.push_back(std::move(batch));
        batch.clear();
        tokens = 0;
      }
      batch.push_back(refs[i]);
      tokens += len;
    }
    if (!batch.empty()) pending_.push_back(std::move(batch));
  }
  std::shuffle(pending_.begin(), pending_.end(), rng);
  cursor_ = 0;
}

std::vector<ExampleRef> BatchStream::next() {
  if (cursor_ >= pending_.size()) {
    if (started_) ++epoch_;
    started_ = true;
    refill();
  }
  return pending_[cursor_++];
}

ConcatExample buildExample(const Corpus& corpus, const ExampleRef& ref, const ExampleOptions& opts,
                           const Vocab& vocab, std::uint64_t seed) {
  if (ref.mono) return makeMonolingualExample(corpus.mono.at(ref.index), corpus.monoTags);
  const SentencePair& p = corpus.pairs.at(ref.index);
  ConcatExample ex = makeReconstructionTargets(concatPair(p.src, p.tgt, p.tags), opts.task);
  if (opts.noise) {
    std::mt19937_64 rng(mixSeed(seed, ref.epoch, ref.index, 0x4015E));
    ex = applyBertNoise(std::move(ex), opts.noiseSpec, vocab, rng);
  }
  return ex;
}

TLM_END_NAMESPACE
