#include "tlm/beam.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tlm/data.hpp"

TLM_BEGIN_NAMESPACE

ModelScorer::ModelScorer(const Model& model, std::vector<TokenId> sourceFramed)
    : model_(model), source_(std::move(sourceFramed)) {}

std::vector<std::vector<double>> ModelScorer::nextLogProbs(std::span<const std::vector<TokenId>> prefixes) {
  return model_.nextTokenLogProbs(source_, prefixes);
}

double lengthNormalized(double logProb, std::size_t length, double alpha) {
  if (alpha == 0 || length == 0) return logProb;
  return logProb / std::pow(static_cast<double>(length), alpha);
}

namespace {

struct Candidate {
  double logProb;
  TokenId token;
  std::size_t parent;
};

bool better(const Candidate& a, const Candidate& b) {
  if (a.logProb != b.logProb) return a.logProb > b.logProb;
  if (a.token != b.token) return a.token < b.token;
  return a.parent < b.parent;
}

void checkRow(const std::vector<double>& row, std::size_t v) {
  if (row.size() != v) throw ShapeError("scorer returned a row of the wrong vocabulary size");
  for (double x : row)
    if (std::isnan(x)) throw NumericError("scorer returned NaN log-probability");
}

BeamResult toResult(const BeamHypothesis& h, double alpha, TokenId end) {
  BeamResult r;
  r.tokens.assign(h.tokens.begin() + 1, h.tokens.end());
  if (h.finished && !r.tokens.empty() && r.tokens.back() == end) r.tokens.pop_back();
  r.logProb = h.logProb;
  r.score = lengthNormalized(h.logProb, h.tokens.size() - 1, alpha);
  r.truncated = !h.finished;
  return r;
}

// Best by normalized score; ties toward shorter, then lexicographically smaller.
const BeamHypothesis& pickBest(const std::vector<BeamHypothesis>& hyps, double alpha) {
  const BeamHypothesis* best = &hyps.front();
  for (const BeamHypothesis& h : hyps) {
    const double s = lengthNormalized(h.logProb, h.tokens.size() - 1, alpha);
    const double b = lengthNormalized(best->logProb, best->tokens.size() - 1, alpha);
    if (s > b || (s == b && (h.tokens.size() < best->tokens.size() ||
                             (h.tokens.size() == best->tokens.size() && h.tokens < best->tokens))))
      best = &h;
  }
  return *best;
}

std::size_t resolveMaxLen(const BeamOptions& opts) {
  if (opts.maxTargetLen == 0) throw UsageError("beam search needs maxTargetLen (or use translate())");
  return opts.maxTargetLen;
}

}  // namespace

BeamResult beamSearch(StepScorer& scorer, const BeamOptions& opts) {
  if (opts.beamSize == 0) throw UsageError("beam size must be at least 1");
  const std::size_t maxLen = resolveMaxLen(opts);
  const std::size_t v = scorer.vocabSize();

  std::vector<BeamHypothesis> alive{{{opts.targetBegin}, 0.0, false}};
  std::vector<BeamHypothesis> finished;
  for (std::size_t step = 1; step <= maxLen && !alive.empty(); ++step) {
    std::vector<std::vector<TokenId>> prefixes;
    for (const BeamHypothesis& h : alive) prefixes.push_back(h.tokens);
    const std::vector<std::vector<double>> lp = scorer.nextLogProbs(prefixes);
    if (lp.size() != alive.size()) throw ShapeError("scorer returned the wrong number of rows");

    std::vector<Candidate> cands;
    cands.reserve(alive.size() * v);
    for (std::size_t i = 0; i < alive.size(); ++i) {
      checkRow(lp[i], v);
      for (std::size_t t = 0; t < v; ++t)
        cands.push_back({alive[i].logProb + lp[i][t], static_cast<TokenId>(t), i});
    }
    const std::size_t keep = std::min(opts.beamSize, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(), better);

    std::vector<BeamHypothesis> next;
    for (std::size_t c = 0; c < keep; ++c) {
      BeamHypothesis h{alive[cands[c].parent].tokens, cands[c].logProb, false};
      h.tokens.push_back(cands[c].token);
      if (cands[c].token == opts.targetEnd) {
        h.finished = true;
        finished.push_back(std::move(h));
      } else {
        next.push_back(std::move(h));
      }
    }
    alive = std::move(next);

    // Stop once no live hypothesis can still beat the best finished one: its
    // log-probability only falls, and the most favourable denominator is
    // maxLen^alpha.
    if (!finished.empty() && !alive.empty()) {
      double bestFinished = -INFINITY;
      for (const BeamHypothesis& h : finished)
        bestFinished = std::max(bestFinished, lengthNormalized(h.logProb, h.tokens.size() - 1, opts.alpha));
      double bound = -INFINITY;
      for (const BeamHypothesis& h : alive)
        bound = std::max(bound, opts.alpha == 0 ? h.logProb : h.logProb / std::pow(double(maxLen), opts.alpha));
      if (bestFinished >= bound) break;
    }
  }
  if (!finished.empty()) return toResult(pickBest(finished, opts.alpha), opts.alpha, opts.targetEnd);
  return toResult(pickBest(alive, opts.alpha), opts.alpha, opts.targetEnd);
}

BeamResult greedyDecode(StepScorer& scorer, const BeamOptions& opts) {
  const std::size_t maxLen = resolveMaxLen(opts);
  const std::size_t v = scorer.vocabSize();
  BeamHypothesis h{{opts.targetBegin}, 0.0, false};
  for (std::size_t step = 1; step <= maxLen; ++step) {
    const std::vector<TokenId>* prefix = &h.tokens;
    const auto lp = scorer.nextLogProbs(std::span<const std::vector<TokenId>>(prefix, 1));
    checkRow(lp.at(0), v);
    std::size_t best = 0;
    for (std::size_t t = 1; t < v; ++t)
      if (lp[0][t] > lp[0][best]) best = t;
    h.logProb += lp[0][best];
    h.tokens.push_back(static_cast<TokenId>(best));
    if (static_cast<TokenId>(best) == opts.targetEnd) {
      h.finished = true;
      break;
    }
  }
  return toResult(h, opts.alpha, opts.targetEnd);
}

std::vector<TokenId> frameSource(std::span<const TokenId> src, const TagSet& tags) {
  std::vector<TokenId> out{tags.srcBegin};
  out.insert(out.end(), src.begin(), src.end());
  out.push_back(tags.srcEnd);
  return out;
}

BeamResult translate(const Model& model, std::span<const TokenId> src, const TagSet& tags, BeamOptions opts) {
  if (src.empty()) throw DataError("cannot translate an empty sentence");
  if (opts.maxTargetLen == 0) opts.maxTargetLen = 2 * src.size() + 10;
  // Keep the concatenation within the model's positional range.
  const std::size_t framed = src.size() + 2;
  const std::size_t room = model.config().maxLen > framed + 1 ? model.config().maxLen - framed - 1 : 1;
  if (model.config().arch == Architecture::EncOnly) opts.maxTargetLen = std::min(opts.maxTargetLen, room);
  opts.targetBegin = tags.tgtBegin;
  opts.targetEnd = tags.tgtEnd;
  ModelScorer scorer(model, frameSource(src, tags));
  return beamSearch(scorer, opts);
}

namespace {

std::vector<double> logSoftmaxRow(const real* z, std::size_t v) {
  double mx = z[0];
  for (std::size_t j = 1; j < v; ++j) mx = std::max(mx, static_cast<double>(z[j]));
  double se = 0;
  for (std::size_t j = 0; j < v; ++j) se += std::exp(z[j] - mx);
  const double lse = mx + std::log(se);
  std::vector<double> out(v);
  for (std::size_t j = 0; j < v; ++j) out[j] = z[j] - lse;
  return out;
}

std::vector<std::size_t> rankDescending(const std::vector<double>& s) {
  std::vector<std::size_t> idx(s.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });
  return idx;
}

}  // namespace

JointConditionalScores scoreJointVsConditional(const Model& model, std::span<const TokenId> src,
                                               std::span<const std::vector<TokenId>> candidates, const TagSet& tags) {
  if (model.config().arch != Architecture::EncOnly)
    throw UsageError("joint scoring needs the concatenated model (the baseline has no source predictions)");
  JointConditionalScores out;
  for (const std::vector<TokenId>& cand : candidates) {
    const ConcatExample ex = makeReconstructionTargets(concatPair(src, cand, tags), ReconTask::LM);
    Tape tape(false);
    const ConcatExample* batch[1] = {&ex};
    const BatchLogits bl = model.infer(tape, batch);
    const Tensor& z = tape.value(bl.logits);
    const std::size_t v = z.cols();
    double cond = 0, source = 0;
    for (std::size_t r = 0; r < bl.position.size(); ++r) {
      const std::size_t p = bl.position[r];
      const std::vector<double> lp = logSoftmaxRow(z.ptr() + r * v, v);
      if (p >= ex.boundary) {
        cond += lp[ex.targetIds[p]];
      } else if (p + 1 < ex.boundary) {
        source += lp[ex.inputIds[p + 1]];
      }
    }
    out.conditional.push_back(cond);
    out.joint.push_back(source + cond);
  }
  out.conditionalRanking = rankDescending(out.conditional);
  out.jointRanking = rankDescending(out.joint);
  return out;
}

double scoreTarget(const Model& model, std::span<const TokenId> src, std::span<const TokenId> tgt,
                   const TagSet& tags) {
  const ConcatExample ex = concatPair(src, tgt, tags);
  Tape tape(false);
  const ConcatExample* batch[1] = {&ex};
  const BatchLogits bl = model.infer(tape, batch);
  const Tensor& z = tape.value(bl.logits);
  const std::size_t v = z.cols();
  double total = 0;
  for (std::size_t r = 0; r < bl.position.size(); ++r) {
    const std::size_t p = bl.position[r];
    if (p < ex.boundary) continue;
    total += logSoftmaxRow(z.ptr() + r * v, v)[ex.targetIds[p]];
  }
  return total;
}

TLM_END_NAMESPACE
