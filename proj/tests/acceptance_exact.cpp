// Criteria 1-8: exact properties, checked on the double-precision build.

#include <cmath>
#include <limits>
#include <random>

#include "acceptance.hpp"
#include "tlm/beam.hpp"
#include "tlm/data.hpp"
#include "tlm/loss.hpp"
#include "tlm/mask.hpp"
#include "tlm/model.hpp"
#include "tlm/schedule.hpp"
#include "testing.hpp"

static_assert(sizeof(tlm::real) == 8, "exact criteria expect the double build");

namespace acceptance {

namespace {

using namespace tlm;
using testing::gradCheck;
using testing::maxAbsDiffRows;
using testing::randomTensor;

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1e", v);
  return buf;
}

// ---------------------------------------------------------------------------
// 1. Masks

Outcome maskCorrectness() {
  std::size_t masks = 0, violations = 0, mismatches = 0;
  for (SourceMask v : {SourceMask::Full, SourceMask::Triangular}) {
    for (std::size_t j = 1; j <= 16; ++j) {
      for (std::size_t i = 1; i <= 16; ++i) {
        const AttentionMask m = buildTlmMask(j, i, v);
        ++masks;
        violations += validateMask(m).size();
        for (std::size_t q = 0; q < i + j; ++q) {
          for (std::size_t k = 0; k < i + j; ++k) {
            bool expected;
            if (q < j && k < j) expected = v == SourceMask::Full || k <= q;  // C
            else if (q < j) expected = false;                                // A
            else if (k < j) expected = true;                                 // D
            else expected = k <= q;                                          // B
            mismatches += m.allowed(q, k) != expected;
          }
        }
      }
    }
  }
  return {violations == 0 && mismatches == 0, std::to_string(masks) + " masks, " + std::to_string(violations) +
                                                   " violations, " + std::to_string(mismatches) + " cell mismatches"};
}

// ---------------------------------------------------------------------------
// 2. No-cheating perturbations

ModelConfig probeConfig(SourceMask mask) {
  ModelConfig c;
  c.vocabSize = 23;
  c.dModel = 16;
  c.dFF = 32;
  c.numHeads = 2;
  c.numLayers = 2;
  c.dropout = 0;
  c.maxLen = 16;
  c.sourceMask = mask;
  return c;
}

Tensor logits(const Model& m, const ConcatExample& ex) {
  return forwardTlm(m, ex, buildTlmMask(ex.boundary, ex.targetLength(), m.config().sourceMask));
}

Outcome noCheating() {
  double causal = 0, isolation = 0, triangular = 0, fullDetect = 0;
  std::size_t probes = 0;
  std::mt19937_64 rng(7);
  auto token = [&] { return static_cast<TokenId>(7 + rng() % 16); };
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const Model full(probeConfig(SourceMask::Full), seed);
    const Model tri(probeConfig(SourceMask::Triangular), seed);
    // Framed source J = n + 2 <= 5, target side I = m + 1 <= 5.
    for (std::size_t n = 1; n <= 3; ++n) {
      for (std::size_t mlen = 1; mlen <= 4; ++mlen) {
        std::vector<TokenId> src(n), tgt(mlen);
        for (TokenId& t : src) t = token();
        for (TokenId& t : tgt) t = token();
        const ConcatExample base = concatPair(src, tgt);
        const std::size_t J = base.boundary, L = base.length();
        for (const Model* m : {&full, &tri}) {
          const Tensor b = logits(*m, base);
          for (std::size_t p = J; p < L; ++p) {
            ConcatExample pert = base;
            pert.inputIds[p] = pert.inputIds[p] == 22 ? 21 : 22;
            const Tensor a = logits(*m, pert);
            ++probes;
            causal = std::max(causal, maxAbsDiffRows(a, b, J, p));  // (a)
            isolation = std::max(isolation, maxAbsDiffRows(a, b, 0, J));  // (b)
          }
          for (std::size_t p = 1; p < J; ++p) {
            ConcatExample pert = base;
            pert.inputIds[p] = pert.inputIds[p] == 22 ? 21 : 22;
            const Tensor a = logits(*m, pert);
            ++probes;
            if (m == &tri) triangular = std::max(triangular, maxAbsDiffRows(a, b, 0, p));  // (c)
            else fullDetect = std::max(fullDetect, maxAbsDiffRows(a, b, 0, p));           // (d)
          }
        }
      }
    }
  }
  const bool pass = causal < 1e-6 && isolation < 1e-6 && triangular < 1e-6 && fullDetect > 1e-4;
  return {pass, std::to_string(probes) + " probes; max change (a) " + sci(causal) + ", (b) " + sci(isolation) +
                    ", (c) " + sci(triangular) + "; (d) detected " + sci(fullDetect)};
}

// ---------------------------------------------------------------------------
// 3. Gradient checks

Parameter param(const char* name, Shape shape, std::mt19937_64& rng) {
  return Parameter(name, randomTensor(std::move(shape), rng));
}

Var project(Tape& t, Var x, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  return ops::weightedSum(t, x, randomTensor(t.value(x).shape(), rng));
}

double fullModelGradError(Architecture arch) {
  ModelConfig c;
  c.arch = arch;
  c.vocabSize = 11;
  c.dModel = 8;
  c.dFF = 16;
  c.numHeads = 2;
  c.numLayers = 2;
  c.numEncLayers = c.numDecLayers = 1;
  c.dropout = 0;
  c.maxLen = 16;
  Model m(c, 21);
  const ConcatExample ex = makeReconstructionTargets(
      concatPair(std::vector<TokenId>{7, 8, 9}, std::vector<TokenId>{10, 7, 8}), ReconTask::AE);
  const std::vector<const ConcatExample*> batch{&ex};
  std::vector<Parameter>& ps = m.params();
  return gradCheck(ps, [&](Tape& t, const std::vector<Var>&) {
    // The model records its own parameter leaves; the leaves built by
    // gradCheck are unused.
    return computeTlmLoss(t, m.forward(t, batch, false, nullptr), batch, 0.7, 0.1).total;
  });
}

Outcome gradientChecks() {
  std::mt19937_64 rng(2);
  double worst = 0;
  auto check = [&](std::vector<Parameter> ps, const testing::LossFn& f, double h = 1e-5) {
    worst = std::max(worst, gradCheck(ps, f, h));
  };
  check({param("a", {3, 4}, rng), param("b", {4, 5}, rng)},
        [](Tape& t, const auto& v) { return project(t, ops::matmul(t, v[0], v[1])); }, 1e-3);
  check({param("a", {3, 4}, rng), param("b", {5, 4}, rng)},
        [](Tape& t, const auto& v) { return project(t, ops::matmulNT(t, v[0], v[1])); });
  check({param("a", {3, 4}, rng), param("b", {3, 4}, rng), param("c", {4}, rng)},
        [](Tape& t, const auto& v) { return project(t, ops::addBias(t, ops::add(t, v[0], v[1]), v[2])); });
  check({param("a", {4, 6}, rng)}, [](Tape& t, const auto& v) { return project(t, ops::relu(t, ops::scale(t, v[0], 1.7))); });
  check({param("x", {3, 8}, rng), param("g", {8}, rng), param("b", {8}, rng)},
        [](Tape& t, const auto& v) { return project(t, ops::layerNorm(t, v[0], v[1], v[2])); });
  const std::vector<TokenId> ids{0, 3, 3, 5, 1};
  check({param("table", {6, 4}, rng)}, [&](Tape& t, const auto& v) { return project(t, ops::embedding(t, v[0], ids)); });
  check({param("x", {4, 5}, rng)}, [](Tape& t, const auto& v) {
    std::mt19937_64 r(5);
    return project(t, ops::dropout(t, v[0], 0.3, r));
  });
  const AttentionMask tri = buildTlmMask(2, 3, SourceMask::Triangular);
  check({param("z", {5, 5}, rng)}, [&](Tape& t, const auto& v) { return project(t, ops::maskedSoftmax(t, v[0], tri.view())); });
  const AttentionMask m1 = buildTlmMask(2, 2, SourceMask::Full);
  const AttentionMask m2 = buildCausalMask(3);
  const std::vector<AttentionSegment> segs{{0, 4, 0, 4, m1.view()}, {4, 3, 4, 3, m2.view()}};
  check({param("q", {7, 8}, rng), param("k", {7, 8}, rng), param("v", {7, 8}, rng)},
        [&](Tape& t, const auto& v) { return project(t, ops::multiHeadAttention(t, v[0], v[1], v[2], segs, 2)); });
  const std::vector<TokenId> targets{1, 0, 4, 2};
  const std::vector<real> weights{1, 0, 2, 0.5};
  check({param("z", {4, 5}, rng)}, [&](Tape& t, const auto& v) { return ops::crossEntropy(t, v[0], targets, weights, 0.1); });
  check({param("a", {2, 3}, rng), param("b", {3, 2}, rng)}, [](Tape& t, const auto& v) {
    return ops::combineScalars(t, project(t, v[0]), 0.7, project(t, v[1], 3), 1.3);
  });
  const double enc = fullModelGradError(Architecture::EncOnly);
  const double ed = fullModelGradError(Architecture::EncDec);
  const bool pass = worst < 1e-4 && enc < 1e-3 && ed < 1e-3;
  return {pass, "primitives " + sci(worst) + " (< 1e-4); full model enc-only " + sci(enc) + ", enc-dec " + sci(ed) +
                    " (< 1e-3)"};
}

// ---------------------------------------------------------------------------
// 4. Schedules

Outcome scheduleExactness() {
  bool exact = true, constant = true, monotone = true;
  for (std::size_t tau : {1, 7, 200, 300, 1000}) {
    for (ScheduleKind k : {ScheduleKind::TwoStepLinear, ScheduleKind::Exponential}) {
      const LambdaSchedule s{k, tau};
      exact = exact && lambdaAt(s, 0) == 1.0 && lambdaAt(s, tau) == 0.1;
    }
  }
  for (std::size_t t = 0; t < 1000; ++t) {
    constant = constant && lambdaAt({ScheduleKind::Const0}, t * 37) == 0.0 && lambdaAt({ScheduleKind::Const1}, t * 37) == 1.0;
  }
  for (ScheduleKind k : {ScheduleKind::Const0, ScheduleKind::Const1, ScheduleKind::TwoStepLinear, ScheduleKind::Exponential}) {
    const LambdaSchedule s{k, 200};
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < 1000; ++i) {
      const double v = lambdaAt(s, i * 4);  // [0, 20 tau)
      monotone = monotone && v <= prev;
      prev = v;
    }
  }
  return {exact && constant && monotone, std::string("endpoints ") + (exact ? "exact" : "off") + ", constants " +
                                             (constant ? "hold" : "vary") + ", monotone " + (monotone ? "yes" : "no")};
}

// ---------------------------------------------------------------------------
// 5. Loss identity

ModelConfig lossConfig() {
  ModelConfig c;
  c.vocabSize = 17;
  c.dModel = 8;
  c.dFF = 16;
  c.numHeads = 2;
  c.dropout = 0;
  c.maxLen = 32;
  return c;
}

std::vector<ConcatExample> randomBatch(std::mt19937_64& rng, bool withMono) {
  std::vector<ConcatExample> out;
  auto seq = [&] {
    std::vector<TokenId> s(1 + rng() % 5);
    for (TokenId& t : s) t = static_cast<TokenId>(7 + rng() % 10);
    return s;
  };
  const std::size_t n = 1 + rng() % 4;
  for (std::size_t i = 0; i < n; ++i) {
    if (withMono && rng() % 3 == 0) out.push_back(makeMonolingualExample(seq()));
    else out.push_back(makeReconstructionTargets(concatPair(seq(), seq()), rng() % 2 ? ReconTask::AE : ReconTask::LM));
  }
  return out;
}

std::vector<const ConcatExample*> pointers(const std::vector<ConcatExample>& v) {
  std::vector<const ConcatExample*> p;
  for (const ConcatExample& e : v) p.push_back(&e);
  return p;
}

Outcome lossIdentity() {
  Model m(lossConfig(), 2);
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> lam(0.0, 2.0);
  double identity = 0;
  for (int i = 0; i < 100; ++i) {
    const std::vector<ConcatExample> batch = randomBatch(rng, true);
    const auto ptrs = pointers(batch);
    const double lambda = i == 0 ? 0.0 : i == 1 ? 2.0 : lam(rng);
    Tape t;
    const TlmLoss l = computeTlmLoss(t, m.forward(t, ptrs, false, nullptr), ptrs, lambda, 0.1);
    identity = std::max(identity, std::abs(double(t.value(l.total)[0]) - (lambda * l.re + l.mt)));
  }
  double gradient = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const std::vector<ConcatExample> batch = randomBatch(rng, false);
    const auto ptrs = pointers(batch);
    m.zeroGrad();
    {
      Tape t;
      t.backward(computeTlmLoss(t, m.forward(t, ptrs, false, nullptr), ptrs, 0.0, 0.1).total);
    }
    std::vector<Tensor> g0;
    for (const Parameter& p : m.params()) g0.push_back(p.grad);
    m.zeroGrad();
    {
      Tape t;
      t.backward(computeTlmLoss(t, m.forward(t, ptrs, false, nullptr), ptrs, 0.9, 0.1).mtVar);
    }
    for (std::size_t i = 0; i < g0.size(); ++i) gradient = std::max(gradient, testing::maxAbsDiff(g0[i], m.params()[i].grad));
  }
  return {identity < 1e-6 && gradient <= 1e-6,
          "max |L_TLM - (lambda L_RE + L_MT)| " + sci(identity) + ", lambda=0 gradient gap " + sci(gradient)};
}

// ---------------------------------------------------------------------------
// 6. Noise statistics

Outcome noiseStatistics() {
  std::vector<std::string> words;
  for (int i = 0; i < 1000; ++i) words.push_back("w" + std::to_string(i));
  const Vocab v = Vocab::build(words);
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<TokenId> tok(static_cast<TokenId>(v.numReserved()), static_cast<TokenId>(v.size() - 1));
  std::size_t total = 0, selected = 0, masked = 0, randomized = 0, kept = 0;
  bool weightsKept = true;
  while (total < 200000) {
    std::vector<TokenId> src(5 + rng() % 20);
    for (TokenId& t : src) t = tok(rng);
    const ConcatExample ex = makeReconstructionTargets(concatPair(src, std::vector<TokenId>{tok(rng)}), ReconTask::AE);
    const ConcatExample out = applyBertNoise(ex, NoiseSpec{}, v, rng);
    for (std::size_t p = 1; p + 1 < ex.boundary; ++p) {
      ++total;
      if (!out.noiseApplied[p]) continue;
      ++selected;
      if (out.inputIds[p] == special::kMask) ++masked;
      else if (out.inputIds[p] != ex.inputIds[p]) ++randomized;
      else ++kept;
      // Unmasked selected positions (random or kept) still carry their loss.
      if (out.inputIds[p] != special::kMask) weightsKept = weightsKept && out.lossWeights[p] == 1;
    }
    weightsKept = weightsKept && out.lossWeights == ex.lossWeights;
  }
  const double sel = double(selected) / double(total);
  const double fm = double(masked) / double(selected), fr = double(randomized) / double(selected),
               fk = double(kept) / double(selected);
  const bool pass = std::abs(sel - 0.15) <= 0.01 && std::abs(fm - 0.8) <= 0.02 && std::abs(fr - 0.1) <= 0.02 &&
                    std::abs(fk - 0.1) <= 0.02 && weightsKept;
  return {pass, std::to_string(total) + " tokens: selected " + fixed(sel, 4) + ", <m>/random/keep " + fixed(fm, 3) +
                    "/" + fixed(fr, 3) + "/" + fixed(fk, 3) + ", weights " + (weightsKept ? "intact" : "changed")};
}

// ---------------------------------------------------------------------------
// 7. Parameter accounting

Outcome parameterAccounting() {
  bool equal = true;
  std::string totals;
  for (std::size_t d : {64, 256, 512}) {
    ModelConfig e;
    e.dModel = d;
    e.dFF = 2 * d;
    e.numHeads = 8;
    e.vocabSize = 10000;
    e.numLayers = 15;
    ModelConfig ed = e;
    ed.arch = Architecture::EncDec;
    ed.numEncLayers = ed.numDecLayers = 6;
    equal = equal && countParams(e).total() == countParams(ed).total();
    if (d == 512) totals = std::to_string(countParams(e).total());
  }
  ModelConfig a;
  a.dModel = 512;
  a.dFF = 1024;
  a.numHeads = 8;
  a.vocabSize = 10000;
  a.numLayers = 10;
  ModelConfig b = a;
  b.numLayers = 15;
  const double inc = double(countParams(b).total()) - double(countParams(a).total());
  const double rel = std::abs(inc - 10.5e6) / 10.5e6;
  // The symbolic count must also match what a model actually allocates.
  ModelConfig small = a;
  small.dModel = 32;
  small.dFF = 64;
  small.vocabSize = 300;
  ModelConfig smallEd = small;
  smallEd.arch = Architecture::EncDec;
  const bool allocated = countParams(small).total() == Model(small, 1).numAllocatedParams() &&
                         countParams(smallEd).total() == Model(smallEd, 1).numAllocatedParams();
  return {equal && rel < 0.02 && allocated,
          std::string("15 vs 6+6 ") + (equal ? "equal" : "differ") + " (d=512: " + totals + "); +5 layers = " +
              fixed(inc / 1e6, 3) + "M vs 10.5M (" + fixed(100 * rel, 2) + "%)"};
}

// ---------------------------------------------------------------------------
// 8. Search soundness

class StubScorer : public StepScorer {
 public:
  StubScorer(std::size_t v, std::uint64_t seed) : v_(v), seed_(seed) {}
  std::size_t vocabSize() const override { return v_; }
  std::vector<std::vector<double>> nextLogProbs(std::span<const std::vector<TokenId>> prefixes) override {
    std::vector<std::vector<double>> out;
    for (const auto& p : prefixes) out.push_back(row(p));
    return out;
  }
  std::vector<double> row(const std::vector<TokenId>& prefix) const {
    std::uint64_t h = seed_;
    for (TokenId t : prefix) h = mixSeed(h, static_cast<std::uint64_t>(t));
    std::mt19937_64 rng(h);
    std::normal_distribution<double> n(0.0, 1.5);
    std::vector<double> z(v_);
    double mx = -1e300, se = 0;
    for (double& x : z) mx = std::max(mx, x = n(rng));
    for (double x : z) se += std::exp(x - mx);
    for (double& x : z) x -= mx + std::log(se);
    return z;
  }

 private:
  std::size_t v_;
  std::uint64_t seed_;
};

std::pair<std::vector<TokenId>, double> bruteForce(const StubScorer& s, TokenId end, std::size_t maxLen, double alpha) {
  std::vector<TokenId> best;
  double bestScore = -INFINITY;
  std::function<void(std::vector<TokenId>&, double)> rec = [&](std::vector<TokenId>& prefix, double lp) {
    const std::vector<double> row = s.row(prefix);
    const std::size_t generated = prefix.size() - 1;
    const double fin = lengthNormalized(lp + row[end], generated + 1, alpha);
    if (fin > bestScore) {
      bestScore = fin;
      best.assign(prefix.begin() + 1, prefix.end());
    }
    if (generated + 1 >= maxLen) return;
    for (std::size_t t = 0; t < row.size(); ++t) {
      if (static_cast<TokenId>(t) == end) continue;
      prefix.push_back(static_cast<TokenId>(t));
      rec(prefix, lp + row[t]);
      prefix.pop_back();
    }
  };
  std::vector<TokenId> start{special::kTgtBegin};
  rec(start, 0.0);
  return {best, bestScore};
}

Outcome searchSoundness() {
  std::size_t exhaustive = 0, exhaustiveBad = 0, greedyBad = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    for (std::size_t v : {2, 3}) {
      for (std::size_t maxLen : {1, 2, 3}) {
        for (double alpha : {0.0, 0.6, 1.0}) {
          StubScorer s(v, seed);
          const TokenId end = static_cast<TokenId>(v - 1);
          BeamOptions o;
          o.beamSize = 9;
          o.maxTargetLen = maxLen;
          o.alpha = alpha;
          o.targetEnd = end;
          const auto [tokens, score] = bruteForce(s, end, maxLen, alpha);
          const BeamResult r = beamSearch(s, o);
          ++exhaustive;
          exhaustiveBad += r.tokens != tokens || std::abs(r.score - score) > 1e-12;
        }
      }
    }
    StubScorer s(6, seed);
    BeamOptions o;
    o.beamSize = 1;
    o.maxTargetLen = 8;
    o.targetEnd = 5;
    const BeamResult a = beamSearch(s, o), b = greedyDecode(s, o);
    greedyBad += a.tokens != b.tokens || a.logProb != b.logProb;
  }

  ModelConfig c = lossConfig();
  c.dModel = 16;
  c.vocabSize = 15;
  const Model m(c, 17);
  std::mt19937_64 rng(4);
  double offsetSpread = 0;
  bool rankings = true;
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<TokenId> src(2 + rng() % 4);
    for (TokenId& t : src) t = static_cast<TokenId>(7 + rng() % 8);
    std::vector<std::vector<TokenId>> cands(20);
    for (auto& cand : cands) {
      cand.resize(1 + rng() % 5);
      for (TokenId& t : cand) t = static_cast<TokenId>(7 + rng() % 8);
    }
    const JointConditionalScores s = scoreJointVsConditional(m, src, cands, TagSet{});
    const double offset = s.joint[0] - s.conditional[0];
    for (std::size_t i = 0; i < cands.size(); ++i)
      offsetSpread = std::max(offsetSpread, std::abs(s.joint[i] - s.conditional[i] - offset));
    rankings = rankings && s.jointRanking == s.conditionalRanking;
  }
  const bool pass = exhaustiveBad == 0 && greedyBad == 0 && rankings && offsetSpread <= 1e-5;
  return {pass, std::to_string(exhaustive - exhaustiveBad) + "/" + std::to_string(exhaustive) +
                    " exhaustive matches, beam-1 vs greedy mismatches " + std::to_string(greedyBad) +
                    ", joint offset spread " + sci(offsetSpread) + ", rankings " + (rankings ? "identical" : "differ")};
}

}  // namespace

std::vector<Criterion> exactCriteria() {
  return {
      {1, "mask correctness", 5, maskCorrectness},
      {2, "no-cheating perturbations", 60, noCheating},
      {3, "gradient checks", 120, gradientChecks},
      {4, "schedule exactness", 0, scheduleExactness},
      {5, "loss identity", 0, lossIdentity},
      {6, "noise statistics", 0, noiseStatistics},
      {7, "parameter accounting", 0, parameterAccounting},
      {8, "search soundness", 0, searchSoundness},
  };
}

}  // namespace acceptance
