#include "tlm/train.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <sstream>

#include "tlm/loss.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

TLM_BEGIN_NAMESPACE

LambdaSchedule TrainOptions::resolvedSchedule() const {
  LambdaSchedule s = schedule;
  if (s.decays() && s.tau == 0) s.tau = std::max<std::size_t>(1, steps / 10);
  s.validate();
  return s;
}

std::string metricsHeader() { return "step\tL_MT\tL_RE\tlambda\tdevPPL\tdevPPL_full"; }

std::string formatMetricsRow(const MetricsRow& r) {
  char buf[200];
  std::snprintf(buf, sizeof buf, "%zu\t%.6f\t%.6f\t%.6f\t%.4f\t%.4f", r.step, r.mt, r.re, r.lambda, r.devPpl,
                r.devPplFull);
  return buf;
}

namespace {

// Every step allocates and frees the same multi-megabyte tensors. With the
// default dynamic mmap threshold glibc keeps returning them to the kernel,
// which costs more than the arithmetic on small models.
void keepLargeBlocks() {
#if defined(__GLIBC__)
  static const bool once = [] {
    mallopt(M_MMAP_THRESHOLD, 64 << 20);
    mallopt(M_TRIM_THRESHOLD, 256 << 20);
    return true;
  }();
  (void)once;
#endif
}

std::string describeBatch(std::span<const ExampleRef> refs) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < refs.size() && i < 8; ++i)
    os << (i ? " " : "") << (refs[i].mono ? "mono:" : "pair:") << refs[i].index;
  if (refs.size() > 8) os << " ... +" << refs.size() - 8;
  os << "]";
  return os.str();
}

}  // namespace

TrainResult trainLoop(Model& model, const Corpus& train, std::span<const SentencePair> dev, const Vocab& vocab,
                      const TrainOptions& opts, std::ostream* metricsOut, const EvalCallback& onEval) {
  const ModelConfig& cfg = model.config();
  keepLargeBlocks();
  if (opts.steps == 0) throw ConfigError("steps must be positive");
  if (opts.warmup == 0) throw ConfigError("warmup must be positive");
  if (opts.labelSmoothing < 0 || opts.labelSmoothing >= 1) throw ConfigError("label smoothing must lie in [0,1)");
  if (cfg.arch == Architecture::EncDec && opts.batch.monoRatio > 0)
    throw ConfigError("the encoder-decoder baseline cannot train on monolingual examples (set mono_ratio = 0)");
  if (vocab.size() != cfg.vocabSize)
    throw ConfigError("vocabulary has " + std::to_string(vocab.size()) + " entries but the model expects " +
                      std::to_string(cfg.vocabSize));
  const LambdaSchedule schedule = opts.resolvedSchedule();
  const std::size_t evalEvery = opts.evalInterval ? opts.evalInterval : opts.steps;

  BatchOptions bopts = opts.batch;
  bopts.seed = mixSeed(opts.seed, 0xBA7C);
  BatchStream stream(train, bopts);
  AdamState adam = AdamState::zerosLike(model.params());
  const std::vector<ConcatExample> devExamples = evaluationExamples(dev);

  TrainResult result;
  result.bestDevPpl = std::numeric_limits<double>::infinity();
  if (metricsOut) *metricsOut << metricsHeader() << '\n' << std::flush;

  double sumMt = 0, sumRe = 0;
  std::size_t sinceEval = 0;
  for (std::size_t step = 1; step <= opts.steps; ++step) {
    const std::vector<ExampleRef> refs = stream.next();
    std::vector<ConcatExample> examples;
    examples.reserve(refs.size());
    for (const ExampleRef& r : refs) examples.push_back(buildExample(train, r, opts.example, vocab, opts.seed));
    std::vector<const ConcatExample*> ptrs;
    for (const ConcatExample& e : examples) ptrs.push_back(&e);

    const double lambda = lambdaAt(schedule, step - 1);
    std::mt19937_64 dropoutRng(mixSeed(opts.seed, 0xD80, step));
    model.zeroGrad();
    TlmLoss loss;
    try {
      Tape tape;
      const BatchLogits logits = model.forward(tape, ptrs, true, &dropoutRng);
      loss = computeTlmLoss(tape, logits, ptrs, lambda, opts.labelSmoothing);
      if (!std::isfinite(loss.tlm)) throw NumericError("loss is " + std::to_string(loss.tlm));
      tape.backward(loss.total);
    } catch (const NumericError& e) {
      throw NumericError("non-finite value at step " + std::to_string(step) + ", batch " + describeBatch(refs) +
                         ": " + e.what());
    }
    const double lr = warmupInvSqrtLearningRate(cfg.dModel, step, opts.warmup, opts.lrScale);
    adamStep(model.params(), adam, step, lr, opts.adam);

    sumMt += loss.mt;
    sumRe += loss.re;
    ++sinceEval;
    if (step % evalEvery == 0 || step == opts.steps) {
      MetricsRow row;
      row.step = step;
      row.mt = sumMt / static_cast<double>(sinceEval);
      row.re = sumRe / static_cast<double>(sinceEval);
      row.lambda = lambda;
      row.devPpl = row.devPplFull = std::numeric_limits<double>::quiet_NaN();
      bool isBest = false;
      if (!devExamples.empty()) {
        row.devPpl = perplexity(model, devExamples, PplScope::TargetOnly).perplexity;
        row.devPplFull = perplexity(model, devExamples, PplScope::FullSequence).perplexity;
        if (row.devPpl < result.bestDevPpl) {
          result.bestDevPpl = row.devPpl;
          result.bestStep = step;
          result.best = model;
          isBest = true;
        }
      }
      result.log.push_back(row);
      if (metricsOut) *metricsOut << formatMetricsRow(row) << '\n' << std::flush;
      if (onEval) onEval(model, row, isBest);
      sumMt = sumRe = 0;
      sinceEval = 0;
    }
  }
  if (devExamples.empty()) {
    result.best = model;
    result.bestStep = opts.steps;
    result.bestDevPpl = std::numeric_limits<double>::quiet_NaN();
  }
  return result;
}

// ---------------------------------------------------------------------------

std::string detokenize(std::span<const TokenId> ids, const Vocab& vocab, const BpeModel* bpe) {
  const std::string text = vocab.decode(ids);
  return bpe ? BpeModel::decodeLine(text) : text;
}

CorpusTranslation translateCorpus(const Model& model, std::span<const SentencePair> pairs, const Vocab& vocab,
                                  const BeamOptions& beam, const BpeModel* bpe) {
  CorpusTranslation out;
  for (const SentencePair& p : pairs) {
    BeamResult r = translate(model, p.src, p.tags, beam);
    out.hypotheses.push_back(detokenize(r.tokens, vocab, bpe));
    out.results.push_back(std::move(r));
  }
  return out;
}

BleuReport evaluateBleu(const Model& model, std::span<const SentencePair> pairs, const Vocab& vocab,
                        const BeamOptions& beam, const BpeModel* bpe) {
  const CorpusTranslation t = translateCorpus(model, pairs, vocab, beam, bpe);
  std::vector<std::string> refs;
  for (const SentencePair& p : pairs) refs.push_back(detokenize(p.tgt, vocab, bpe));
  return corpusBleu(std::span<const std::string>(t.hypotheses), std::span<const std::string>(refs));
}

// ---------------------------------------------------------------------------

std::vector<Direction> parseDirections(const std::string& text) {
  std::string s = text;
  for (char& c : s)
    if (c == ',') c = ' ';
  std::vector<Direction> out;
  for (const std::string& item : splitWhitespace(s)) {
    const auto dash = item.find('-');
    if (dash == std::string::npos || dash == 0 || dash + 1 == item.size())
      throw ConfigError("direction '" + item + "' must look like src-tgt");
    Direction d{item.substr(0, dash), item.substr(dash + 1)};
    if (d.src == d.tgt) throw ConfigError("direction '" + item + "' translates a language into itself");
    for (const Direction& e : out)
      if (e == d) throw ConfigError("direction '" + item + "' listed twice");
    out.push_back(d);
  }
  return out;
}

std::vector<std::string> directionLanguages(std::span<const Direction> dirs) {
  std::vector<std::string> langs;
  auto add = [&](const std::string& l) {
    for (const std::string& x : langs)
      if (x == l) return;
    langs.push_back(l);
  };
  for (const Direction& d : dirs) {
    add(d.src);
    add(d.tgt);
  }
  return langs;
}

TLM_END_NAMESPACE
