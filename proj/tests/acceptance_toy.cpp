// Criteria 9-13: toy-scale training experiments on the float build.

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <sstream>

#include "acceptance.hpp"
#include "tlm/bpe.hpp"
#include "tlm/toy.hpp"
#include "tlm/train.hpp"

static_assert(sizeof(tlm::real) == 4, "toy criteria run on the float build");

namespace acceptance {

namespace {

using namespace tlm;
namespace fs = std::filesystem;

// Shared toy recipe: 2-layer encoder-only vs 1+1 encoder-decoder, d=64.
ModelConfig toyModel(Architecture arch, std::size_t vocabSize) {
  ModelConfig c;
  c.arch = arch;
  c.numLayers = 2;
  c.numEncLayers = c.numDecLayers = 1;
  c.dModel = 64;
  c.dFF = 128;
  c.numHeads = 4;
  c.dropout = 0.1;
  c.maxLen = 64;
  c.vocabSize = vocabSize;
  return c;
}

TrainOptions toyTraining(std::size_t steps, std::uint64_t seed) {
  TrainOptions o;
  o.steps = steps;
  o.warmup = 400;
  o.batch.batchTokens = 1000;
  o.evalInterval = 250;
  o.seed = seed;
  o.example.task = ReconTask::AE;
  o.example.noise = true;
  o.schedule.kind = ScheduleKind::Const1;
  return o;
}

struct Toy {
  Vocab vocab;
  Corpus train;
  std::vector<SentencePair> dev, test;
};

std::vector<SentencePair> encodePairs(const Vocab& v, const std::vector<std::string>& src,
                                      const std::vector<std::string>& tgt) {
  std::vector<SentencePair> out;
  for (std::size_t i = 0; i < src.size(); ++i) out.push_back({v.encode(src[i]), v.encode(tgt[i]), v.tags()});
  return out;
}

Toy reversalToy(std::uint64_t seed, std::size_t train = 2000) {
  ToyOptions o;
  o.task = ToyTask::Reversal;
  o.symbols = 20;
  o.seed = seed;
  const ToyData d = makeToyData(o, train, 200, 200);
  std::vector<std::string> lines = d.train.src;
  lines.insert(lines.end(), d.train.tgt.begin(), d.train.tgt.end());
  Toy t{Vocab::fromCorpus(lines), {}, {}, {}};
  t.train.pairs = encodePairs(t.vocab, d.train.src, d.train.tgt);
  t.dev = encodePairs(t.vocab, d.dev.src, d.dev.tgt);
  t.test = encodePairs(t.vocab, d.test.src, d.test.tgt);
  return t;
}

struct RunResult {
  double bleu = 0;
  double devPpl = 0;
  Model model;
};

RunResult trainAndTest(const ModelConfig& mc, const TrainOptions& opts, const Corpus& train,
                       std::span<const SentencePair> dev, std::span<const SentencePair> test, const Vocab& vocab) {
  Model model(mc, opts.seed);
  TrainResult tr = trainLoop(model, train, dev, vocab, opts);
  Model best = tr.best ? std::move(*tr.best) : model;
  const double bleu = test.empty() ? 0.0 : evaluateBleu(best, test, vocab, BeamOptions{}).bleu;
  return {bleu, tr.bestDevPpl, std::move(best)};
}

// ---------------------------------------------------------------------------
// 9. End-to-end parity on reversal

Outcome toyParity() {
  std::vector<double> enc, ed;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const Toy toy = reversalToy(seed);
    const TrainOptions opts = toyTraining(2000, seed);
    ModelConfig full = toyModel(Architecture::EncOnly, toy.vocab.size());
    full.sourceMask = SourceMask::Full;
    enc.push_back(trainAndTest(full, opts, toy.train, toy.dev, toy.test, toy.vocab).bleu);
    ed.push_back(trainAndTest(toyModel(Architecture::EncDec, toy.vocab.size()), opts, toy.train, toy.dev, toy.test,
                              toy.vocab)
                     .bleu);
  }
  bool floor = true;
  std::string detail = "BLEU enc-only/enc-dec:";
  for (std::size_t i = 0; i < enc.size(); ++i) {
    floor = floor && enc[i] >= 95 && ed[i] >= 95;
    detail += " " + fixed(enc[i], 2) + "/" + fixed(ed[i], 2);
  }
  const double gap = std::abs(std::accumulate(enc.begin(), enc.end(), 0.0) - std::accumulate(ed.begin(), ed.end(), 0.0)) /
                     static_cast<double>(enc.size());
  return {floor && gap <= 3, detail + "; mean |diff| " + fixed(gap, 2)};
}

// ---------------------------------------------------------------------------
// 10. Grid harness

Outcome gridHarness() {
  const Toy toy = reversalToy(1);
  GridOptions g;
  g.tlmModel = toyModel(Architecture::EncOnly, toy.vocab.size());
  g.baselineModel = toyModel(Architecture::EncDec, toy.vocab.size());
  g.train = toyTraining(1000, 1);
  g.train.evalInterval = 500;
  g.jobs = 4;
  const std::vector<GridRow> rows = gridSearch(g, toy.train, toy.dev, toy.test, toy.vocab);
  double full = 0, tri = 0;
  std::size_t nFull = 0, nTri = 0, failed = 0;
  for (const GridRow& r : rows) {
    failed += !r.error.empty();
    if (r.cell.baseline) continue;
    (r.cell.mask == SourceMask::Full ? full : tri) += r.bleu;
    ++(r.cell.mask == SourceMask::Full ? nFull : nTri);
  }
  full /= static_cast<double>(std::max<std::size_t>(nFull, 1));
  tri /= static_cast<double>(std::max<std::size_t>(nTri, 1));
  const bool pass = rows.size() == 33 && failed == 0 && full >= tri - 2;
  return {pass, std::to_string(rows.size()) + " rows, " + std::to_string(failed) + " failed; mean BLEU full " +
                    fixed(full, 2) + " vs triangular " + fixed(tri, 2) + " (" + (full >= tri ? "full ahead" : "triangular ahead") +
                    ")"};
}

// ---------------------------------------------------------------------------
// 11. Back-translation

Outcome backTranslation() {
  // 2000 generated pairs: the first half is the genuine corpus, the targets of
  // the second half serve as monolingual text.
  const Toy toy = reversalToy(1);
  const std::size_t half = toy.train.pairs.size() / 2;
  Corpus genuine;
  genuine.pairs.assign(toy.train.pairs.begin(), toy.train.pairs.begin() + half);
  std::vector<std::vector<TokenId>> mono;
  for (std::size_t i = half; i < toy.train.pairs.size(); ++i) mono.push_back(toy.train.pairs[i].tgt);

  const std::size_t steps = 1000;
  const ModelConfig mc = toyModel(Architecture::EncOnly, toy.vocab.size());
  Corpus reversed;
  for (const SentencePair& p : genuine.pairs) reversed.pairs.push_back({p.tgt, p.src, p.tags});
  std::vector<SentencePair> reversedDev;
  for (const SentencePair& p : toy.dev) reversedDev.push_back({p.tgt, p.src, p.tags});
  const RunResult reverse = trainAndTest(mc, toyTraining(steps, 11), reversed, reversedDev, {}, toy.vocab);
  const BackTranslation bt = backTranslate(reverse.model, mono, toy.vocab.tags(), toy.vocab.tags(), BeamOptions{});

  Corpus augmented = genuine;
  augmented.pairs.insert(augmented.pairs.end(), bt.pairs.begin(), bt.pairs.end());
  const RunResult base = trainAndTest(mc, toyTraining(steps, 1), genuine, toy.dev, toy.test, toy.vocab);
  const RunResult aug = trainAndTest(mc, toyTraining(steps, 1), augmented, toy.dev, toy.test, toy.vocab);
  const bool pass = aug.bleu >= base.bleu && aug.devPpl < base.devPpl;
  return {pass, std::to_string(bt.pairs.size()) + " synthetic pairs (" + std::to_string(bt.skipped) +
                    " skipped); BLEU " + fixed(base.bleu, 2) + " -> " + fixed(aug.bleu, 2) + ", devPPL " +
                    fixed(base.devPpl, 4) + " -> " + fixed(aug.devPpl, 4)};
}

// ---------------------------------------------------------------------------
// 12. Multilingual

Outcome multilingual() {
  const std::size_t perDirection = 300, evaluated = 100;
  const MultilingualToy ml = makeMultilingualToy(12, perDirection, 3, 6, 5);
  std::vector<std::string> lines;
  for (const auto& l : ml.sentences) lines.insert(lines.end(), l.begin(), l.end());
  const Vocab vocab = Vocab::fromCorpus(lines, ml.languages);
  Corpus train;
  for (std::size_t s = 0; s < ml.languages.size(); ++s) {
    for (std::size_t t = 0; t < ml.languages.size(); ++t) {
      if (s == t) continue;
      const TagSet tags = vocab.tags(ml.languages[s], ml.languages[t]);
      for (std::size_t i = 0; i < perDirection; ++i)
        train.pairs.push_back({vocab.encode(ml.sentences[s][i]), vocab.encode(ml.sentences[t][i]), tags});
    }
  }
  TrainOptions opts = toyTraining(3000, 1);
  opts.evalInterval = 0;
  Model model(toyModel(Architecture::EncOnly, vocab.size()), opts.seed);
  trainLoop(model, train, {}, vocab, opts);

  bool pass = true;
  std::string detail;
  std::size_t wrongLanguage = 0;
  for (std::size_t s = 0; s < ml.languages.size(); ++s) {
    for (std::size_t t = 0; t < ml.languages.size(); ++t) {
      if (s == t) continue;
      const std::string& lang = ml.languages[t];
      const TagSet tags = vocab.tags(ml.languages[s], lang);
      std::vector<SentencePair> pairs;
      for (std::size_t i = 0; i < evaluated; ++i)
        pairs.push_back({vocab.encode(ml.sentences[s][i]), vocab.encode(ml.sentences[t][i]), tags});
      const CorpusTranslation out = translateCorpus(model, pairs, vocab, BeamOptions{});
      std::vector<std::string> refs(ml.sentences[t].begin(), ml.sentences[t].begin() + evaluated);
      const double bleu = corpusBleu(std::span<const std::string>(out.hypotheses), std::span<const std::string>(refs)).bleu;
      for (const std::string& h : out.hypotheses)
        for (const std::string& tok : splitWhitespace(h)) wrongLanguage += tok.rfind(lang, 0) != 0;
      pass = pass && bleu >= 90;
      detail += (detail.empty() ? "" : " ") + ml.languages[s] + "-" + lang + " " + fixed(bleu, 1);
    }
  }
  return {pass && wrongLanguage == 0, "BLEU " + detail + "; " + std::to_string(wrongLanguage) + " wrong-language tokens"};
}

// ---------------------------------------------------------------------------
// 13. Determinism and round trips

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome determinism(const std::string& work) {
  const Toy toy = reversalToy(3, 300);
  TrainOptions opts = toyTraining(150, 4);
  opts.evalInterval = 50;
  const ModelConfig mc = toyModel(Architecture::EncOnly, toy.vocab.size());
  auto run = [&](Model& m) {
    std::ostringstream log;
    trainLoop(m, toy.train, toy.dev, toy.vocab, opts, &log);
    return log.str();
  };
  Model a(mc, opts.seed), b(mc, opts.seed);
  const bool logs = run(a) == run(b);

  const std::string path = (fs::path(work) / "determinism.ckpt").string();
  saveCheckpoint(a, path);
  const Model back = loadCheckpoint(path);
  bool bits = back.config() == a.config() && back.params().size() == a.params().size();
  for (std::size_t i = 0; bits && i < a.params().size(); ++i) {
    const Tensor& x = a.params()[i].value;
    const Tensor& y = back.params()[i].value;
    bits = x.shape() == y.shape() && std::memcmp(x.ptr(), y.ptr(), x.size() * sizeof(real)) == 0;
  }
  saveCheckpoint(back, path + ".again");
  bits = bits && slurp(path) == slurp(path + ".again");

  // Pseudo-words over a small syllable inventory, plus non-ASCII letters.
  std::mt19937_64 rng(8);
  const std::vector<std::string> syll{"ka", "to", "ri", "men", "sa", "lo", "é", "ün", "ß", "qu"};
  auto sentence = [&] {
    std::string s;
    for (std::size_t w = 0, n = 2 + rng() % 8; w < n; ++w) {
      if (w) s += ' ';
      for (std::size_t k = 0, m = 1 + rng() % 4; k < m; ++k) s += syll[rng() % syll.size()];
    }
    return s;
  };
  std::vector<std::string> corpus(400), unseen(100);
  for (std::string& s : corpus) s = sentence();
  for (std::string& s : unseen) s = sentence();
  const BpeModel bpe = trainBpe(corpus, 60);
  std::size_t broken = 0;
  for (const auto* set : {&corpus, &unseen})
    for (const std::string& s : *set) broken += BpeModel::decodeLine(bpe.encodeLine(s)) != s;

  return {logs && bits && broken == 0, std::string("metrics logs ") + (logs ? "identical" : "differ") +
                                           ", checkpoint " + (bits ? "bit-exact" : "differs") + ", BPE round trip " +
                                           std::to_string(broken) + "/500 broken (" +
                                           std::to_string(bpe.merges().size()) + " merges)"};
}

}  // namespace

std::vector<Criterion> toyCriteria(const std::string& workDir) {
  return {
      {9, "toy parity (reversal)", 1200, toyParity},
      {10, "grid harness", 3600, gridHarness},
      {11, "back-translation", 0, backTranslation},
      {12, "multilingual", 0, multilingual},
      {13, "determinism and round trips", 0, [workDir] { return determinism(workDir); }},
  };
}

}  // namespace acceptance
