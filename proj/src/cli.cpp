#include "tlm/cli.hpp"

#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "tlm/bpe.hpp"
#include "tlm/mask.hpp"
#include "tlm/metrics.hpp"
#include "tlm/run_config.hpp"
#include "tlm/toy.hpp"
#include "tlm/train.hpp"

TLM_BEGIN_NAMESPACE

namespace {

namespace fs = std::filesystem;

std::string oneLine(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

RunConfig loadConfig(const std::string& path, const std::vector<std::string>& overrides) {
  RunConfig cfg = RunConfig::load(path);
  if (overrides.empty()) return cfg;
  // Overrides are appended as extra lines so they get the same validation.
  std::string text = cfg.serialize();
  std::ostringstream merged;
  std::set<std::string> overridden;
  for (const std::string& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + o + "'");
    std::string key = o.substr(0, eq);
    key.erase(key.find_last_not_of(' ') + 1);
    overridden.insert(key);
  }
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const std::string key = line.substr(0, line.find(' '));
    if (!overridden.count(key)) merged << line << '\n';
  }
  for (const std::string& o : overrides) merged << o << '\n';
  return RunConfig::parse(merged.str(), path + " (with --set)");
}

void writeText(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

// ---------------------------------------------------------------------------

int cmdTrain(const std::string& configPath, const std::vector<std::string>& overrides, std::ostream& out) {
  RunConfig cfg = loadConfig(configPath, overrides);
  const Experiment ex = loadExperiment(cfg);
  const fs::path dir = cfg.runDir;
  fs::create_directories(dir);
  ex.vocab.saveFile((dir / "vocab.txt").string());
  RunConfig echo = cfg;
  echo.vocab = (dir / "vocab.txt").string();
  writeText(dir / "config.txt", echo.serialize());

  ModelConfig mc = cfg.model;
  mc.vocabSize = ex.vocab.size();
  Model model(mc, cfg.train.seed);
  std::ofstream metrics(dir / "metrics.tsv");
  if (!metrics) throw DataError("cannot write " + (dir / "metrics.tsv").string());
  const std::string bestPath = (dir / "best.ckpt").string();
  TrainResult tr = trainLoop(model, ex.train, ex.dev, ex.vocab, cfg.train, &metrics,
                             [&](const Model& m, const MetricsRow&, bool isBest) {
                               if (isBest) saveCheckpoint(m, bestPath);
                             });
  saveCheckpoint(model, (dir / "last.ckpt").string());
  if (ex.dev.empty()) saveCheckpoint(model, bestPath);
  out << "trained " << cfg.train.steps << " steps, " << model.numAllocatedParams() << " parameters";
  if (!ex.dev.empty()) out << ", best devPPL " << tr.bestDevPpl << " at step " << tr.bestStep;
  out << '\n';
  if (!ex.test.empty()) {
    const Model& best = tr.best ? *tr.best : model;
    const BleuReport b = evaluateBleu(best, ex.test, ex.vocab, cfg.beam, ex.bpe ? &*ex.bpe : nullptr);
    out << "test " << b.summary() << '\n';
    writeText(dir / "test_bleu.txt", b.summary() + "\n");
  }
  return kExitOk;
}

struct TranslateArgs {
  std::string checkpoint, vocab, bpe, input, output, srcLang, tgtLang;
  std::size_t beam = 4;
  double alpha = 0.6;
  std::size_t maxLen = 0;
  bool scores = false;
};

struct LoadedModel {
  Model model;
  Vocab vocab;
  std::optional<BpeModel> bpe;
};

LoadedModel loadForDecoding(const std::string& checkpoint, const std::string& vocabPath, const std::string& bpePath) {
  LoadedModel lm{loadCheckpoint(checkpoint), Vocab::loadFile(vocabPath), std::nullopt};
  if (lm.vocab.size() != lm.model.config().vocabSize)
    throw DataError("vocabulary " + vocabPath + " has " + std::to_string(lm.vocab.size()) + " entries but checkpoint " +
                    checkpoint + " expects " + std::to_string(lm.model.config().vocabSize));
  if (!bpePath.empty()) lm.bpe = BpeModel::loadFile(bpePath);
  return lm;
}

std::vector<TokenId> encodeWith(const LoadedModel& lm, const std::string& line) {
  return lm.vocab.encode(lm.bpe ? lm.bpe->encodeLine(line) : line);
}

int cmdTranslate(const TranslateArgs& a, std::ostream& err) {
  const LoadedModel lm = loadForDecoding(a.checkpoint, a.vocab, a.bpe);
  const TagSet tags = lm.vocab.tags(a.srcLang, a.tgtLang);
  BeamOptions beam;
  beam.beamSize = a.beam;
  beam.alpha = a.alpha;
  beam.maxTargetLen = a.maxLen;
  const std::vector<std::string> lines = readLines(a.input);
  std::ofstream out(a.output);
  if (!out) throw DataError("cannot write " + a.output);
  std::size_t truncated = 0;
  for (const std::string& line : lines) {
    const std::vector<TokenId> src = encodeWith(lm, line);
    std::string hyp;
    double logProb = 0;
    if (!src.empty()) {
      const BeamResult r = translate(lm.model, src, tags, beam);
      hyp = detokenize(r.tokens, lm.vocab, lm.bpe ? &*lm.bpe : nullptr);
      logProb = r.logProb;
      truncated += r.truncated;
    }
    out << hyp;
    if (a.scores) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "\t%.6f", logProb);
      out << buf;
    }
    out << '\n';
  }
  if (truncated) err << "warning: " << truncated << " translations hit the length limit\n";
  return kExitOk;
}

int cmdScore(const std::string& hypPath, const std::string& refPath, std::ostream& out) {
  const std::vector<std::string> hyps = readLines(hypPath);
  const std::vector<std::string> refs = readLines(refPath);
  out << corpusBleu(std::span<const std::string>(hyps), std::span<const std::string>(refs)).summary() << '\n';
  return kExitOk;
}

int cmdGrid(const std::string& configPath, const std::vector<std::string>& overrides, std::size_t jobs,
            std::ostream& out, std::ostream& err) {
  RunConfig cfg = loadConfig(configPath, overrides);
  const Experiment ex = loadExperiment(cfg);
  if (ex.test.empty()) throw ConfigError("grid needs test_src and test_tgt");
  const fs::path dir = cfg.runDir;
  fs::create_directories(dir);
  writeText(dir / "config.txt", cfg.serialize());
  GridOptions g;
  g.tlmModel = cfg.model;
  g.tlmModel.arch = Architecture::EncOnly;
  g.baselineModel = cfg.model;
  g.baselineModel.arch = Architecture::EncDec;
  g.train = cfg.train;
  g.beam = cfg.beam;
  g.jobs = jobs ? jobs : cfg.jobs;
  g.runDir = dir.string();
  const std::vector<GridRow> rows = gridSearch(g, ex.train, ex.dev, ex.test, ex.vocab, &err);
  std::string table = gridHeader() + "\n";
  std::size_t failed = 0;
  for (const GridRow& r : rows) {
    table += formatGridRow(r) + "\n";
    failed += !r.error.empty();
  }
  writeText(dir / "grid.tsv", table);
  out << table;
  if (failed) err << "warning: " << failed << " grid cells failed\n";
  return kExitOk;
}

struct BacktranslateArgs {
  std::string checkpoint, vocab, bpe, mono, outSrc, outTgt, srcLang, tgtLang;
  std::size_t beam = 4;
  double alpha = 0.6;
};

int cmdBacktranslate(const BacktranslateArgs& a, std::ostream& err) {
  const LoadedModel lm = loadForDecoding(a.checkpoint, a.vocab, a.bpe);
  BeamOptions beam;
  beam.beamSize = a.beam;
  beam.alpha = a.alpha;
  const std::vector<std::string> lines = readLines(a.mono);
  std::vector<std::vector<TokenId>> mono;
  std::vector<std::size_t> lineOf;
  std::size_t empty = 0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::vector<TokenId> ids = encodeWith(lm, lines[i]);
    if (ids.empty()) {
      ++empty;
      continue;
    }
    mono.push_back(std::move(ids));
    lineOf.push_back(i);
  }
  // The reverse model reads the target language and writes the source one.
  const TagSet reverseTags = lm.vocab.tags(a.tgtLang, a.srcLang);
  const BackTranslation bt = backTranslate(lm.model, mono, reverseTags, lm.vocab.tags(a.srcLang, a.tgtLang), beam);
  std::vector<std::string> src, tgt;
  const BpeModel* bpe = lm.bpe ? &*lm.bpe : nullptr;
  for (const SentencePair& p : bt.pairs) {
    src.push_back(detokenize(p.src, lm.vocab, bpe));
    tgt.push_back(detokenize(p.tgt, lm.vocab, bpe));
  }
  writeLines(a.outSrc, src);
  writeLines(a.outTgt, tgt);
  err << "backtranslated " << bt.pairs.size() << " sentences, skipped " << bt.skipped + empty << '\n';
  return kExitOk;
}

int cmdMaskDump(std::size_t j, std::size_t i, const std::string& variant, bool encdec, bool noLabels,
                std::ostream& out) {
  if (!encdec) {
    out << buildTlmMask(j, i, parseSourceMask(variant)).render(!noLabels);
    return kExitOk;
  }
  const EncDecMasks m = buildEncDecMasks(j, i);
  out << "encoder self (" << j << "x" << j << ")\n" << m.encoderSelf.render(false);
  out << "decoder self (" << i << "x" << i << ")\n" << m.decoderSelf.render(false);
  out << "cross (" << i << "x" << j << ")\n" << m.cross.render(false);
  return kExitOk;
}

int cmdBpeTrain(const std::vector<std::string>& inputs, std::size_t merges, const std::string& output,
                std::ostream& out) {
  std::vector<std::string> corpus;
  for (const std::string& p : inputs) {
    std::vector<std::string> lines = readLines(p);
    corpus.insert(corpus.end(), lines.begin(), lines.end());
  }
  const BpeModel model = trainBpe(corpus, merges);
  model.saveFile(output);
  out << "learned " << model.merges().size() << " merges\n";
  return kExitOk;
}

int cmdBpeApply(const std::string& modelPath, const std::string& input, const std::string& output, bool decode) {
  std::vector<std::string> lines = readLines(input);
  if (decode) {
    for (std::string& l : lines) l = BpeModel::decodeLine(l);
  } else {
    const BpeModel model = BpeModel::loadFile(modelPath);
    for (std::string& l : lines) l = model.encodeLine(l);
  }
  writeLines(output, lines);
  return kExitOk;
}

struct ToyArgs {
  std::string task = "reversal";
  std::string out;
  std::size_t train = 2000, dev = 200, test = 200, symbols = 20, minLen = 4, maxLen = 8, mono = 0;
  std::uint64_t seed = 1;
  bool multilingual = false;
};

int cmdMakeToy(const ToyArgs& a, std::ostream& out) {
  const fs::path dir = a.out;
  fs::create_directories(dir);
  if (a.multilingual) {
    const std::size_t total = a.train + a.dev + a.test;
    const MultilingualToy ml = makeMultilingualToy(a.symbols, total, a.minLen, a.maxLen, a.seed);
    const std::size_t nl = ml.languages.size();
    for (std::size_t s = 0; s < nl; ++s) {
      for (std::size_t t = 0; t < nl; ++t) {
        if (s == t) continue;
        const std::string dirName = ml.languages[s] + "-" + ml.languages[t];
        auto slice = [&](std::size_t lang, std::size_t from, std::size_t n) {
          return std::vector<std::string>(ml.sentences[lang].begin() + from, ml.sentences[lang].begin() + from + n);
        };
        const std::pair<const char*, std::pair<std::size_t, std::size_t>> splits[] = {
            {"train", {0, a.train}}, {"dev", {a.train, a.dev}}, {"test", {a.train + a.dev, a.test}}};
        for (const auto& [name, range] : splits) {
          if (range.second == 0) continue;
          writeLines((dir / (std::string(name) + "." + dirName + "." + ml.languages[s])).string(),
                     slice(s, range.first, range.second));
          writeLines((dir / (std::string(name) + "." + dirName + "." + ml.languages[t])).string(),
                     slice(t, range.first, range.second));
        }
      }
    }
    out << "wrote " << nl * (nl - 1) << " directions to " << dir.string() << '\n';
    return kExitOk;
  }
  ToyOptions o;
  o.task = parseToyTask(a.task);
  o.symbols = a.symbols;
  o.minLen = a.minLen;
  o.maxLen = a.maxLen;
  o.seed = a.seed;
  const ToyData d = makeToyData(o, a.train + a.mono, a.dev, a.test);
  std::vector<std::string> trainSrc(d.train.src.begin(), d.train.src.begin() + a.train);
  std::vector<std::string> trainTgt(d.train.tgt.begin(), d.train.tgt.begin() + a.train);
  writeLines((dir / "train.src").string(), trainSrc);
  writeLines((dir / "train.tgt").string(), trainTgt);
  if (a.mono) {
    // Target side of held-back pairs: monolingual text with a known answer.
    std::vector<std::string> mono(d.train.tgt.begin() + a.train, d.train.tgt.end());
    writeLines((dir / "mono.tgt").string(), mono);
    std::vector<std::string> monoSrc(d.train.src.begin() + a.train, d.train.src.end());
    writeLines((dir / "mono.src").string(), monoSrc);
  }
  writeLines((dir / "dev.src").string(), d.dev.src);
  writeLines((dir / "dev.tgt").string(), d.dev.tgt);
  writeLines((dir / "test.src").string(), d.test.src);
  writeLines((dir / "test.tgt").string(), d.test.tgt);
  out << "wrote " << toString(o.task) << " data to " << dir.string() << '\n';
  return kExitOk;
}

}  // namespace

int runCli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Translation language model toolkit: concatenated encoder-only models and an encoder-decoder baseline",
               "tlm"};
  app.require_subcommand(1);

  std::string configPath;
  std::vector<std::string> overrides;
  auto* train = app.add_subcommand("train", "Train a model from a run config");
  train->add_option("config", configPath, "Run config file")->required();
  train->add_option("--set", overrides, "Override a config entry (key=value), repeatable");

  TranslateArgs ta;
  auto* translateCmd = app.add_subcommand("translate", "Translate one sentence per line with beam search");
  translateCmd->add_option("--checkpoint", ta.checkpoint, "Model checkpoint")->required();
  translateCmd->add_option("--vocab", ta.vocab, "Vocabulary file of the run")->required();
  translateCmd->add_option("--bpe", ta.bpe, "BPE merges applied to the input");
  translateCmd->add_option("--input", ta.input, "Source sentences")->required();
  translateCmd->add_option("--output", ta.output, "Translations")->required();
  translateCmd->add_option("--src-lang", ta.srcLang, "Source language tag (multilingual models)");
  translateCmd->add_option("--tgt-lang", ta.tgtLang, "Target language tag (multilingual models)");
  translateCmd->add_option("--beam", ta.beam, "Beam size")->check(CLI::PositiveNumber);
  translateCmd->add_option("--alpha", ta.alpha, "Length normalization exponent");
  translateCmd->add_option("--max-len", ta.maxLen, "Maximum target length (0: 2 * source + 10)");
  translateCmd->add_flag("--scores", ta.scores, "Append a tab and the log-probability to each line");

  std::string hypPath, refPath;
  auto* score = app.add_subcommand("score", "Corpus BLEU of a hypothesis file against a reference file");
  score->add_option("hyp", hypPath, "Hypotheses")->required();
  score->add_option("ref", refPath, "References")->required();

  std::size_t jobs = 0;
  auto* grid = app.add_subcommand("grid", "Run the 32-cell reconstruction grid plus the baseline");
  grid->add_option("config", configPath, "Run config file")->required();
  grid->add_option("--set", overrides, "Override a config entry (key=value), repeatable");
  grid->add_option("--jobs", jobs, "Parallel worker threads (default: config 'jobs')");

  BacktranslateArgs ba;
  auto* bt = app.add_subcommand("backtranslate", "Create synthetic parallel data from target-side text");
  bt->add_option("--checkpoint", ba.checkpoint, "Reverse-direction model (target -> source)")->required();
  bt->add_option("--vocab", ba.vocab, "Vocabulary file of the reverse run")->required();
  bt->add_option("--bpe", ba.bpe, "BPE merges");
  bt->add_option("--mono", ba.mono, "Monolingual target-language sentences")->required();
  bt->add_option("--out-src", ba.outSrc, "Synthetic source output")->required();
  bt->add_option("--out-tgt", ba.outTgt, "Aligned target output")->required();
  bt->add_option("--src-lang", ba.srcLang, "Source language of the forward direction");
  bt->add_option("--tgt-lang", ba.tgtLang, "Target language of the forward direction");
  bt->add_option("--beam", ba.beam, "Beam size")->check(CLI::PositiveNumber);
  bt->add_option("--alpha", ba.alpha, "Length normalization exponent");

  std::size_t maskJ = 0, maskI = 0;
  std::string variant = "full";
  bool encdec = false, noLabels = false;
  auto* mask = app.add_subcommand("mask-dump", "Print an attention mask as a 0/1 grid (rows are queries)");
  mask->add_option("J", maskJ, "Source length including tags")->required()->check(CLI::PositiveNumber);
  mask->add_option("I", maskI, "Target length including tags")->required()->check(CLI::PositiveNumber);
  mask->add_option("--variant", variant, "Source block: full or triangular");
  mask->add_flag("--encdec", encdec, "Print the three encoder-decoder masks instead");
  mask->add_flag("--no-labels", noLabels, "Bare grid without the boundary markers");

  std::vector<std::string> bpeInputs;
  std::size_t merges = 0;
  std::string bpeOut;
  auto* bpeTrain = app.add_subcommand("bpe-train", "Learn BPE merges");
  bpeTrain->add_option("--input", bpeInputs, "Training text files")->required();
  bpeTrain->add_option("--merges", merges, "Number of merges")->required();
  bpeTrain->add_option("--output", bpeOut, "Merges file")->required();

  std::string bpeModel, bpeIn;
  bool bpeDecode = false;
  auto* bpeApply = app.add_subcommand("bpe-apply", "Segment text with learned merges (or undo it)");
  bpeApply->add_option("--model", bpeModel, "Merges file");
  bpeApply->add_option("--input", bpeIn, "Input text")->required();
  bpeApply->add_option("--output", bpeOut, "Output text")->required();
  bpeApply->add_flag("--decode", bpeDecode, "Join segmented text back into words");

  ToyArgs toy;
  auto* makeToy = app.add_subcommand("make-toy", "Generate a synthetic toy corpus");
  makeToy->add_option("--task", toy.task, "copy, reversal or mapping");
  makeToy->add_option("--out", toy.out, "Output directory")->required();
  makeToy->add_option("--train", toy.train, "Training pairs");
  makeToy->add_option("--dev", toy.dev, "Development pairs");
  makeToy->add_option("--test", toy.test, "Test pairs");
  makeToy->add_option("--mono", toy.mono, "Extra target-only sentences (mono.tgt)");
  makeToy->add_option("--symbols", toy.symbols, "Alphabet size");
  makeToy->add_option("--min-len", toy.minLen, "Shortest sentence");
  makeToy->add_option("--max-len", toy.maxLen, "Longest sentence");
  makeToy->add_option("--seed", toy.seed, "Random seed");
  makeToy->add_flag("--multilingual", toy.multilingual, "Three languages, six directions");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << oneLine(e.what()) << '\n';
    return kExitUsage;
  }

  try {
    if (*train) return cmdTrain(configPath, overrides, out);
    if (*translateCmd) return cmdTranslate(ta, err);
    if (*score) return cmdScore(hypPath, refPath, out);
    if (*grid) return cmdGrid(configPath, overrides, jobs, out, err);
    if (*bt) return cmdBacktranslate(ba, err);
    if (*mask) return cmdMaskDump(maskJ, maskI, variant, encdec, noLabels, out);
    if (*bpeTrain) return cmdBpeTrain(bpeInputs, merges, bpeOut, out);
    if (*bpeApply) {
      if (!bpeDecode && bpeModel.empty()) throw UsageError("bpe-apply needs --model unless --decode is given");
      return cmdBpeApply(bpeModel, bpeIn, bpeOut, bpeDecode);
    }
    if (*makeToy) return cmdMakeToy(toy, out);
  } catch (const NumericError& e) {
    err << "error: " << e.kind() << ": " << oneLine(e.what()) << '\n';
    return kExitNumeric;
  } catch (const ConfigError& e) {
    err << "error: " << e.kind() << ": " << oneLine(e.what()) << '\n';
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.kind() << ": " << oneLine(e.what()) << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.kind() << ": " << oneLine(e.what()) << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: io: " << oneLine(e.what()) << '\n';
    return kExitData;
  }
  return kExitUsage;
}

TLM_END_NAMESPACE
