#include "tlm/run_config.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

TLM_BEGIN_NAMESPACE

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t toSize(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + " expects a non-negative integer, got '" + v + "'");
  return out;
}

double toDouble(const std::string& key, const std::string& v) {
  double out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + " expects a number, got '" + v + "'");
  return out;
}

bool toBool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "yes" || v == "on" || v == "1") return true;
  if (v == "false" || v == "no" || v == "off" || v == "0") return false;
  throw ConfigError(key + " expects true|false, got '" + v + "'");
}

std::string fromDouble(double d) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, d);
  return std::string(buf, p);
}

std::string fromBool(bool b) { return b ? "true" : "false"; }

struct Field {
  const char* key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define TLM_SIZE_FIELD(name, member) \
  Field{name, [](RunConfig& c, const std::string& v) { c.member = toSize(name, v); }, \
        [](const RunConfig& c) { return std::to_string(c.member); }}
#define TLM_DOUBLE_FIELD(name, member) \
  Field{name, [](RunConfig& c, const std::string& v) { c.member = toDouble(name, v); }, \
        [](const RunConfig& c) { return fromDouble(c.member); }}
#define TLM_STRING_FIELD(name, member) \
  Field{name, [](RunConfig& c, const std::string& v) { c.member = v; }, [](const RunConfig& c) { return c.member; }}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      Field{"arch", [](RunConfig& c, const std::string& v) { c.model.arch = parseArchitecture(v); },
            [](const RunConfig& c) { return std::string(toString(c.model.arch)); }},
      TLM_SIZE_FIELD("layers", model.numLayers),
      TLM_SIZE_FIELD("enc_layers", model.numEncLayers),
      TLM_SIZE_FIELD("dec_layers", model.numDecLayers),
      TLM_SIZE_FIELD("d_model", model.dModel),
      TLM_SIZE_FIELD("d_ff", model.dFF),
      TLM_SIZE_FIELD("heads", model.numHeads),
      TLM_SIZE_FIELD("max_len", model.maxLen),
      TLM_DOUBLE_FIELD("dropout", model.dropout),
      Field{"tie_embeddings", [](RunConfig& c, const std::string& v) { c.model.tieEmbeddings = toBool("tie_embeddings", v); },
            [](const RunConfig& c) { return fromBool(c.model.tieEmbeddings); }},
      Field{"source_mask", [](RunConfig& c, const std::string& v) { c.model.sourceMask = parseSourceMask(v); },
            [](const RunConfig& c) { return std::string(toString(c.model.sourceMask)); }},
      Field{"norm", [](RunConfig& c, const std::string& v) { c.model.norm = parseNormPlacement(v); },
            [](const RunConfig& c) { return std::string(toString(c.model.norm)); }},

      Field{"task", [](RunConfig& c, const std::string& v) { c.train.example.task = parseReconTask(v); },
            [](const RunConfig& c) { return std::string(toString(c.train.example.task)); }},
      Field{"noise", [](RunConfig& c, const std::string& v) { c.train.example.noise = toBool("noise", v); },
            [](const RunConfig& c) { return fromBool(c.train.example.noise); }},
      TLM_DOUBLE_FIELD("noise_select", train.example.noiseSpec.selectProb),
      TLM_DOUBLE_FIELD("noise_mask", train.example.noiseSpec.maskFrac),
      TLM_DOUBLE_FIELD("noise_random", train.example.noiseSpec.randomFrac),
      TLM_DOUBLE_FIELD("noise_keep", train.example.noiseSpec.keepFrac),
      Field{"schedule", [](RunConfig& c, const std::string& v) { c.train.schedule.kind = parseScheduleKind(v); },
            [](const RunConfig& c) { return std::string(toString(c.train.schedule.kind)); }},
      TLM_SIZE_FIELD("tau", train.schedule.tau),
      TLM_DOUBLE_FIELD("schedule_start", train.schedule.startValue),
      TLM_DOUBLE_FIELD("schedule_knee", train.schedule.kneeValue),
      TLM_DOUBLE_FIELD("schedule_divisor", train.schedule.postSlopeDivisor),
      TLM_DOUBLE_FIELD("schedule_floor", train.schedule.floorValue),
      TLM_DOUBLE_FIELD("label_smoothing", train.labelSmoothing),

      TLM_SIZE_FIELD("steps", train.steps),
      TLM_SIZE_FIELD("warmup", train.warmup),
      TLM_DOUBLE_FIELD("lr_scale", train.lrScale),
      TLM_DOUBLE_FIELD("adam_beta1", train.adam.beta1),
      TLM_DOUBLE_FIELD("adam_beta2", train.adam.beta2),
      TLM_DOUBLE_FIELD("adam_eps", train.adam.eps),
      TLM_SIZE_FIELD("batch_tokens", train.batch.batchTokens),
      TLM_SIZE_FIELD("bucket_batches", train.batch.bucketBatches),
      TLM_DOUBLE_FIELD("mono_ratio", train.batch.monoRatio),
      TLM_SIZE_FIELD("eval_interval", train.evalInterval),
      Field{"seed", [](RunConfig& c, const std::string& v) { c.train.seed = toSize("seed", v); },
            [](const RunConfig& c) { return std::to_string(c.train.seed); }},

      TLM_SIZE_FIELD("beam", beam.beamSize),
      TLM_DOUBLE_FIELD("alpha", beam.alpha),
      TLM_SIZE_FIELD("max_target_len", beam.maxTargetLen),

      TLM_STRING_FIELD("train_src", trainSrc),
      TLM_STRING_FIELD("train_tgt", trainTgt),
      TLM_STRING_FIELD("dev_src", devSrc),
      TLM_STRING_FIELD("dev_tgt", devTgt),
      TLM_STRING_FIELD("test_src", testSrc),
      TLM_STRING_FIELD("test_tgt", testTgt),
      TLM_STRING_FIELD("mono", mono),
      TLM_STRING_FIELD("vocab", vocab),
      TLM_STRING_FIELD("bpe", bpe),
      TLM_STRING_FIELD("src_lang", srcLang),
      TLM_STRING_FIELD("tgt_lang", tgtLang),
      TLM_STRING_FIELD("directions", directions),
      TLM_STRING_FIELD("run_dir", runDir),
      TLM_SIZE_FIELD("jobs", jobs),
  };
  return table;
}

#undef TLM_SIZE_FIELD
#undef TLM_DOUBLE_FIELD
#undef TLM_STRING_FIELD

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  for (const Field& f : fields()) {
    if (key == f.key) {
      f.set(*this, value);
      return;
    }
  }
  throw ConfigError("unknown key '" + key + "'");
}

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const Field& f : fields()) out.push_back(f.key);
  return out;
}

RunConfig RunConfig::parse(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  cfg.model.vocabSize = 1;  // placeholder until the vocabulary is known
  std::istringstream in(text);
  std::string raw;
  std::set<std::string> seen;
  for (std::size_t lineNo = 1; std::getline(in, raw); ++lineNo) {
    const std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = origin + ":" + std::to_string(lineNo) + ": ";
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!seen.insert(key).second) throw ConfigError(where + "key '" + key + "' set twice");
    try {
      cfg.set(key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  cfg.model.validate();
  cfg.train.example.noiseSpec.validate();
  cfg.train.resolvedSchedule();
  if (cfg.beam.beamSize == 0) throw ConfigError(origin + ": beam must be at least 1");
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

std::string RunConfig::serialize() const {
  std::string out;
  for (const Field& f : fields()) out += std::string(f.key) + " = " + f.get(*this) + "\n";
  return out;
}

// ---------------------------------------------------------------------------

namespace {

std::string expand(std::string path, const std::string& src, const std::string& tgt) {
  for (const auto& [pat, rep] : {std::pair<std::string, std::string>{"{src}", src}, {"{tgt}", tgt}}) {
    for (auto pos = path.find(pat); pos != std::string::npos; pos = path.find(pat, pos + rep.size()))
      path.replace(pos, pat.size(), rep);
  }
  return path;
}

struct RawPairs {
  std::vector<std::string> src, tgt;
  std::string srcLang, tgtLang;
};

RawPairs readRaw(const std::string& srcPath, const std::string& tgtPath, const std::optional<BpeModel>& bpe) {
  RawPairs r;
  r.src = readLines(srcPath);
  r.tgt = readLines(tgtPath);
  if (r.src.size() != r.tgt.size())
    throw DataError("parallel corpus line counts differ: " + srcPath + " has " + std::to_string(r.src.size()) + ", " +
                    tgtPath + " has " + std::to_string(r.tgt.size()));
  if (bpe) {
    for (std::string& l : r.src) l = bpe->encodeLine(l);
    for (std::string& l : r.tgt) l = bpe->encodeLine(l);
  }
  return r;
}

void appendPairs(std::vector<SentencePair>& out, const RawPairs& raw, const Vocab& vocab, const TagSet& tags) {
  for (std::size_t i = 0; i < raw.src.size(); ++i) {
    SentencePair p{vocab.encode(raw.src[i]), vocab.encode(raw.tgt[i]), tags};
    if (p.src.empty() || p.tgt.empty()) continue;
    out.push_back(std::move(p));
  }
}

}  // namespace

Experiment loadExperiment(const RunConfig& cfg) {
  Experiment ex;
  if (!cfg.bpe.empty()) ex.bpe = BpeModel::loadFile(cfg.bpe);
  if (cfg.trainSrc.empty() || cfg.trainTgt.empty()) throw ConfigError("train_src and train_tgt are required");
  if (!cfg.directions.empty()) ex.directions = parseDirections(cfg.directions);
  std::vector<Direction> dirs = ex.directions;
  if (dirs.empty()) dirs.push_back({cfg.srcLang, cfg.tgtLang});
  const std::vector<std::string> languages = ex.directions.empty() ? std::vector<std::string>{}
                                                                   : directionLanguages(ex.directions);

  std::vector<RawPairs> train, dev, test;
  for (const Direction& d : dirs) {
    train.push_back(readRaw(expand(cfg.trainSrc, d.src, d.tgt), expand(cfg.trainTgt, d.src, d.tgt), ex.bpe));
    train.back().srcLang = d.src;
    train.back().tgtLang = d.tgt;
    if (!cfg.devSrc.empty()) {
      dev.push_back(readRaw(expand(cfg.devSrc, d.src, d.tgt), expand(cfg.devTgt, d.src, d.tgt), ex.bpe));
      dev.back().srcLang = d.src;
      dev.back().tgtLang = d.tgt;
    }
    if (!cfg.testSrc.empty()) {
      test.push_back(readRaw(expand(cfg.testSrc, d.src, d.tgt), expand(cfg.testTgt, d.src, d.tgt), ex.bpe));
      test.back().srcLang = d.src;
      test.back().tgtLang = d.tgt;
    }
  }
  std::vector<std::string> monoLines;
  if (!cfg.mono.empty()) {
    monoLines = readLines(expand(cfg.mono, cfg.srcLang, cfg.tgtLang));
    if (ex.bpe)
      for (std::string& l : monoLines) l = ex.bpe->encodeLine(l);
  }

  if (!cfg.vocab.empty() && std::filesystem::exists(cfg.vocab)) {
    ex.vocab = Vocab::loadFile(cfg.vocab);
    if (ex.vocab.languages() != languages) throw DataError("vocabulary " + cfg.vocab + " has other direction tags");
  } else {
    std::vector<std::string> lines;
    for (const RawPairs& r : train) {
      lines.insert(lines.end(), r.src.begin(), r.src.end());
      lines.insert(lines.end(), r.tgt.begin(), r.tgt.end());
    }
    lines.insert(lines.end(), monoLines.begin(), monoLines.end());
    ex.vocab = Vocab::fromCorpus(lines, languages);
  }

  auto tagsFor = [&](const RawPairs& r) {
    return ex.directions.empty() ? ex.vocab.tags() : ex.vocab.tags(r.srcLang, r.tgtLang);
  };
  for (const RawPairs& r : train) appendPairs(ex.train.pairs, r, ex.vocab, tagsFor(r));
  for (const RawPairs& r : dev) appendPairs(ex.dev, r, ex.vocab, tagsFor(r));
  for (const RawPairs& r : test) appendPairs(ex.test, r, ex.vocab, tagsFor(r));
  ex.train.monoTags = ex.vocab.tags();
  for (const std::string& l : monoLines) {
    std::vector<TokenId> ids = ex.vocab.encode(l);
    if (!ids.empty()) ex.train.mono.push_back(std::move(ids));
  }
  if (ex.train.pairs.empty()) throw DataError("training corpus " + cfg.trainSrc + " has no usable pairs");
  return ex;
}

std::vector<TokenId> encodeLine(const Experiment& ex, const std::string& line) {
  return ex.vocab.encode(ex.bpe ? ex.bpe->encodeLine(line) : line);
}

TLM_END_NAMESPACE
