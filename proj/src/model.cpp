#include "tlm/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "tlm/vocab.hpp"

TLM_BEGIN_NAMESPACE

const char* toString(Architecture a) { return a == Architecture::EncOnly ? "enc-only" : "enc-dec"; }

Architecture parseArchitecture(const std::string& s) {
  if (s == "enc-only" || s == "EncOnly" || s == "tlm") return Architecture::EncOnly;
  if (s == "enc-dec" || s == "EncDec" || s == "transformer") return Architecture::EncDec;
  throw ConfigError("unknown architecture '" + s + "' (expected enc-only|enc-dec)");
}

const char* toString(NormPlacement n) { return n == NormPlacement::Post ? "post" : "pre"; }

NormPlacement parseNormPlacement(const std::string& s) {
  if (s == "post") return NormPlacement::Post;
  if (s == "pre") return NormPlacement::Pre;
  throw ConfigError("unknown norm placement '" + s + "' (expected post|pre)");
}

// ---------------------------------------------------------------------------
// ModelConfig

void ModelConfig::validate() const {
  if (dModel == 0 || dFF == 0 || numHeads == 0) throw ConfigError("model dimensions must be positive");
  if (dModel % numHeads != 0) throw ConfigError("d_model must be divisible by heads");
  if (vocabSize == 0) throw ConfigError("vocab size must be positive");
  if (maxLen == 0) throw ConfigError("max_len must be positive");
  if (dropout < 0 || dropout >= 1) throw ConfigError("dropout must lie in [0,1)");
  if (arch == Architecture::EncOnly && numLayers == 0) throw ConfigError("enc-only model needs at least one layer");
  if (arch == Architecture::EncDec && (numEncLayers == 0 || numDecLayers == 0))
    throw ConfigError("enc-dec model needs encoder and decoder layers");
}

std::string ModelConfig::serialize() const {
  std::ostringstream os;
  os.precision(17);
  os << "arch = " << toString(arch) << '\n'
     << "layers = " << numLayers << '\n'
     << "enc_layers = " << numEncLayers << '\n'
     << "dec_layers = " << numDecLayers << '\n'
     << "d_model = " << dModel << '\n'
     << "d_ff = " << dFF << '\n'
     << "heads = " << numHeads << '\n'
     << "vocab_size = " << vocabSize << '\n'
     << "max_len = " << maxLen << '\n'
     << "dropout = " << dropout << '\n'
     << "tie_embeddings = " << (tieEmbeddings ? "true" : "false") << '\n'
     << "source_mask = " << toString(sourceMask) << '\n'
     << "norm = " << toString(norm) << '\n';
  return os.str();
}

ModelConfig ModelConfig::parse(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("model config line without '=': " + line);
    auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(" \t"));
      s.erase(s.find_last_not_of(" \t\r") + 1);
      return s;
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  auto take = [&](const char* key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw FormatError(std::string("model config missing key ") + key);
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  auto num = [&](const char* key) -> std::size_t {
    const std::string v = take(key);
    try {
      return static_cast<std::size_t>(std::stoull(v));
    } catch (const std::exception&) {
      throw FormatError(std::string("model config key ") + key + " is not an integer");
    }
  };
  ModelConfig c;
  c.arch = parseArchitecture(take("arch"));
  c.numLayers = num("layers");
  c.numEncLayers = num("enc_layers");
  c.numDecLayers = num("dec_layers");
  c.dModel = num("d_model");
  c.dFF = num("d_ff");
  c.numHeads = num("heads");
  c.vocabSize = num("vocab_size");
  c.maxLen = num("max_len");
  c.dropout = std::stod(take("dropout"));
  const std::string tie = take("tie_embeddings");
  if (tie != "true" && tie != "false") throw FormatError("tie_embeddings must be true|false");
  c.tieEmbeddings = tie == "true";
  c.sourceMask = parseSourceMask(take("source_mask"));
  c.norm = parseNormPlacement(take("norm"));
  if (!kv.empty()) throw FormatError("unknown model config key " + kv.begin()->first);
  c.validate();
  return c;
}

ParamBreakdown countParams(const ModelConfig& cfg) {
  cfg.validate();
  const std::size_t d = cfg.dModel, v = cfg.vocabSize;
  const std::size_t attn = 4 * d * d;
  const std::size_t ffn = 2 * d * cfg.dFF;
  const std::size_t ln = 2 * d;
  ParamBreakdown b;
  b.embeddings = v * d;
  b.output = cfg.tieEmbeddings ? 0 : d * v;
  if (cfg.arch == Architecture::EncOnly) {
    b.attention = cfg.numLayers * attn;
    b.feedForward = cfg.numLayers * ffn;
    b.norms = cfg.numLayers * 2 * ln + (cfg.norm == NormPlacement::Pre ? ln : 0);
  } else {
    b.attention = cfg.numEncLayers * attn + cfg.numDecLayers * 2 * attn;
    b.feedForward = (cfg.numEncLayers + cfg.numDecLayers) * ffn;
    b.norms = cfg.numEncLayers * 2 * ln + cfg.numDecLayers * 3 * ln + (cfg.norm == NormPlacement::Pre ? 2 * ln : 0);
  }
  return b;
}

// ---------------------------------------------------------------------------
// Construction

namespace {
enum Init { kXavier = 0, kEmbedding = 1, kOnes = 2, kZeros = 3 };
}

std::size_t Model::addParam(const std::string& name, Shape shape, std::mt19937_64& rng, int init) {
  Tensor t(shape);
  switch (init) {
    case kXavier: {
      const double limit = std::sqrt(6.0 / static_cast<double>(shape[0] + shape[1]));
      std::uniform_real_distribution<double> u(-limit, limit);
      for (real& x : t.data()) x = static_cast<real>(u(rng));
      break;
    }
    case kEmbedding: {
      std::normal_distribution<double> n(0.0, std::pow(static_cast<double>(cfg_.dModel), -0.5));
      for (real& x : t.data()) x = static_cast<real>(n(rng));
      break;
    }
    case kOnes:
      t.fill(1);
      break;
    default:
      break;
  }
  params_.emplace_back(name, std::move(t));
  return params_.size() - 1;
}

Model::AttnParams Model::addAttention(const std::string& prefix, std::mt19937_64& rng) {
  const std::size_t d = cfg_.dModel;
  AttnParams a;
  a.wq = addParam(prefix + ".wq", {d, d}, rng, kXavier);
  a.wk = addParam(prefix + ".wk", {d, d}, rng, kXavier);
  a.wv = addParam(prefix + ".wv", {d, d}, rng, kXavier);
  a.wo = addParam(prefix + ".wo", {d, d}, rng, kXavier);
  return a;
}

Model::NormParams Model::addNorm(const std::string& prefix, std::mt19937_64& rng) {
  NormParams n;
  n.gain = addParam(prefix + ".gain", {cfg_.dModel}, rng, kOnes);
  n.bias = addParam(prefix + ".bias", {cfg_.dModel}, rng, kZeros);
  return n;
}

Model::Model(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  const std::size_t d = cfg_.dModel;
  positions_ = sinusoidalPositions(cfg_.maxLen, d);
  embed_ = addParam("embed", {cfg_.vocabSize, d}, rng, kEmbedding);

  auto ffn = [&](const std::string& prefix) {
    FfnParams f;
    f.w1 = addParam(prefix + ".w1", {d, cfg_.dFF}, rng, kXavier);
    f.w2 = addParam(prefix + ".w2", {cfg_.dFF, d}, rng, kXavier);
    return f;
  };
  const bool pre = cfg_.norm == NormPlacement::Pre;
  if (cfg_.arch == Architecture::EncOnly) {
    for (std::size_t i = 0; i < cfg_.numLayers; ++i) {
      const std::string p = "layers." + std::to_string(i);
      Layer l{};
      l.self = addAttention(p + ".attn", rng);
      l.ffn = ffn(p + ".ffn");
      l.norm1 = addNorm(p + ".norm1", rng);
      l.norm2 = addNorm(p + ".norm2", rng);
      encLayers_.push_back(l);
    }
    if (pre) encFinal_ = addNorm("final_norm", rng);
  } else {
    for (std::size_t i = 0; i < cfg_.numEncLayers; ++i) {
      const std::string p = "enc.layers." + std::to_string(i);
      Layer l{};
      l.self = addAttention(p + ".attn", rng);
      l.ffn = ffn(p + ".ffn");
      l.norm1 = addNorm(p + ".norm1", rng);
      l.norm2 = addNorm(p + ".norm2", rng);
      encLayers_.push_back(l);
    }
    for (std::size_t i = 0; i < cfg_.numDecLayers; ++i) {
      const std::string p = "dec.layers." + std::to_string(i);
      Layer l{};
      l.self = addAttention(p + ".self", rng);
      l.cross = addAttention(p + ".cross", rng);
      l.ffn = ffn(p + ".ffn");
      l.norm1 = addNorm(p + ".norm1", rng);
      l.norm2 = addNorm(p + ".norm2", rng);
      l.norm3 = addNorm(p + ".norm3", rng);
      decLayers_.push_back(l);
    }
    if (pre) {
      encFinal_ = addNorm("enc.final_norm", rng);
      decFinal_ = addNorm("dec.final_norm", rng);
    }
  }
  if (!cfg_.tieEmbeddings) output_ = addParam("output", {d, cfg_.vocabSize}, rng, kXavier);
}

Parameter& Model::param(const std::string& name) {
  for (Parameter& p : params_)
    if (p.name == name) return p;
  throw UsageError("no parameter named " + name);
}

const Parameter& Model::param(const std::string& name) const { return const_cast<Model*>(this)->param(name); }

std::size_t Model::numAllocatedParams() const {
  std::size_t n = 0;
  for (const Parameter& p : params_) n += p.value.size();
  return n;
}

void Model::zeroGrad() {
  for (Parameter& p : params_) p.zeroGrad();
}

// ---------------------------------------------------------------------------
// Forward

struct Model::Ctx {
  Tape& tape;
  Model* trainable;  // null in inference mode
  bool train;
  std::mt19937_64* rng;
  std::span<const AttentionMask* const> maskOverride;
  std::vector<Var> weights;
};

Var Model::weight(Ctx& c, std::size_t index) const {
  if (c.weights.empty()) c.weights.assign(params_.size(), Var{});
  Var& v = c.weights[index];
  if (v.id == Var{}.id)
    v = c.trainable ? c.tape.parameter(c.trainable->params_[index]) : c.tape.constant(params_[index].value);
  return v;
}

Var Model::embed(Ctx& c, std::span<const TokenId> ids, std::span<const std::size_t> positions) const {
  const std::size_t d = cfg_.dModel;
  Var x = ops::embedding(c.tape, weight(c, embed_), ids);
  x = ops::scale(c.tape, x, static_cast<real>(std::sqrt(static_cast<double>(d))));
  Tensor pe({ids.size(), d});
  for (std::size_t i = 0; i < positions.size(); ++i) {
    if (positions[i] >= cfg_.maxLen)
      throw DataError("sequence position " + std::to_string(positions[i]) + " exceeds max_len " +
                      std::to_string(cfg_.maxLen));
    std::copy_n(positions_.ptr() + positions[i] * d, d, pe.ptr() + i * d);
  }
  x = ops::add(c.tape, x, c.tape.constant(std::move(pe)));
  if (c.train) x = ops::dropout(c.tape, x, static_cast<real>(cfg_.dropout), *c.rng);
  return x;
}

Var Model::attention(Ctx& c, const AttnParams& p, Var x, Var memory, std::span<const AttentionSegment> segs) const {
  Var q = ops::matmul(c.tape, x, weight(c, p.wq));
  Var k = ops::matmul(c.tape, memory, weight(c, p.wk));
  Var v = ops::matmul(c.tape, memory, weight(c, p.wv));
  Var o = ops::multiHeadAttention(c.tape, q, k, v, segs, cfg_.numHeads);
  return ops::matmul(c.tape, o, weight(c, p.wo));
}

Var Model::feedForward(Ctx& c, const FfnParams& p, Var x) const {
  Var h = ops::relu(c.tape, ops::matmul(c.tape, x, weight(c, p.w1)));
  return ops::matmul(c.tape, h, weight(c, p.w2));
}

Var Model::norm(Ctx& c, const NormParams& p, Var x) const {
  return ops::layerNorm(c.tape, x, weight(c, p.gain), weight(c, p.bias));
}

namespace {
Var residual(Tape& t, Var x, Var sub, bool train, double p, std::mt19937_64* rng) {
  if (train) sub = ops::dropout(t, sub, static_cast<real>(p), *rng);
  return ops::add(t, x, sub);
}
}  // namespace

Var Model::encoderLayer(Ctx& c, const Layer& l, Var x, std::span<const AttentionSegment> segs) const {
  const double p = cfg_.dropout;
  if (cfg_.norm == NormPlacement::Post) {
    x = norm(c, l.norm1, residual(c.tape, x, attention(c, l.self, x, x, segs), c.train, p, c.rng));
    return norm(c, l.norm2, residual(c.tape, x, feedForward(c, l.ffn, x), c.train, p, c.rng));
  }
  Var h = norm(c, l.norm1, x);
  x = residual(c.tape, x, attention(c, l.self, h, h, segs), c.train, p, c.rng);
  return residual(c.tape, x, feedForward(c, l.ffn, norm(c, l.norm2, x)), c.train, p, c.rng);
}

Var Model::decoderLayer(Ctx& c, const Layer& l, Var x, Var memory, std::span<const AttentionSegment> selfSegs,
                        std::span<const AttentionSegment> crossSegs) const {
  const double p = cfg_.dropout;
  if (cfg_.norm == NormPlacement::Post) {
    x = norm(c, l.norm1, residual(c.tape, x, attention(c, l.self, x, x, selfSegs), c.train, p, c.rng));
    x = norm(c, l.norm2, residual(c.tape, x, attention(c, l.cross, x, memory, crossSegs), c.train, p, c.rng));
    return norm(c, l.norm3, residual(c.tape, x, feedForward(c, l.ffn, x), c.train, p, c.rng));
  }
  Var h = norm(c, l.norm1, x);
  x = residual(c.tape, x, attention(c, l.self, h, h, selfSegs), c.train, p, c.rng);
  x = residual(c.tape, x, attention(c, l.cross, norm(c, l.norm2, x), memory, crossSegs), c.train, p, c.rng);
  return residual(c.tape, x, feedForward(c, l.ffn, norm(c, l.norm3, x)), c.train, p, c.rng);
}

Var Model::project(Ctx& c, Var x) const {
  if (cfg_.tieEmbeddings) return ops::matmulNT(c.tape, x, weight(c, embed_));
  return ops::matmul(c.tape, x, weight(c, output_));
}

BatchLogits Model::forwardConcat(Ctx& c, std::span<const ConcatExample* const> batch) const {
  std::vector<TokenId> ids;
  std::vector<std::size_t> pos;
  BatchLogits out;
  std::vector<AttentionMask> masks;
  masks.reserve(batch.size());
  for (std::size_t e = 0; e < batch.size(); ++e) {
    const ConcatExample& ex = *batch[e];
    const std::size_t n = ex.length();
    if (n == 0) throw DataError("empty example in batch");
    if (n > cfg_.maxLen)
      throw DataError("sequence length " + std::to_string(n) + " exceeds max_len " + std::to_string(cfg_.maxLen));
    if (!c.maskOverride.empty()) {
      const AttentionMask& m = *c.maskOverride[e];
      if (m.rows() != n || m.cols() != n)
        throw ShapeError("mask is " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                         " but the example has length " + std::to_string(n));
      masks.push_back(m);
    } else if (ex.monolingual()) {
      masks.push_back(buildCausalMask(n));
    } else {
      masks.push_back(buildTlmMask(ex.boundary, n - ex.boundary, cfg_.sourceMask));
    }
    for (std::size_t p = 0; p < n; ++p) {
      ids.push_back(ex.inputIds[p]);
      pos.push_back(p);
      out.example.push_back(e);
      out.position.push_back(p);
    }
  }
  std::vector<AttentionSegment> segs;
  std::size_t offset = 0;
  for (std::size_t e = 0; e < batch.size(); ++e) {
    const std::size_t n = batch[e]->length();
    segs.push_back({offset, n, offset, n, masks[e].view()});
    offset += n;
  }

  Var x = embed(c, ids, pos);
  for (const Layer& l : encLayers_) x = encoderLayer(c, l, x, segs);
  if (cfg_.norm == NormPlacement::Pre) x = norm(c, encFinal_, x);
  out.logits = project(c, x);
  return out;
}

BatchLogits Model::forwardEncDec(Ctx& c, std::span<const ConcatExample* const> batch) const {
  std::vector<TokenId> srcIds, tgtIds;
  std::vector<std::size_t> srcPos, tgtPos;
  std::vector<EncDecMasks> masks;
  masks.reserve(batch.size());
  BatchLogits out;
  for (std::size_t e = 0; e < batch.size(); ++e) {
    const ConcatExample& ex = *batch[e];
    if (ex.monolingual()) throw DataError("the encoder-decoder model cannot consume target-only examples");
    const std::size_t j = ex.boundary, i = ex.length() - ex.boundary;
    if (j > cfg_.maxLen || i > cfg_.maxLen)
      throw DataError("sequence length exceeds max_len " + std::to_string(cfg_.maxLen));
    masks.push_back(buildEncDecMasks(j, i));
    for (std::size_t p = 0; p < j; ++p) {
      srcIds.push_back(ex.inputIds[p]);
      srcPos.push_back(p);
    }
    for (std::size_t p = 0; p < i; ++p) {
      tgtIds.push_back(ex.inputIds[j + p]);
      tgtPos.push_back(p);
      out.example.push_back(e);
      out.position.push_back(j + p);
    }
  }
  std::vector<AttentionSegment> encSegs, decSegs, crossSegs;
  std::size_t so = 0, to = 0;
  for (std::size_t e = 0; e < batch.size(); ++e) {
    const std::size_t j = batch[e]->boundary, i = batch[e]->length() - j;
    encSegs.push_back({so, j, so, j, masks[e].encoderSelf.view()});
    decSegs.push_back({to, i, to, i, masks[e].decoderSelf.view()});
    crossSegs.push_back({to, i, so, j, masks[e].cross.view()});
    so += j;
    to += i;
  }

  Var mem = embed(c, srcIds, srcPos);
  for (const Layer& l : encLayers_) mem = encoderLayer(c, l, mem, encSegs);
  if (cfg_.norm == NormPlacement::Pre) mem = norm(c, encFinal_, mem);
  Var y = embed(c, tgtIds, tgtPos);
  for (const Layer& l : decLayers_) y = decoderLayer(c, l, y, mem, decSegs, crossSegs);
  if (cfg_.norm == NormPlacement::Pre) y = norm(c, decFinal_, y);
  out.logits = project(c, y);
  return out;
}

BatchLogits Model::run(Ctx& c, std::span<const ConcatExample* const> batch) const {
  if (batch.empty()) throw DataError("empty batch");
  if (c.train && !c.rng && cfg_.dropout > 0) throw UsageError("training forward needs an RNG for dropout");
  return cfg_.arch == Architecture::EncOnly ? forwardConcat(c, batch) : forwardEncDec(c, batch);
}

BatchLogits Model::forward(Tape& tape, std::span<const ConcatExample* const> batch, bool train,
                           std::mt19937_64* rng) {
  Ctx c{tape, this, train, rng, {}, {}};
  return run(c, batch);
}

BatchLogits Model::infer(Tape& tape, std::span<const ConcatExample* const> batch) const {
  Ctx c{tape, nullptr, false, nullptr, {}, {}};
  return run(c, batch);
}

std::vector<std::vector<double>> Model::nextTokenLogProbs(std::span<const TokenId> source,
                                                          std::span<const std::vector<TokenId>> prefixes) const {
  if (source.empty()) throw DataError("empty source span");
  std::vector<ConcatExample> exs(prefixes.size());
  std::vector<const ConcatExample*> ptrs;
  for (std::size_t i = 0; i < prefixes.size(); ++i) {
    if (prefixes[i].empty()) throw DataError("target prefix must start with the target tag");
    ConcatExample& ex = exs[i];
    ex.inputIds.assign(source.begin(), source.end());
    ex.inputIds.insert(ex.inputIds.end(), prefixes[i].begin(), prefixes[i].end());
    ex.boundary = source.size();
    ptrs.push_back(&ex);
  }
  if (ptrs.empty()) return {};
  Tape tape(false);
  BatchLogits bl = infer(tape, ptrs);
  const Tensor& logits = tape.value(bl.logits);
  const std::size_t v = logits.cols();
  // Last row of each example.
  std::vector<std::size_t> lastRow(ptrs.size());
  for (std::size_t r = 0; r < bl.example.size(); ++r) lastRow[bl.example[r]] = r;
  std::vector<std::vector<double>> out(ptrs.size(), std::vector<double>(v));
  for (std::size_t e = 0; e < ptrs.size(); ++e) {
    const real* z = logits.ptr() + lastRow[e] * v;
    double mx = z[0];
    for (std::size_t j = 1; j < v; ++j) mx = std::max(mx, static_cast<double>(z[j]));
    double se = 0;
    for (std::size_t j = 0; j < v; ++j) se += std::exp(z[j] - mx);
    const double lse = mx + std::log(se);
    for (std::size_t j = 0; j < v; ++j) out[e][j] = z[j] - lse;
  }
  return out;
}

BatchLogits Model::inferWithMasks(Tape& tape, std::span<const ConcatExample* const> batch,
                                  std::span<const AttentionMask* const> masks, bool train,
                                  std::mt19937_64* rng) const {
  if (cfg_.arch != Architecture::EncOnly) throw UsageError("explicit masks apply to the enc-only model only");
  if (masks.size() != batch.size()) throw ShapeError("one mask per example required");
  Ctx c{tape, nullptr, train, rng, masks, {}};
  return run(c, batch);
}

Tensor forwardTlm(const Model& model, const ConcatExample& ex, const AttentionMask& mask, bool train,
                  std::uint64_t dropoutSeed) {
  Tape tape(false);
  std::mt19937_64 rng(dropoutSeed);
  const ConcatExample* batch[1] = {&ex};
  const AttentionMask* masks[1] = {&mask};
  const BatchLogits bl = model.inferWithMasks(tape, batch, masks, train, &rng);
  return tape.value(bl.logits);
}

Tensor forwardEncDec(const Model& model, std::span<const TokenId> srcFramed, std::span<const TokenId> tgtInput,
                     bool train, std::uint64_t dropoutSeed) {
  if (model.config().arch != Architecture::EncDec) throw UsageError("forwardEncDec needs an enc-dec model");
  if (srcFramed.empty() || tgtInput.empty()) throw DataError("source and target input must be non-empty");
  ConcatExample ex;
  ex.inputIds.assign(srcFramed.begin(), srcFramed.end());
  ex.boundary = ex.inputIds.size();
  ex.inputIds.insert(ex.inputIds.end(), tgtInput.begin(), tgtInput.end());
  Tape tape(false);
  std::mt19937_64 rng(dropoutSeed);
  const ConcatExample* batch[1] = {&ex};
  BatchLogits bl;
  if (train) {
    // Dropout needs the recording path; a throwaway copy keeps `model` const.
    Model scratch = model;
    bl = scratch.forward(tape, batch, true, &rng);
  } else {
    bl = model.infer(tape, batch);
  }
  return tape.value(bl.logits);
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[8] = {'T', 'L', 'M', 'C', 'K', 'P', 'T', '1'};

void putU64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t getU64(std::istream& in, const std::string& path) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw FormatError("truncated checkpoint " + path);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void putF32(std::ostream& out, float f) {
  std::uint32_t u;
  std::memcpy(&u, &f, 4);
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

void saveCheckpoint(const Model& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path);
  out.write(kMagic, 8);
  const std::string cfg = model.config().serialize();
  putU64(out, cfg.size());
  out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  for (const Parameter& p : model.params()) {
    putU64(out, p.name.size());
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    putU64(out, p.value.rank());
    for (std::size_t d : p.value.shape()) putU64(out, d);
    for (real x : p.value.data()) putF32(out, static_cast<float>(x));
  }
  if (!out) throw DataError("failed writing checkpoint " + path);
}

Model loadCheckpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path);
  char magic[8];
  if (!in.read(magic, 8) || !std::equal(magic, magic + 8, kMagic))
    throw FormatError("bad checkpoint magic in " + path + " (expected TLMCKPT1)");
  const std::uint64_t cfgLen = getU64(in, path);
  if (cfgLen > (1u << 20)) throw FormatError("implausible config record length in " + path);
  std::string cfgText(cfgLen, '\0');
  if (!in.read(cfgText.data(), static_cast<std::streamsize>(cfgLen))) throw FormatError("truncated checkpoint " + path);
  Model model(ModelConfig::parse(cfgText), 0);
  for (Parameter& p : model.params()) {
    const std::uint64_t nameLen = getU64(in, path);
    if (nameLen > 4096) throw FormatError("implausible tensor name length in " + path);
    std::string name(nameLen, '\0');
    if (!in.read(name.data(), static_cast<std::streamsize>(nameLen))) throw FormatError("truncated checkpoint " + path);
    if (name != p.name) throw FormatError("checkpoint tensor '" + name + "' where '" + p.name + "' was expected");
    const std::uint64_t rank = getU64(in, path);
    if (rank > 8) throw FormatError("implausible rank for " + name);
    Shape shape(rank);
    for (auto& d : shape) d = getU64(in, path);
    if (shape != p.value.shape())
      throw FormatError("shape mismatch for " + name + ": file " + shapeString(shape) + ", config " +
                        shapeString(p.value.shape()));
    std::vector<unsigned char> raw(p.value.size() * 4);
    if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size())))
      throw FormatError("truncated checkpoint " + path);
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      std::uint32_t u = 0;
      for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(raw[4 * i + b]) << (8 * b);
      float f;
      std::memcpy(&f, &u, 4);
      p.value[i] = static_cast<real>(f);
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes in checkpoint " + path);
  return model;
}

Model loadCheckpoint(const std::string& path, Architecture expected) {
  Model m = loadCheckpoint(path);
  if (m.config().arch != expected)
    throw FormatError("checkpoint " + path + " holds a " + std::string(toString(m.config().arch)) +
                      " model but " + toString(expected) + " was expected");
  return m;
}

TLM_END_NAMESPACE
