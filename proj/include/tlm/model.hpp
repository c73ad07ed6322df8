#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "tlm/data.hpp"
#include "tlm/mask.hpp"
#include "tlm/tensor.hpp"

TLM_BEGIN_NAMESPACE

enum class Architecture { EncOnly, EncDec };
enum class NormPlacement { Post, Pre };

const char* toString(Architecture a);
Architecture parseArchitecture(const std::string& s);
const char* toString(NormPlacement n);
NormPlacement parseNormPlacement(const std::string& s);

struct ModelConfig {
  Architecture arch = Architecture::EncOnly;
  std::size_t numLayers = 2;     // EncOnly
  std::size_t numEncLayers = 1;  // EncDec
  std::size_t numDecLayers = 1;  // EncDec
  std::size_t dModel = 64;
  std::size_t dFF = 128;
  std::size_t numHeads = 4;
  std::size_t vocabSize = 0;
  std::size_t maxLen = 256;
  double dropout = 0.1;
  bool tieEmbeddings = true;
  SourceMask sourceMask = SourceMask::Full;
  NormPlacement norm = NormPlacement::Post;

  void validate() const;
  /// `key = value` lines, stable order; parse() accepts exactly this.
  std::string serialize() const;
  static ModelConfig parse(const std::string& text);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Learnable parameters by component. Linear maps carry no bias; each layer
/// normalization has a gain and a bias vector.
struct ParamBreakdown {
  std::size_t embeddings = 0;
  std::size_t attention = 0;
  std::size_t feedForward = 0;
  std::size_t norms = 0;
  std::size_t output = 0;

  std::size_t total() const { return embeddings + attention + feedForward + norms + output; }
};

ParamBreakdown countParams(const ModelConfig& cfg);

/// Logit rows of a packed batch: row r belongs to example[r] at sequence
/// position position[r]. The concatenated model emits one row per position;
/// the encoder-decoder emits rows only for target-side positions.
struct BatchLogits {
  Var logits;
  std::vector<std::size_t> example;
  std::vector<std::size_t> position;
};

/// Either the concatenated (encoder-only) translation model or the
/// encoder-decoder baseline, selected by ModelConfig::arch. Both read the same
/// ConcatExample layout; the baseline splits it at the boundary.
class Model {
 public:
  Model(ModelConfig cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  std::vector<Parameter>& params() { return params_; }
  const std::vector<Parameter>& params() const { return params_; }
  Parameter& param(const std::string& name);
  const Parameter& param(const std::string& name) const;
  std::size_t numAllocatedParams() const;
  void zeroGrad();

  /// Packed forward over a batch, recording parameter leaves so that
  /// tape.backward() accumulates into params(). `rng` drives dropout and may
  /// be null when train is false.
  BatchLogits forward(Tape& tape, std::span<const ConcatExample* const> batch, bool train, std::mt19937_64* rng);

  /// Evaluation-mode forward that treats the weights as constants; safe to
  /// call concurrently on a shared model.
  BatchLogits infer(Tape& tape, std::span<const ConcatExample* const> batch) const;

  /// infer() with one caller-supplied mask per example (concatenated model
  /// only) and optional dropout.
  BatchLogits inferWithMasks(Tape& tape, std::span<const ConcatExample* const> batch,
                             std::span<const AttentionMask* const> masks, bool train = false,
                             std::mt19937_64* rng = nullptr) const;

  /// Log-probabilities of the next target token after each prefix.
  /// `source` is the framed source span (<s> f1..fn </s>); every prefix starts
  /// with the target begin tag. Inference only.
  std::vector<std::vector<double>> nextTokenLogProbs(std::span<const TokenId> source,
                                                     std::span<const std::vector<TokenId>> prefixes) const;

 private:
  struct AttnParams {
    std::size_t wq, wk, wv, wo;
  };
  struct NormParams {
    std::size_t gain, bias;
  };
  struct FfnParams {
    std::size_t w1, w2;
  };
  struct Layer {
    AttnParams self;
    AttnParams cross;  // decoder layers only
    FfnParams ffn;
    NormParams norm1, norm2, norm3;
  };

  std::size_t addParam(const std::string& name, Shape shape, std::mt19937_64& rng, int init);
  AttnParams addAttention(const std::string& prefix, std::mt19937_64& rng);
  NormParams addNorm(const std::string& prefix, std::mt19937_64& rng);

  struct Ctx;
  Var embed(Ctx& c, std::span<const TokenId> ids, std::span<const std::size_t> positions) const;
  Var attention(Ctx& c, const AttnParams& p, Var x, Var memory, std::span<const AttentionSegment> segs) const;
  Var feedForward(Ctx& c, const FfnParams& p, Var x) const;
  Var norm(Ctx& c, const NormParams& p, Var x) const;
  Var encoderLayer(Ctx& c, const Layer& l, Var x, std::span<const AttentionSegment> segs) const;
  Var decoderLayer(Ctx& c, const Layer& l, Var x, Var memory, std::span<const AttentionSegment> selfSegs,
                   std::span<const AttentionSegment> crossSegs) const;
  Var project(Ctx& c, Var x) const;

  Var weight(Ctx& c, std::size_t index) const;
  BatchLogits run(Ctx& c, std::span<const ConcatExample* const> batch) const;
  BatchLogits forwardConcat(Ctx& c, std::span<const ConcatExample* const> batch) const;
  BatchLogits forwardEncDec(Ctx& c, std::span<const ConcatExample* const> batch) const;

  ModelConfig cfg_;
  std::vector<Parameter> params_;
  Tensor positions_;
  std::size_t embed_ = 0, output_ = 0;
  std::vector<Layer> encLayers_, decLayers_;
  NormParams encFinal_{}, decFinal_{};
};

/// Single-example forward of the concatenated model; logits (J+I) x V.
/// `mask` must match the example length.
Tensor forwardTlm(const Model& model, const ConcatExample& ex, const AttentionMask& mask, bool train = false,
                  std::uint64_t dropoutSeed = 0);

/// Single-pair forward of the baseline; target logits I x V for the decoder
/// input <t> e1..e_{I-1}.
Tensor forwardEncDec(const Model& model, std::span<const TokenId> srcFramed, std::span<const TokenId> tgtInput,
                     bool train = false, std::uint64_t dropoutSeed = 0);

// Checkpoint format (all integers little-endian):
//   "TLMCKPT1"
//   u64 length, config record (ModelConfig::serialize text)
//   repeated: u64 name length, name, u64 rank, rank x u64 dims, float32 data
void saveCheckpoint(const Model& model, const std::string& path);
Model loadCheckpoint(const std::string& path);
/// Also refuses a checkpoint whose architecture differs from `expected`.
Model loadCheckpoint(const std::string& path, Architecture expected);

TLM_END_NAMESPACE
