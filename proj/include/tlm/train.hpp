#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tlm/beam.hpp"
#include "tlm/bpe.hpp"
#include "tlm/data.hpp"
#include "tlm/metrics.hpp"
#include "tlm/model.hpp"
#include "tlm/optim.hpp"
#include "tlm/schedule.hpp"

TLM_BEGIN_NAMESPACE

struct TrainOptions {
  std::size_t steps = 2000;
  std::size_t warmup = 4000;
  double lrScale = 1.0;
  double labelSmoothing = 0.1;
  /// tau == 0 on a decaying kind means 10% of `steps`.
  LambdaSchedule schedule;
  ExampleOptions example;
  BatchOptions batch;
  std::size_t evalInterval = 200;
  std::uint64_t seed = 1;
  AdamHyper adam;

  LambdaSchedule resolvedSchedule() const;
};

/// One line of the metrics log. Losses are means over the steps since the
/// previous line.
struct MetricsRow {
  std::size_t step = 0;
  double mt = 0;
  double re = 0;
  double lambda = 0;
  double devPpl = 0;      // target positions only; NaN without a dev set
  double devPplFull = 0;  // whole concatenation
};

std::string metricsHeader();
std::string formatMetricsRow(const MetricsRow& r);

struct TrainResult {
  std::vector<MetricsRow> log;
  std::size_t bestStep = 0;
  double bestDevPpl = 0;
  /// Weights at the best dev perplexity (the final weights without a dev set).
  std::optional<Model> best;
};

/// Called after every evaluation with the current model; isBest marks a new
/// best dev perplexity.
using EvalCallback = std::function<void(const Model&, const MetricsRow&, bool isBest)>;

/// Trains `model` in place. Deterministic for a given model, corpus and
/// options. Each metrics row is also written to `metricsOut` as it is
/// produced. A non-finite loss or gradient aborts with a NumericError that
/// names the step and the batch's examples.
TrainResult trainLoop(Model& model, const Corpus& train, std::span<const SentencePair> dev, const Vocab& vocab,
                      const TrainOptions& opts, std::ostream* metricsOut = nullptr, const EvalCallback& onEval = {});

// ---------------------------------------------------------------------------
// Evaluation helpers

/// Detokenized output: reserved ids dropped, BPE pieces merged when `bpe`.
std::string detokenize(std::span<const TokenId> ids, const Vocab& vocab, const BpeModel* bpe);

struct CorpusTranslation {
  std::vector<std::string> hypotheses;
  std::vector<BeamResult> results;
};

CorpusTranslation translateCorpus(const Model& model, std::span<const SentencePair> pairs, const Vocab& vocab,
                                  const BeamOptions& beam, const BpeModel* bpe = nullptr);

BleuReport evaluateBleu(const Model& model, std::span<const SentencePair> pairs, const Vocab& vocab,
                        const BeamOptions& beam, const BpeModel* bpe = nullptr);

// ---------------------------------------------------------------------------
// Grid search over the reconstruction hyperparameters

struct GridCell {
  bool baseline = false;
  ReconTask task = ReconTask::AE;
  SourceMask mask = SourceMask::Full;
  bool noise = false;
  ScheduleKind schedule = ScheduleKind::Const1;

  /// Stable identifier, also the resume file name.
  std::string key() const;
};

/// 2 tasks x 2 masks x 2 noise settings x 4 schedules, then the baseline.
std::vector<GridCell> gridCells();

struct GridRow {
  GridCell cell;
  double bleu = 0;
  double devPpl = 0;
  std::string error;  // non-empty when the run failed
};

struct GridOptions {
  ModelConfig tlmModel;       // arch EncOnly; mask overridden per cell
  ModelConfig baselineModel;  // arch EncDec
  TrainOptions train;         // task/noise/schedule overridden per cell
  BeamOptions beam;
  std::size_t jobs = 1;
  /// Completed cells are stored here and skipped on rerun; empty disables.
  std::string runDir;
};

std::string gridHeader();
std::string formatGridRow(const GridRow& r);

/// Runs every cell (in parallel worker threads when jobs > 1) and returns
/// the rows in gridCells() order. A failing cell is recorded with its error
/// and the remaining cells still run.
std::vector<GridRow> gridSearch(const GridOptions& opts, const Corpus& train, std::span<const SentencePair> dev,
                                std::span<const SentencePair> test, const Vocab& vocab,
                                std::ostream* progress = nullptr);

// ---------------------------------------------------------------------------
// Back-translation

struct BackTranslation {
  std::vector<SentencePair> pairs;  // (synthetic source, genuine target)
  std::size_t skipped = 0;
};

/// Decodes every monolingual target sentence with the reverse model
/// (reverseTags frame target -> source) and pairs the output with the
/// original sentence under forwardTags. Sentences whose decode fails or
/// hits the length limit without finishing are skipped.
BackTranslation backTranslate(const Model& reverse, std::span<const std::vector<TokenId>> mono,
                              const TagSet& reverseTags, const TagSet& forwardTags, const BeamOptions& beam);

// ---------------------------------------------------------------------------
// Multilingual directions

struct Direction {
  std::string src;
  std::string tgt;

  std::string name() const { return src + "-" + tgt; }
  friend bool operator==(const Direction&, const Direction&) = default;
};

/// "de-en, en-fr" or whitespace separated.
std::vector<Direction> parseDirections(const std::string& text);

/// Distinct languages in order of first appearance.
std::vector<std::string> directionLanguages(std::span<const Direction> dirs);

TLM_END_NAMESPACE
