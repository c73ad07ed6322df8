#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tlm/beam.hpp"
#include "tlm/bpe.hpp"
#include "tlm/data.hpp"
#include "tlm/model.hpp"
#include "tlm/train.hpp"
#include "tlm/vocab.hpp"

TLM_BEGIN_NAMESPACE

/// Everything a run needs, read from a flat `key = value` file. Blank lines
/// and text after '#' are ignored; unknown keys and malformed values are
/// errors that carry the line number.
///
/// Corpus paths may contain {src} and {tgt}; with `directions` set they are
/// expanded once per direction (multilingual training), otherwise src_lang
/// and tgt_lang are substituted.
struct RunConfig {
  ModelConfig model;
  TrainOptions train;
  BeamOptions beam;

  std::string trainSrc, trainTgt;
  std::string devSrc, devTgt;
  std::string testSrc, testTgt;
  std::string mono;  // monolingual target-language text
  std::string vocab;  // load if it exists, else build from the training data
  std::string bpe;    // merges file; empty = corpora are already tokenized
  std::string srcLang, tgtLang;
  std::string directions;
  std::string runDir = "run";
  std::size_t jobs = 1;

  static RunConfig parse(const std::string& text, const std::string& origin = "config");
  static RunConfig load(const std::string& path);
  /// Every key with its resolved value; parse(serialize()) == *this.
  std::string serialize() const;
  /// Applies one assignment; throws ConfigError on unknown key or bad value.
  void set(const std::string& key, const std::string& value);

  static std::vector<std::string> keys();
};

/// Corpora and vocabulary resolved from a RunConfig.
struct Experiment {
  Vocab vocab;
  std::optional<BpeModel> bpe;
  Corpus train;
  std::vector<SentencePair> dev;
  std::vector<SentencePair> test;
  std::vector<Direction> directions;  // empty for a single pair
};

/// Reads all configured corpora. A missing required file is a DataError. The
/// vocabulary is loaded from cfg.vocab when that file exists, otherwise built
/// from the training sides (and the monolingual file).
Experiment loadExperiment(const RunConfig& cfg);

/// Raw line -> token ids, applying BPE first when configured.
std::vector<TokenId> encodeLine(const Experiment& ex, const std::string& line);

TLM_END_NAMESPACE
