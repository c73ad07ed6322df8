#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tlm/common.hpp"

TLM_BEGIN_NAMESPACE

/// Byte-pair-encoding subword model.
///
/// Words are split into UTF-8 characters with the end-of-word marker "</w>"
/// glued to the last one, then merges are applied greedily by rank. Encoded
/// output follows the usual "@@" continuation convention: every piece but the
/// last of a word carries a trailing "@@".
class BpeModel {
 public:
  using Merge = std::pair<std::string, std::string>;
  static constexpr const char* kEndOfWord = "</w>";
  static constexpr const char* kContinuation = "@@";

  BpeModel() = default;
  explicit BpeModel(std::vector<Merge> merges);

  const std::vector<Merge>& merges() const { return merges_; }

  std::vector<std::string> encodeWord(const std::string& word) const;
  std::vector<std::string> encode(const std::string& sentence) const;
  std::string encodeLine(const std::string& sentence) const;

  /// Inverse of encode for well-formed piece sequences.
  static std::string decode(std::span<const std::string> pieces);
  static std::string decodeLine(const std::string& line);

  /// Symbols produced by encoding the training corpus (in "@@" form), sorted.
  std::vector<std::string> vocabulary(std::span<const std::string> corpus) const;

  /// File format: "bpe-merges <N>" header then N lines "left right".
  void save(std::ostream& out) const;
  static BpeModel load(std::istream& in);
  void saveFile(const std::string& path) const;
  static BpeModel loadFile(const std::string& path);

 private:
  std::vector<Merge> merges_;
  std::map<Merge, std::size_t> rank_;
};

/// Learns up to `numMerges` merges by repeatedly joining the most frequent
/// adjacent symbol pair (ties: lexicographically smallest pair). Stops early
/// once no pair occurs at least twice. Throws DataError on an empty corpus.
BpeModel trainBpe(std::span<const std::string> corpus, std::size_t numMerges);

/// Splits a UTF-8 string into code points (invalid bytes become single units).
std::vector<std::string> utf8Characters(const std::string& s);

TLM_END_NAMESPACE
