#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "tlm/common.hpp"

TLM_BEGIN_NAMESPACE

/// Synthetic translation tasks over a small symbol inventory.
///   Copy      target = source
///   Reversal  target = source reversed
///   Mapping   target = source with every symbol renamed by a fixed
///             permutation into a second alphabet ("synthetic translation")
enum class ToyTask { Copy, Reversal, Mapping };

const char* toString(ToyTask t);
ToyTask parseToyTask(const std::string& s);

struct ToyOptions {
  ToyTask task = ToyTask::Reversal;
  std::size_t symbols = 20;
  std::size_t minLen = 4;
  std::size_t maxLen = 8;
  std::uint64_t seed = 1;
};

struct ToySplit {
  std::vector<std::string> src;
  std::vector<std::string> tgt;
};

struct ToyData {
  ToySplit train, dev, test;
};

/// Source sentences are distinct across the three splits. Portable:
/// depends only on the 64-bit Mersenne Twister output sequence.
ToyData makeToyData(const ToyOptions& opts, std::size_t trainSize, std::size_t devSize, std::size_t testSize);

/// Three-language tagged data. Every language has its own alphabet and a
/// distinct permutation of a shared concept inventory; a sentence is a
/// random concept sequence rendered in each language. Languages are named
/// "x", "y", "z" (tokens "x3", "y17", ...). Returns, for each of the six
/// directions, parallel train sentences drawn from one shared pool.
struct MultilingualToy {
  std::vector<std::string> languages;
  /// sentences[l][i] renders concept sequence i in language l.
  std::vector<std::vector<std::string>> sentences;
};

MultilingualToy makeMultilingualToy(std::size_t concepts, std::size_t count, std::size_t minLen, std::size_t maxLen,
                                    std::uint64_t seed);

TLM_END_NAMESPACE
