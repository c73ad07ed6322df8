#include "tlm/toy.hpp"

#include <algorithm>
#include <random>
#include <set>

TLM_BEGIN_NAMESPACE

const char* toString(ToyTask t) {
  switch (t) {
    case ToyTask::Copy: return "copy";
    case ToyTask::Reversal: return "reversal";
    case ToyTask::Mapping: return "mapping";
  }
  return "?";
}

ToyTask parseToyTask(const std::string& s) {
  if (s == "copy") return ToyTask::Copy;
  if (s == "reversal" || s == "reverse") return ToyTask::Reversal;
  if (s == "mapping") return ToyTask::Mapping;
  throw ConfigError("unknown toy task '" + s + "' (expected copy|reversal|mapping)");
}

namespace {

// Bounded draws straight from the engine output so files are identical on
// every standard library (the <random> distributions are not).
std::size_t draw(std::mt19937_64& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

std::vector<std::size_t> permutation(std::mt19937_64& rng, std::size_t n) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[draw(rng, i)]);
  return p;
}

std::string join(const std::vector<std::string>& toks) {
  std::string out;
  for (const std::string& t : toks) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

std::vector<std::size_t> randomSequence(std::mt19937_64& rng, std::size_t symbols, std::size_t minLen,
                                        std::size_t maxLen) {
  const std::size_t len = minLen + draw(rng, maxLen - minLen + 1);
  std::vector<std::size_t> seq(len);
  for (std::size_t& s : seq) s = draw(rng, symbols);
  return seq;
}

void checkLengths(std::size_t symbols, std::size_t minLen, std::size_t maxLen) {
  if (symbols < 2) throw ConfigError("toy data needs at least two symbols");
  if (minLen == 0 || minLen > maxLen) throw ConfigError("toy lengths must satisfy 1 <= min <= max");
}

}  // namespace

ToyData makeToyData(const ToyOptions& opts, std::size_t trainSize, std::size_t devSize, std::size_t testSize) {
  checkLengths(opts.symbols, opts.minLen, opts.maxLen);
  std::mt19937_64 rng(opts.seed);
  const std::vector<std::size_t> mapping = permutation(rng, opts.symbols);
  std::set<std::vector<std::size_t>> seen;
  ToyData data;
  auto fill = [&](ToySplit& split, std::size_t n) {
    std::size_t attempts = 0;
    while (split.src.size() < n) {
      if (++attempts > 100 * (n + 10)) throw ConfigError("toy task space too small for the requested sizes");
      const std::vector<std::size_t> seq = randomSequence(rng, opts.symbols, opts.minLen, opts.maxLen);
      if (!seen.insert(seq).second) continue;
      std::vector<std::string> src, tgt;
      for (std::size_t s : seq) src.push_back("w" + std::to_string(s));
      switch (opts.task) {
        case ToyTask::Copy:
          tgt = src;
          break;
        case ToyTask::Reversal:
          tgt.assign(src.rbegin(), src.rend());
          break;
        case ToyTask::Mapping:
          for (std::size_t s : seq) tgt.push_back("v" + std::to_string(mapping[s]));
          break;
      }
      split.src.push_back(join(src));
      split.tgt.push_back(join(tgt));
    }
  };
  fill(data.train, trainSize);
  fill(data.dev, devSize);
  fill(data.test, testSize);
  return data;
}

MultilingualToy makeMultilingualToy(std::size_t concepts, std::size_t count, std::size_t minLen, std::size_t maxLen,
                                    std::uint64_t seed) {
  checkLengths(concepts, minLen, maxLen);
  std::mt19937_64 rng(seed);
  MultilingualToy out;
  out.languages = {"x", "y", "z"};
  std::vector<std::vector<std::size_t>> perms;
  for (std::size_t l = 0; l < out.languages.size(); ++l) perms.push_back(permutation(rng, concepts));
  out.sentences.resize(out.languages.size());
  std::set<std::vector<std::size_t>> seen;
  while (out.sentences[0].size() < count) {
    const std::vector<std::size_t> seq = randomSequence(rng, concepts, minLen, maxLen);
    if (!seen.insert(seq).second) continue;
    for (std::size_t l = 0; l < out.languages.size(); ++l) {
      std::vector<std::string> toks;
      for (std::size_t c : seq) toks.push_back(out.languages[l] + std::to_string(perms[l][c]));
      out.sentences[l].push_back(join(toks));
    }
  }
  return out;
}

TLM_END_NAMESPACE
