#include "tlm/train.hpp"

TLM_BEGIN_NAMESPACE

BackTranslation backTranslate(const Model& reverse, std::span<const std::vector<TokenId>> mono,
                              const TagSet& reverseTags, const TagSet& forwardTags, const BeamOptions& beam) {
  BackTranslation out;
  for (const std::vector<TokenId>& sentence : mono) {
    if (sentence.empty()) {
      ++out.skipped;
      continue;
    }
    try {
      const BeamResult r = translate(reverse, sentence, reverseTags, beam);
      if (r.truncated || r.tokens.empty()) {
        ++out.skipped;
        continue;
      }
      out.pairs.push_back({r.tokens, sentence, forwardTags});
    } catch (const Error&) {
      ++out.skipped;
    }
  }
  return out;
}

TLM_END_NAMESPACE
