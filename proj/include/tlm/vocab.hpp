#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "tlm/common.hpp"

TLM_BEGIN_NAMESPACE

/// Reserved ids, always the lowest in every vocabulary, in this order.
namespace special {
inline constexpr TokenId kSrcBegin = 0;  // <s>
inline constexpr TokenId kSrcEnd = 1;    // </s>
inline constexpr TokenId kTgtBegin = 2;  // <t>
inline constexpr TokenId kTgtEnd = 3;    // </t>
inline constexpr TokenId kMask = 4;      // <m>
inline constexpr TokenId kUnk = 5;       // <unk>
inline constexpr TokenId kPad = 6;       // <pad>
inline constexpr std::size_t kCount = 7;
}  // namespace special

/// The four tag ids framing one concatenated pair: <s> f </s> <t> e </t>.
struct TagSet {
  TokenId srcBegin = special::kSrcBegin;
  TokenId srcEnd = special::kSrcEnd;
  TokenId tgtBegin = special::kTgtBegin;
  TokenId tgtEnd = special::kTgtEnd;

  friend bool operator==(const TagSet&, const TagSet&) = default;
};

/// Token <-> id bijection. Layout: the 7 specials, then four direction tags
/// per language (<s:L> </s:L> <t:L> </t:L>, languages in declaration order),
/// then ordinary tokens.
class Vocab {
 public:
  Vocab();

  /// Builds a vocabulary over `tokens` (duplicates and reserved spellings
  /// are dropped; order otherwise preserved).
  static Vocab build(std::span<const std::string> tokens, std::span<const std::string> languages = {});

  /// Counts whitespace tokens over the given lines and orders them by
  /// descending frequency, ties by byte order.
  static Vocab fromCorpus(std::span<const std::string> lines, std::span<const std::string> languages = {});

  static Vocab load(std::istream& in);
  static Vocab loadFile(const std::string& path);
  void save(std::ostream& out) const;
  void saveFile(const std::string& path) const;

  std::size_t size() const { return tokens_.size(); }
  /// Specials plus language tags.
  std::size_t numReserved() const { return special::kCount + 4 * languages_.size(); }
  bool isReserved(TokenId id) const { return id >= 0 && static_cast<std::size_t>(id) < numReserved(); }

  /// <unk> for unknown strings.
  TokenId id(const std::string& token) const;
  bool contains(const std::string& token) const { return index_.count(token) != 0; }
  const std::string& token(TokenId id) const;

  const std::vector<std::string>& languages() const { return languages_; }
  /// Generic tags when both language names are empty.
  TagSet tags(const std::string& srcLang = "", const std::string& tgtLang = "") const;

  std::vector<TokenId> encode(const std::string& line) const;
  /// Tokens joined by single spaces; reserved ids are skipped.
  std::string decode(std::span<const TokenId> ids) const;

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.tokens_ == b.tokens_; }

 private:
  void add(const std::string& tok);

  std::vector<std::string> tokens_;
  std::vector<std::string> languages_;
  std::unordered_map<std::string, TokenId> index_;
};

std::vector<std::string> splitWhitespace(const std::string& line);

TLM_END_NAMESPACE
