#include "tlm/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

TLM_BEGIN_NAMESPACE

namespace {

const char* const kSpecials[special::kCount] = {"<s>", "</s>", "<t>", "</t>", "<m>", "<unk>", "<pad>"};

std::vector<std::string> languageTags(const std::string& lang) {
  return {"<s:" + lang + ">", "</s:" + lang + ">", "<t:" + lang + ">", "</t:" + lang + ">"};
}

bool looksReserved(const std::string& tok) {
  for (const char* s : kSpecials)
    if (tok == s) return true;
  return tok.size() > 4 && tok.front() == '<' && tok.back() == '>' &&
         (tok.rfind("<s:", 0) == 0 || tok.rfind("</s:", 0) == 0 || tok.rfind("<t:", 0) == 0 ||
          tok.rfind("</t:", 0) == 0);
}

}  // namespace

std::vector<std::string> splitWhitespace(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream is(line);
  std::string w;
  while (is >> w) out.push_back(w);
  return out;
}

Vocab::Vocab() {
  for (const char* s : kSpecials) add(s);
}

void Vocab::add(const std::string& tok) {
  if (index_.count(tok)) return;
  index_.emplace(tok, static_cast<TokenId>(tokens_.size()));
  tokens_.push_back(tok);
}

Vocab Vocab::build(std::span<const std::string> tokens, std::span<const std::string> languages) {
  Vocab v;
  for (const std::string& lang : languages) {
    if (lang.empty() || lang.find_first_of(" \t\n<>") != std::string::npos)
      throw ConfigError("invalid language name '" + lang + "'");
    if (std::find(v.languages_.begin(), v.languages_.end(), lang) != v.languages_.end())
      throw ConfigError("duplicate language '" + lang + "'");
    v.languages_.push_back(lang);
    for (const std::string& t : languageTags(lang)) v.add(t);
  }
  for (const std::string& t : tokens) {
    if (t.empty() || t.find_first_of(" \t\r\n") != std::string::npos)
      throw DataError("vocabulary tokens must be non-empty and contain no whitespace");
    if (looksReserved(t)) continue;
    v.add(t);
  }
  return v;
}

Vocab Vocab::fromCorpus(std::span<const std::string> lines, std::span<const std::string> languages) {
  std::map<std::string, std::size_t> counts;
  for (const std::string& line : lines)
    for (const std::string& w : splitWhitespace(line)) ++counts[w];
  std::vector<std::pair<std::string, std::size_t>> ordered(counts.begin(), counts.end());
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> toks;
  toks.reserve(ordered.size());
  for (auto& [t, c] : ordered) toks.push_back(t);
  return build(toks, languages);
}

Vocab Vocab::load(std::istream& in) {
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  if (lines.size() < special::kCount) throw FormatError("vocab file shorter than the reserved block");
  for (std::size_t i = 0; i < special::kCount; ++i)
    if (lines[i] != kSpecials[i])
      throw FormatError("vocab line " + std::to_string(i + 1) + ": expected reserved token " + kSpecials[i]);
  std::vector<std::string> langs;
  std::size_t pos = special::kCount;
  while (pos + 4 <= lines.size() && lines[pos].rfind("<s:", 0) == 0 && lines[pos].back() == '>') {
    const std::string lang = lines[pos].substr(3, lines[pos].size() - 4);
    if (std::vector<std::string>(lines.begin() + pos, lines.begin() + pos + 4) != languageTags(lang))
      throw FormatError("vocab line " + std::to_string(pos + 1) + ": incomplete direction tag block");
    langs.push_back(lang);
    pos += 4;
  }
  std::vector<std::string> rest(lines.begin() + pos, lines.end());
  Vocab v = build(rest, langs);
  if (v.size() != lines.size()) throw FormatError("vocab file contains duplicate or reserved tokens");
  return v;
}

Vocab Vocab::loadFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open vocab file " + path);
  return load(in);
}

void Vocab::save(std::ostream& out) const {
  for (const std::string& t : tokens_) out << t << '\n';
}

void Vocab::saveFile(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write vocab file " + path);
  save(out);
}

TokenId Vocab::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? special::kUnk : it->second;
}

const std::string& Vocab::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
    throw DataError("token id " + std::to_string(id) + " outside vocabulary");
  return tokens_[id];
}

TagSet Vocab::tags(const std::string& srcLang, const std::string& tgtLang) const {
  if (srcLang.empty() && tgtLang.empty()) return TagSet{};
  auto need = [&](const std::string& t) {
    auto it = index_.find(t);
    if (it == index_.end()) throw ConfigError("no direction tag " + t + " in vocabulary");
    return it->second;
  };
  return TagSet{need("<s:" + srcLang + ">"), need("</s:" + srcLang + ">"), need("<t:" + tgtLang + ">"),
                need("</t:" + tgtLang + ">")};
}

std::vector<TokenId> Vocab::encode(const std::string& line) const {
  std::vector<TokenId> ids;
  for (const std::string& w : splitWhitespace(line)) ids.push_back(id(w));
  return ids;
}

std::string Vocab::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId i : ids) {
    if (isReserved(i) && i != special::kUnk) continue;
    if (!out.empty()) out += ' ';
    out += token(i);
  }
  return out;
}

TLM_END_NAMESPACE
