#include "tlm/bpe.hpp"

#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "tlm/vocab.hpp"

TLM_BEGIN_NAMESPACE

namespace {

std::vector<std::string> initialSymbols(const std::string& word) {
  std::vector<std::string> syms = utf8Characters(word);
  if (!syms.empty()) syms.back() += BpeModel::kEndOfWord;
  return syms;
}

void applyMerge(std::vector<std::string>& syms, const BpeModel::Merge& m) {
  std::vector<std::string> out;
  out.reserve(syms.size());
  for (std::size_t i = 0; i < syms.size(); ++i) {
    if (i + 1 < syms.size() && syms[i] == m.first && syms[i + 1] == m.second) {
      out.push_back(syms[i] + syms[i + 1]);
      ++i;
    } else {
      out.push_back(std::move(syms[i]));
    }
  }
  syms = std::move(out);
}

bool endsWith(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

std::vector<std::string> utf8Characters(const std::string& s) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < s.size();) {
    const unsigned char c = static_cast<unsigned char>(s[i]);
    std::size_t len = 1;
    if (c >= 0xF0) len = 4;
    else if (c >= 0xE0) len = 3;
    else if (c >= 0xC0) len = 2;
    if (i + len > s.size()) len = 1;
    for (std::size_t j = 1; j < len; ++j)
      if ((static_cast<unsigned char>(s[i + j]) & 0xC0) != 0x80) len = 1;
    out.push_back(s.substr(i, len));
    i += len;
  }
  return out;
}

BpeModel::BpeModel(std::vector<Merge> merges) : merges_(std::move(merges)) {
  for (std::size_t i = 0; i < merges_.size(); ++i) rank_.emplace(merges_[i], i);
}

std::vector<std::string> BpeModel::encodeWord(const std::string& word) const {
  std::vector<std::string> syms = initialSymbols(word);
  while (syms.size() > 1) {
    std::size_t best = std::numeric_limits<std::size_t>::max();
    for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
      auto it = rank_.find({syms[i], syms[i + 1]});
      if (it != rank_.end() && it->second < best) best = it->second;
    }
    if (best == std::numeric_limits<std::size_t>::max()) break;
    applyMerge(syms, merges_[best]);
  }
  const std::string eow = kEndOfWord;
  for (std::size_t i = 0; i < syms.size(); ++i) {
    if (i + 1 < syms.size())
      syms[i] += kContinuation;
    else
      syms[i].erase(syms[i].size() - eow.size());
  }
  return syms;
}

std::vector<std::string> BpeModel::encode(const std::string& sentence) const {
  std::vector<std::string> out;
  for (const std::string& w : splitWhitespace(sentence)) {
    std::vector<std::string> pieces = encodeWord(w);
    out.insert(out.end(), pieces.begin(), pieces.end());
  }
  return out;
}

std::string BpeModel::encodeLine(const std::string& sentence) const {
  std::string out;
  for (const std::string& p : encode(sentence)) {
    if (!out.empty()) out += ' ';
    out += p;
  }
  return out;
}

std::string BpeModel::decode(std::span<const std::string> pieces) {
  std::string out;
  const std::string cont = kContinuation;
  bool glue = false;
  for (const std::string& p : pieces) {
    if (!out.empty() && !glue) out += ' ';
    if (endsWith(p, cont) && p.size() > cont.size()) {
      out.append(p, 0, p.size() - cont.size());
      glue = true;
    } else {
      out += p;
      glue = false;
    }
  }
  return out;
}

std::string BpeModel::decodeLine(const std::string& line) {
  const std::vector<std::string> pieces = splitWhitespace(line);
  return decode(pieces);
}

std::vector<std::string> BpeModel::vocabulary(std::span<const std::string> corpus) const {
  std::set<std::string> seen;
  for (const std::string& line : corpus)
    for (const std::string& p : encode(line)) seen.insert(p);
  return {seen.begin(), seen.end()};
}

void BpeModel::save(std::ostream& out) const {
  out << "bpe-merges " << merges_.size() << '\n';
  for (const Merge& m : merges_) out << m.first << ' ' << m.second << '\n';
}

BpeModel BpeModel::load(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) throw FormatError("empty BPE model file");
  std::istringstream hs(header);
  std::string magic;
  long long n = -1;
  if (!(hs >> magic >> n) || magic != "bpe-merges" || n < 0)
    throw FormatError("BPE model header must be 'bpe-merges <N>'");
  std::vector<Merge> merges;
  std::string line;
  for (long long i = 0; i < n; ++i) {
    if (!std::getline(in, line)) throw FormatError("BPE model truncated at merge " + std::to_string(i + 1));
    const std::vector<std::string> parts = splitWhitespace(line);
    if (parts.size() != 2) throw FormatError("BPE merge line " + std::to_string(i + 2) + " must have two symbols");
    merges.emplace_back(parts[0], parts[1]);
  }
  return BpeModel(std::move(merges));
}

void BpeModel::saveFile(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write BPE model " + path);
  save(out);
}

BpeModel BpeModel::loadFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open BPE model " + path);
  return load(in);
}

BpeModel trainBpe(std::span<const std::string> corpus, std::size_t numMerges) {
  std::map<std::string, std::size_t> wordFreq;
  for (const std::string& line : corpus)
    for (const std::string& w : splitWhitespace(line)) ++wordFreq[w];
  if (wordFreq.empty()) throw DataError("trainBpe: empty corpus");

  struct Entry {
    std::vector<std::string> syms;
    std::size_t freq;
  };
  std::vector<Entry> words;
  words.reserve(wordFreq.size());
  for (const auto& [w, f] : wordFreq) words.push_back({initialSymbols(w), f});

  std::vector<BpeModel::Merge> merges;
  while (merges.size() < numMerges) {
    std::map<BpeModel::Merge, std::size_t> pairCounts;
    for (const Entry& e : words)
      for (std::size_t i = 0; i + 1 < e.syms.size(); ++i) pairCounts[{e.syms[i], e.syms[i + 1]}] += e.freq;
    // std::map iterates in lexicographic order, so keeping the first maximum
    // breaks ties toward the smallest pair.
    const BpeModel::Merge* best = nullptr;
    std::size_t bestCount = 0;
    for (const auto& [pair, count] : pairCounts) {
      if (count > bestCount) {
        best = &pair;
        bestCount = count;
      }
    }
    if (!best || bestCount < 2) break;
    const BpeModel::Merge chosen = *best;
    merges.push_back(chosen);
    for (Entry& e : words) applyMerge(e.syms, chosen);
  }
  return BpeModel(std::move(merges));
}

TLM_END_NAMESPACE
