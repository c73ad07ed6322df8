#include "tlm/mask.hpp"

#include <sstream>

TLM_BEGIN_NAMESPACE

const char* toString(SourceMask m) { return m == SourceMask::Full ? "full" : "triangular"; }

SourceMask parseSourceMask(const std::string& s) {
  if (s == "full") return SourceMask::Full;
  if (s == "triangular") return SourceMask::Triangular;
  throw ConfigError("unknown source mask '" + s + "' (expected full|triangular)");
}

AttentionMask::AttentionMask(std::size_t rows, std::size_t cols, std::size_t boundary, SourceMask variant)
    : rows_(rows), cols_(cols), boundary_(boundary), variant_(variant), allow_(rows * cols, 0) {}

std::string AttentionMask::render(bool labels) const {
  std::ostringstream os;
  auto label = [&](std::size_t i) { return (i < boundary_ ? "s" : "t") + std::to_string(i); };
  const bool split = labels && boundary_ > 0 && boundary_ < cols_;
  if (labels) {
    os << "     ";
    for (std::size_t k = 0; k < cols_; ++k) {
      if (split && k == boundary_) os << " |";
      os << ' ' << (k < boundary_ ? 's' : 't');
    }
    os << '\n';
  }
  for (std::size_t q = 0; q < rows_; ++q) {
    if (split && q == boundary_) {
      os << "     " << std::string(2 * boundary_, '-') << "-+" << std::string(2 * (cols_ - boundary_), '-') << '\n';
    }
    if (labels) {
      std::string l = label(q);
      l.resize(5, ' ');
      os << l;
    }
    for (std::size_t k = 0; k < cols_; ++k) {
      if (split && k == boundary_) os << " |";
      if (labels || k > 0) os << ' ';
      os << (allowed(q, k) ? '1' : '0');
    }
    os << '\n';
  }
  return os.str();
}

AttentionMask buildTlmMask(std::size_t sourceLen, std::size_t targetLen, SourceMask variant) {
  if (sourceLen == 0 || targetLen == 0) throw ShapeError("buildTlmMask: J and I must be positive");
  const std::size_t n = sourceLen + targetLen;
  AttentionMask m(n, n, sourceLen, variant);
  for (std::size_t q = 0; q < n; ++q) {
    for (std::size_t k = 0; k < n; ++k) {
      bool on;
      if (q < sourceLen && k >= sourceLen) on = false;                                   // A
      else if (q >= sourceLen && k >= sourceLen) on = k <= q;                            // B
      else if (q < sourceLen) on = variant == SourceMask::Full || k <= q;                // C
      else on = true;                                                                    // D
      m.set(q, k, on);
    }
  }
  return m;
}

AttentionMask buildCausalMask(std::size_t len) {
  if (len == 0) throw ShapeError("buildCausalMask: empty sequence");
  AttentionMask m(len, len, 0, SourceMask::Triangular);
  for (std::size_t q = 0; q < len; ++q)
    for (std::size_t k = 0; k <= q; ++k) m.set(q, k, true);
  return m;
}

EncDecMasks buildEncDecMasks(std::size_t sourceLen, std::size_t targetLen) {
  if (sourceLen == 0 || targetLen == 0) throw ShapeError("buildEncDecMasks: J and I must be positive");
  EncDecMasks out;
  out.encoderSelf = AttentionMask(sourceLen, sourceLen, sourceLen, SourceMask::Full);
  for (std::size_t q = 0; q < sourceLen; ++q)
    for (std::size_t k = 0; k < sourceLen; ++k) out.encoderSelf.set(q, k, true);
  out.decoderSelf = buildCausalMask(targetLen);
  out.cross = AttentionMask(targetLen, sourceLen, 0, SourceMask::Full);
  for (std::size_t q = 0; q < targetLen; ++q)
    for (std::size_t k = 0; k < sourceLen; ++k) out.cross.set(q, k, true);
  return out;
}

std::string MaskViolation::describe() const {
  std::ostringstream os;
  if (block == "empty row")
    os << "empty row at query " << query;
  else
    os << "block " << block << " violated at (" << query << "," << key << ")";
  return os.str();
}

std::vector<MaskViolation> validateMask(const AttentionMask& m) {
  std::vector<MaskViolation> out;
  const std::size_t j = m.boundary();
  if (m.rows() != m.cols()) {
    out.push_back({"shape", m.rows(), m.cols()});
    return out;
  }
  for (std::size_t q = 0; q < m.rows(); ++q) {
    bool any = false;
    for (std::size_t k = 0; k < m.cols(); ++k) {
      const bool on = m.allowed(q, k);
      any = any || on;
      const char* block;
      bool expected;
      if (q < j && k >= j) {
        block = "A";
        expected = false;
      } else if (q >= j && k >= j) {
        block = "B";
        expected = k <= q;
      } else if (q < j) {
        block = "C";
        expected = m.variant() == SourceMask::Full || k <= q;
      } else {
        block = "D";
        expected = true;
      }
      if (on != expected) out.push_back({block, q, k});
    }
    if (!any) out.push_back({"empty row", q, 0});
  }
  return out;
}

TLM_END_NAMESPACE
