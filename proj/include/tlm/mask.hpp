#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "tlm/tensor.hpp"

TLM_BEGIN_NAMESPACE

enum class SourceMask { Triangular, Full };

const char* toString(SourceMask m);
SourceMask parseSourceMask(const std::string& s);

/// Boolean allow-matrix over a (possibly concatenated) sequence.
///
/// Orientation is query-major: allowed(q, k) answers "may query position q
/// attend to key position k". Positions [0, boundary) are the source side
/// (tags included), [boundary, size) the target side, starting at <t>.
///
/// For the concatenated model the four regions are
///   A  source queries x target keys  -> always blocked
///   B  target queries x target keys  -> causal (k <= q)
///   C  source queries x source keys  -> full, or causal when Triangular
///   D  target queries x source keys  -> always allowed
class AttentionMask {
 public:
  AttentionMask() = default;
  AttentionMask(std::size_t rows, std::size_t cols, std::size_t boundary, SourceMask variant);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  /// J: index of the first target-side position.
  std::size_t boundary() const { return boundary_; }
  SourceMask variant() const { return variant_; }

  bool allowed(std::size_t q, std::size_t k) const { return allow_[q * cols_ + k] != 0; }
  void set(std::size_t q, std::size_t k, bool on) { allow_[q * cols_ + k] = on ? 1 : 0; }

  MaskView view() const { return MaskView{rows_, cols_, allow_.data()}; }

  /// Rows of 0/1 characters; with labels, a '|' column and a '-' row mark
  /// the source/target boundary.
  std::string render(bool labels) const;

  friend bool operator==(const AttentionMask&, const AttentionMask&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::size_t boundary_ = 0;
  SourceMask variant_ = SourceMask::Full;
  std::vector<std::uint8_t> allow_;
};

/// Combined (J+I) x (J+I) mask of the concatenated model.
AttentionMask buildTlmMask(std::size_t sourceLen, std::size_t targetLen, SourceMask variant);

/// Causal mask over a target-only sequence (monolingual LM examples, J = 0).
AttentionMask buildCausalMask(std::size_t len);

struct EncDecMasks {
  AttentionMask encoderSelf;  // J x J, full
  AttentionMask decoderSelf;  // I x I, causal
  AttentionMask cross;        // I x J, full
};

EncDecMasks buildEncDecMasks(std::size_t sourceLen, std::size_t targetLen);

struct MaskViolation {
  std::string block;  // "A", "B", "C", "D" or "empty row"
  std::size_t query = 0;
  std::size_t key = 0;

  std::string describe() const;
};

/// Checks every cell of a concatenated-model mask against the block rules
/// for its declared boundary and variant, plus the non-empty-row rule.
std::vector<MaskViolation> validateMask(const AttentionMask& m);

TLM_END_NAMESPACE
