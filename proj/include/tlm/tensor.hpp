#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "tlm/common.hpp"

TLM_BEGIN_NAMESPACE

using Shape = std::vector<std::size_t>;

std::size_t shapeSize(const Shape& shape);
std::string shapeString(const Shape& shape);

/// Dense row-major tensor. Plain value type; gradients live on the tape or on
/// a Parameter, never inside the tensor itself.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<real> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor fromRows(std::initializer_list<std::initializer_list<real>> rows);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<real> data() { return data_; }
  std::span<const real> data() const { return data_; }
  real* ptr() { return data_.data(); }
  const real* ptr() const { return data_.data(); }

  real& operator[](std::size_t i) { return data_[i]; }
  real operator[](std::size_t i) const { return data_[i]; }
  real& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  real at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  void fill(real v);
  bool allFinite() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<real> data_;
};

/// Learnable weight with its accumulated gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}
  void zeroGrad() { grad.fill(0); }
};

/// Non-owning view of a query-major boolean allow matrix: allow[q * cols + k]
/// is nonzero when query q may attend key k.
struct MaskView {
  std::size_t rows = 0;
  std::size_t cols = 0;
  const std::uint8_t* allow = nullptr;

  bool allowed(std::size_t q, std::size_t k) const { return allow[q * cols + k] != 0; }
};

/// One attention problem inside a packed batch: queries [qBegin, qBegin+qLen)
/// attend keys [kBegin, kBegin+kLen) under `mask` (qLen x kLen).
struct AttentionSegment {
  std::size_t qBegin = 0;
  std::size_t qLen = 0;
  std::size_t kBegin = 0;
  std::size_t kLen = 0;
  MaskView mask;
};

/// Handle to a value recorded on a Tape.
struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
};

/// Reverse-mode tape. Operations append nodes in execution order, so walking
/// the node list backwards is a valid reverse topological order. A tape
/// supports exactly one backward pass; call reset() before the next forward.
///
/// With recordGradients=false the tape only evaluates (inference mode) and
/// backward() is an error.
class Tape {
 public:
  explicit Tape(bool recordGradients = true) : recording_(recordGradients) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Records a leaf for `p`; backward() adds into p.grad.
  Var parameter(Parameter& p);

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  /// Gradient of the last backward() target w.r.t. v (zeros if v did not
  /// influence it).
  const Tensor& grad(Var v) const;
  bool requiresGrad(Var v) const { return nodes_.at(v.id).needsGrad; }

  void backward(Var scalarLoss);
  void reset();

  bool recording() const { return recording_; }
  std::size_t size() const { return nodes_.size(); }

  /// When set (default), every op output and every gradient is checked for
  /// NaN/Inf and a NumericError is thrown on the first offender.
  void setCheckFinite(bool on) { checkFinite_ = on; }

  // Used by op implementations.
  using BackwardFn = std::function<void(Tape&)>;
  Var push(Tensor value, bool needsGrad, BackwardFn backward, const char* opName);
  Tensor& gradMut(Var v);
  bool needsGrad(Var v) const { return nodes_[v.id].needsGrad; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    Parameter* param = nullptr;
    bool needsGrad = false;
    const char* op = "";
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  bool recording_;
  bool backwardDone_ = false;
  bool checkFinite_ = true;
};

namespace ops {

Var matmul(Tape& t, Var a, Var b);
/// a[m x k] * b[n x k]^T
Var matmulNT(Tape& t, Var a, Var b);
Var add(Tape& t, Var a, Var b);
/// a[m x n] + bias[n] broadcast over rows
Var addBias(Tape& t, Var a, Var bias);
Var scale(Tape& t, Var a, real s);
Var relu(Tape& t, Var a);
/// Row-wise layer normalization with learned gain and bias.
Var layerNorm(Tape& t, Var x, Var gain, Var bias, real eps = real(1e-5));
/// Rows of table[V x d] selected by ids.
Var embedding(Tape& t, Var table, std::span<const TokenId> ids);
/// Inverted dropout; identity when p == 0.
Var dropout(Tape& t, Var x, real p, std::mt19937_64& rng);
/// Softmax over keys with blocked keys forced to probability 0.
Var maskedSoftmax(Tape& t, Var logits, MaskView mask);
/// Scaled dot-product multi-head attention over packed segments.
Var multiHeadAttention(Tape& t, Var q, Var k, Var v, std::span<const AttentionSegment> segments,
                       std::size_t numHeads);
/// Weighted mean of label-smoothed NLL over rows with weight > 0. Returns a
/// 1-element tensor; 0 when no row carries weight.
Var crossEntropy(Tape& t, Var logits, std::span<const TokenId> targets, std::span<const real> weights,
                 real epsilon);
/// alpha * a + beta * b for 1-element tensors, evaluated in double.
Var combineScalars(Tape& t, Var a, real alpha, Var b, real beta);
/// sum(x * w) with a constant weight tensor; handy for gradient checks.
Var weightedSum(Tape& t, Var x, const Tensor& w);

}  // namespace ops

// Raw forward kernels shared by ops and by code that needs them without a
// tape.

/// Softmax over the allowed keys of each row; blocked entries are exactly 0
/// whatever their logit. Throws DataError when a row has no allowed key.
void maskedSoftmaxForward(const real* logits, MaskView mask, real* probs);

/// Sinusoidal positional encoding table [maxLen x d].
Tensor sinusoidalPositions(std::size_t maxLen, std::size_t d);

TLM_END_NAMESPACE
