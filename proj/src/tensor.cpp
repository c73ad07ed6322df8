#include "tlm/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <type_traits>

#include "tlm/kernels.hpp"

TLM_BEGIN_NAMESPACE

std::size_t shapeSize(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shapeString(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(shapeSize(shape_), real(0)) {
  for (std::size_t d : shape_)
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shapeString(shape_));
}

Tensor::Tensor(Shape shape, std::vector<real> data) : shape_(std::move(shape)), data_(std::move(data)) {
  for (std::size_t d : shape_)
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shapeString(shape_));
  if (data_.size() != shapeSize(shape_))
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                     shapeString(shape_));
}

Tensor Tensor::fromRows(std::initializer_list<std::initializer_list<real>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<real> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("ragged rows in Tensor::fromRows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

std::size_t Tensor::rows() const {
  if (shape_.size() != 2) throw ShapeError("expected a matrix, got " + shapeString(shape_));
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (shape_.size() != 2) throw ShapeError("expected a matrix, got " + shapeString(shape_));
  return shape_[1];
}

void Tensor::fill(real v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::allFinite() const {
  // Exponent-bits test; branch-free so the loop vectorizes.
  using Bits = std::conditional_t<sizeof(real) == 4, std::uint32_t, std::uint64_t>;
  constexpr Bits expMask = sizeof(real) == 4 ? Bits(0x7f800000u) : Bits(0x7ff0000000000000ull);
  Bits bad = 0;
  for (real v : data_) {
    const Bits b = std::bit_cast<Bits>(v);
    bad |= Bits((b & expMask) == expMask);
  }
  return bad == 0;
}

// ---------------------------------------------------------------------------
// Tape

Var Tape::push(Tensor value, bool needsGrad, BackwardFn backward, const char* opName) {
  if (checkFinite_ && !value.allFinite())
    throw NumericError(std::string("non-finite value produced by ") + opName);
  if (backwardDone_) throw UsageError("tape already ran backward; reset() before a new forward");
  Node n;
  n.value = std::move(value);
  n.needsGrad = recording_ && needsGrad;
  n.op = opName;
  if (n.needsGrad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::constant(Tensor value) { return push(std::move(value), false, nullptr, "constant"); }

Var Tape::parameter(Parameter& p) {
  Var v = push(p.value, true, nullptr, "parameter");
  if (recording_) nodes_[v.id].param = &p;
  return v;
}

Tensor& Tape::gradMut(Var v) {
  Node& n = nodes_[v.id];
  if (n.grad.size() != n.value.size()) n.grad = Tensor(n.value.shape());
  return n.grad;
}

const Tensor& Tape::grad(Var v) const {
  const Node& n = nodes_.at(v.id);
  if (n.grad.size() != n.value.size()) throw UsageError("no gradient recorded for this value");
  return n.grad;
}

void Tape::backward(Var loss) {
  if (!recording_) throw UsageError("backward on an inference-only tape");
  if (backwardDone_) throw UsageError("second backward without a new forward");
  if (loss.id >= nodes_.size()) throw UsageError("backward target is not on this tape");
  if (nodes_[loss.id].value.size() != 1) throw ShapeError("backward target must be a scalar");
  backwardDone_ = true;

  for (Node& n : nodes_)
    if (n.needsGrad) n.grad = Tensor(n.value.shape());
  if (!nodes_[loss.id].needsGrad) return;
  nodes_[loss.id].grad[0] = 1;

  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needsGrad) continue;
    if (checkFinite_ && !n.grad.allFinite())
      throw NumericError(std::string("non-finite gradient flowing into ") + n.op);
    if (n.backward) n.backward(*this);
    if (n.param) {
      if (n.param->grad.size() != n.value.size()) n.param->grad = Tensor(n.value.shape());
      kernels::active().axpy(1, n.grad.ptr(), n.param->grad.ptr(), n.grad.size());
    }
  }
}

void Tape::reset() {
  nodes_.clear();
  backwardDone_ = false;
}

// ---------------------------------------------------------------------------
// Ops

namespace ops {
namespace {

void requireMatrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw ShapeError(std::string(op) + ": expected matrix, got " + shapeString(t.shape()));
}

}  // namespace

Var matmul(Tape& t, Var a, Var b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  requireMatrix(av, "matmul");
  requireMatrix(bv, "matmul");
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  if (bv.rows() != k)
    throw ShapeError("matmul: inner dimensions differ " + shapeString(av.shape()) + " x " +
                     shapeString(bv.shape()));
  Tensor out({m, n});
  kernels::gemmNN(m, n, k, av.ptr(), k, bv.ptr(), n, out.ptr(), n);
  const bool needs = t.needsGrad(a) || t.needsGrad(b);
  Var self{t.size()};
  return t.push(std::move(out), needs, [a, b, self, m, n, k](Tape& tp) {
    const Tensor& dc = tp.grad(self);
    if (tp.needsGrad(a))
      kernels::gemmNT(m, k, n, dc.ptr(), n, tp.value(b).ptr(), n, tp.gradMut(a).ptr(), k);
    if (tp.needsGrad(b))
      kernels::gemmTN(k, n, m, tp.value(a).ptr(), k, dc.ptr(), n, tp.gradMut(b).ptr(), n);
  }, "matmul");
}

Var matmulNT(Tape& t, Var a, Var b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  requireMatrix(av, "matmulNT");
  requireMatrix(bv, "matmulNT");
  const std::size_t m = av.rows(), k = av.cols(), n = bv.rows();
  if (bv.cols() != k)
    throw ShapeError("matmulNT: inner dimensions differ " + shapeString(av.shape()) + " x " +
                     shapeString(bv.shape()) + "^T");
  Tensor out({m, n});
  kernels::gemmNT(m, n, k, av.ptr(), k, bv.ptr(), k, out.ptr(), n);
  const bool needs = t.needsGrad(a) || t.needsGrad(b);
  Var self{t.size()};
  return t.push(std::move(out), needs, [a, b, self, m, n, k](Tape& tp) {
    const Tensor& dc = tp.grad(self);
    if (tp.needsGrad(a))
      kernels::gemmNN(m, k, n, dc.ptr(), n, tp.value(b).ptr(), k, tp.gradMut(a).ptr(), k);
    if (tp.needsGrad(b))
      kernels::gemmTN(n, k, m, dc.ptr(), n, tp.value(a).ptr(), k, tp.gradMut(b).ptr(), k);
  }, "matmulNT");
}

Var add(Tape& t, Var a, Var b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  if (av.shape() != bv.shape())
    throw ShapeError("add: shapes differ " + shapeString(av.shape()) + " vs " + shapeString(bv.shape()));
  Tensor out = av;
  kernels::active().axpy(1, bv.ptr(), out.ptr(), out.size());
  Var self{t.size()};
  return t.push(std::move(out), t.needsGrad(a) || t.needsGrad(b), [a, b, self](Tape& tp) {
    const Tensor& g = tp.grad(self);
    for (Var x : {a, b})
      if (tp.needsGrad(x)) kernels::active().axpy(1, g.ptr(), tp.gradMut(x).ptr(), g.size());
  }, "add");
}

Var addBias(Tape& t, Var a, Var bias) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(bias);
  requireMatrix(av, "addBias");
  const std::size_t m = av.rows(), n = av.cols();
  if (bv.size() != n) throw ShapeError("addBias: bias length does not match columns");
  Tensor out = av;
  for (std::size_t i = 0; i < m; ++i) kernels::active().axpy(1, bv.ptr(), out.ptr() + i * n, n);
  Var self{t.size()};
  return t.push(std::move(out), t.needsGrad(a) || t.needsGrad(bias), [a, bias, self, m, n](Tape& tp) {
    const Tensor& g = tp.grad(self);
    if (tp.needsGrad(a)) kernels::active().axpy(1, g.ptr(), tp.gradMut(a).ptr(), g.size());
    if (tp.needsGrad(bias)) {
      real* db = tp.gradMut(bias).ptr();
      for (std::size_t i = 0; i < m; ++i) kernels::active().axpy(1, g.ptr() + i * n, db, n);
    }
  }, "addBias");
}

Var scale(Tape& t, Var a, real s) {
  Tensor out = t.value(a);
  kernels::active().scale(s, out.ptr(), out.size());
  Var self{t.size()};
  return t.push(std::move(out), t.needsGrad(a), [a, self, s](Tape& tp) {
    const Tensor& g = tp.grad(self);
    kernels::active().axpy(s, g.ptr(), tp.gradMut(a).ptr(), g.size());
  }, "scale");
}

Var relu(Tape& t, Var a) {
  Tensor out = t.value(a);
  for (real& v : out.data()) v = v > 0 ? v : real(0);
  Var self{t.size()};
  return t.push(std::move(out), t.needsGrad(a), [a, self](Tape& tp) {
    const Tensor& g = tp.grad(self);
    const Tensor& y = tp.value(self);
    Tensor& da = tp.gradMut(a);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (y[i] > 0) da[i] += g[i];
  }, "relu");
}

Var layerNorm(Tape& t, Var x, Var gain, Var bias, real eps) {
  const Tensor& xv = t.value(x);
  requireMatrix(xv, "layerNorm");
  const std::size_t m = xv.rows(), n = xv.cols();
  const Tensor& gv = t.value(gain);
  const Tensor& bv = t.value(bias);
  if (gv.size() != n || bv.size() != n) throw ShapeError("layerNorm: gain/bias length mismatch");

  Tensor out({m, n});
  std::vector<real> normed(m * n);
  std::vector<real> rstd(m);
  for (std::size_t i = 0; i < m; ++i) {
    const real* row = xv.ptr() + i * n;
    double mean = 0;
    for (std::size_t j = 0; j < n; ++j) mean += row[j];
    mean /= static_cast<double>(n);
    double var = 0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<double>(n);
    const double rs = 1.0 / std::sqrt(var + eps);
    rstd[i] = static_cast<real>(rs);
    for (std::size_t j = 0; j < n; ++j) {
      const real xhat = static_cast<real>((row[j] - mean) * rs);
      normed[i * n + j] = xhat;
      out.ptr()[i * n + j] = xhat * gv[j] + bv[j];
    }
  }
  const bool needs = t.needsGrad(x) || t.needsGrad(gain) || t.needsGrad(bias);
  Var self{t.size()};
  return t.push(std::move(out), needs,
                [x, gain, bias, self, m, n, normed = std::move(normed), rstd = std::move(rstd)](Tape& tp) {
    const Tensor& g = tp.grad(self);
    const Tensor& gv = tp.value(gain);
    if (tp.needsGrad(gain)) {
      Tensor& dg = tp.gradMut(gain);
      for (std::size_t i = 0; i < m; ++i) kernels::active().fmaVec(g.ptr() + i * n, normed.data() + i * n, dg.ptr(), n);
    }
    if (tp.needsGrad(bias)) {
      Tensor& db = tp.gradMut(bias);
      for (std::size_t i = 0; i < m; ++i) kernels::active().axpy(1, g.ptr() + i * n, db.ptr(), n);
    }
    if (tp.needsGrad(x)) {
      Tensor& dx = tp.gradMut(x);
      std::vector<real> dxhat(n);
      for (std::size_t i = 0; i < m; ++i) {
        const real* gi = g.ptr() + i * n;
        const real* xh = normed.data() + i * n;
        double meanD = 0, meanDX = 0;
        for (std::size_t j = 0; j < n; ++j) {
          dxhat[j] = gi[j] * gv[j];
          meanD += dxhat[j];
          meanDX += static_cast<double>(dxhat[j]) * xh[j];
        }
        meanD /= static_cast<double>(n);
        meanDX /= static_cast<double>(n);
        real* out = dx.ptr() + i * n;
        for (std::size_t j = 0; j < n; ++j)
          out[j] += static_cast<real>(rstd[i] * (dxhat[j] - meanD - xh[j] * meanDX));
      }
    }
  }, "layerNorm");
}

Var embedding(Tape& t, Var table, std::span<const TokenId> ids) {
  const Tensor& tv = t.value(table);
  requireMatrix(tv, "embedding");
  const std::size_t vocab = tv.rows(), d = tv.cols();
  if (ids.empty()) throw ShapeError("embedding: empty id list");
  Tensor out({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab)
      throw DataError("embedding: token id " + std::to_string(ids[i]) + " outside vocabulary of " +
                      std::to_string(vocab));
    std::copy_n(tv.ptr() + ids[i] * d, d, out.ptr() + i * d);
  }
  Var self{t.size()};
  return t.push(std::move(out), t.needsGrad(table),
                [table, self, d, idv = std::vector<TokenId>(ids.begin(), ids.end())](Tape& tp) {
    const Tensor& g = tp.grad(self);
    Tensor& dt = tp.gradMut(table);
    for (std::size_t i = 0; i < idv.size(); ++i)
      kernels::active().axpy(1, g.ptr() + i * d, dt.ptr() + idv[i] * d, d);
  }, "embedding");
}

Var dropout(Tape& t, Var x, real p, std::mt19937_64& rng) {
  if (p <= 0) return x;
  if (p >= 1) throw UsageError("dropout probability must be < 1");
  Tensor out = t.value(x);
  std::vector<real> keep(out.size());
  const real s = real(1) / (real(1) - p);
  // Two 32-bit draws per engine call, compared against an integer threshold.
  const auto threshold = static_cast<std::uint64_t>(static_cast<double>(p) * 4294967296.0);
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (i % 2 == 0) bits = rng();
    const std::uint64_t r = (i % 2 == 0) ? (bits & 0xffffffffu) : (bits >> 32);
    keep[i] = r < threshold ? real(0) : s;
    out[i] *= keep[i];
  }
  Var self{t.size()};
  return t.push(std::move(out), t.needsGrad(x), [x, self, keep = std::move(keep)](Tape& tp) {
    const Tensor& g = tp.grad(self);
    kernels::active().fmaVec(g.ptr(), keep.data(), tp.gradMut(x).ptr(), g.size());
  }, "dropout");
}

Var maskedSoftmax(Tape& t, Var logits, MaskView mask) {
  const Tensor& lv = t.value(logits);
  requireMatrix(lv, "maskedSoftmax");
  if (lv.rows() != mask.rows || lv.cols() != mask.cols)
    throw ShapeError("maskedSoftmax: mask is " + std::to_string(mask.rows) + "x" + std::to_string(mask.cols) +
                     ", logits are " + shapeString(lv.shape()));
  Tensor out(lv.shape());
  maskedSoftmaxForward(lv.ptr(), mask, out.ptr());
  const std::size_t q = mask.rows, k = mask.cols;
  Var self{t.size()};
  return t.push(std::move(out), t.needsGrad(logits), [logits, self, q, k](Tape& tp) {
    const Tensor& g = tp.grad(self);
    const Tensor& p = tp.value(self);
    Tensor& dx = tp.gradMut(logits);
    for (std::size_t i = 0; i < q; ++i) {
      const real* pi = p.ptr() + i * k;
      const real* gi = g.ptr() + i * k;
      const real dotpg = kernels::active().dot(pi, gi, k);
      real* di = dx.ptr() + i * k;
      for (std::size_t j = 0; j < k; ++j) di[j] += pi[j] * (gi[j] - dotpg);
    }
  }, "maskedSoftmax");
}

Var multiHeadAttention(Tape& t, Var q, Var k, Var v, std::span<const AttentionSegment> segments,
                       std::size_t numHeads) {
  const Tensor& qv = t.value(q);
  const Tensor& kv = t.value(k);
  const Tensor& vv = t.value(v);
  requireMatrix(qv, "attention");
  requireMatrix(kv, "attention");
  requireMatrix(vv, "attention");
  const std::size_t d = qv.cols();
  if (kv.cols() != d || vv.cols() != d || kv.rows() != vv.rows())
    throw ShapeError("attention: q/k/v shapes disagree");
  if (numHeads == 0 || d % numHeads != 0) throw ShapeError("attention: model width not divisible by heads");
  const std::size_t dk = d / numHeads;
  const real invSqrt = real(1) / std::sqrt(static_cast<real>(dk));

  std::size_t probsSize = 0;
  for (const AttentionSegment& s : segments) {
    if (s.qBegin + s.qLen > qv.rows() || s.kBegin + s.kLen > kv.rows())
      throw ShapeError("attention: segment exceeds packed batch");
    if (s.mask.rows != s.qLen || s.mask.cols != s.kLen) throw ShapeError("attention: segment mask size mismatch");
    probsSize += s.qLen * s.kLen * numHeads;
  }

  const kernels::KernelTable& kt = kernels::active();
  Tensor out({qv.rows(), d});
  std::vector<real> probs(probsSize);
  std::vector<real> scores;
  std::size_t off = 0;
  for (const AttentionSegment& s : segments) {
    scores.assign(s.qLen * s.kLen, real(0));
    for (std::size_t h = 0; h < numHeads; ++h) {
      std::fill(scores.begin(), scores.end(), real(0));
      kernels::gemmNT(s.qLen, s.kLen, dk, qv.ptr() + s.qBegin * d + h * dk, d, kv.ptr() + s.kBegin * d + h * dk, d,
                      scores.data(), s.kLen);
      kt.scale(invSqrt, scores.data(), scores.size());
      real* p = probs.data() + off;
      maskedSoftmaxForward(scores.data(), s.mask, p);
      kernels::gemmNN(s.qLen, dk, s.kLen, p, s.kLen, vv.ptr() + s.kBegin * d + h * dk, d,
                      out.ptr() + s.qBegin * d + h * dk, d);
      off += s.qLen * s.kLen;
    }
  }

  const bool needs = t.needsGrad(q) || t.needsGrad(k) || t.needsGrad(v);
  Var self{t.size()};
  return t.push(std::move(out), needs,
                [q, k, v, self, d, dk, numHeads, invSqrt, probs = std::move(probs),
                 segs = std::vector<AttentionSegment>(segments.begin(), segments.end())](Tape& tp) {
    const kernels::KernelTable& kt = kernels::active();
    const Tensor& g = tp.grad(self);
    const real* qp = tp.value(q).ptr();
    const real* kp = tp.value(k).ptr();
    const real* vp = tp.value(v).ptr();
    real* dq = tp.needsGrad(q) ? tp.gradMut(q).ptr() : nullptr;
    real* dkp = tp.needsGrad(k) ? tp.gradMut(k).ptr() : nullptr;
    real* dv = tp.needsGrad(v) ? tp.gradMut(v).ptr() : nullptr;
    std::vector<real> dp;
    std::size_t off = 0;
    for (const AttentionSegment& s : segs) {
      dp.resize(s.qLen * s.kLen);
      for (std::size_t h = 0; h < numHeads; ++h) {
        const real* p = probs.data() + off;
        const real* go = g.ptr() + s.qBegin * d + h * dk;
        const std::size_t kOff = s.kBegin * d + h * dk;
        const std::size_t qOff = s.qBegin * d + h * dk;
        if (dv) kernels::gemmTN(s.kLen, dk, s.qLen, p, s.kLen, go, d, dv + kOff, d);
        if (dq || dkp) {
          std::fill(dp.begin(), dp.end(), real(0));
          kernels::gemmNT(s.qLen, s.kLen, dk, go, d, vp + kOff, d, dp.data(), s.kLen);
          for (std::size_t i = 0; i < s.qLen; ++i) {
            real* row = dp.data() + i * s.kLen;
            const real* prow = p + i * s.kLen;
            const real c = kt.dot(prow, row, s.kLen);
            for (std::size_t j = 0; j < s.kLen; ++j) row[j] = prow[j] * (row[j] - c) * invSqrt;
          }
          if (dq) kernels::gemmNN(s.qLen, dk, s.kLen, dp.data(), s.kLen, kp + kOff, d, dq + qOff, d);
          if (dkp) kernels::gemmTN(s.kLen, dk, s.qLen, dp.data(), s.kLen, qp + qOff, d, dkp + kOff, d);
        }
        off += s.qLen * s.kLen;
      }
    }
  }, "attention");
}

Var crossEntropy(Tape& t, Var logits, std::span<const TokenId> targets, std::span<const real> weights,
                 real epsilon) {
  const Tensor& lv = t.value(logits);
  requireMatrix(lv, "crossEntropy");
  const std::size_t n = lv.rows(), vocab = lv.cols();
  if (targets.size() != n || weights.size() != n) throw ShapeError("crossEntropy: targets/weights length mismatch");
  if (epsilon < 0 || epsilon >= 1) throw UsageError("crossEntropy: epsilon must be in [0,1)");

  double totalW = 0, totalLoss = 0;
  std::vector<std::size_t> rows;
  std::vector<real> probs;
  for (std::size_t i = 0; i < n; ++i) {
    if (weights[i] < 0) throw DataError("crossEntropy: negative weight");
    if (weights[i] == 0) continue;
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= vocab)
      throw DataError("crossEntropy: target id " + std::to_string(targets[i]) + " out of range [0," +
                      std::to_string(vocab) + ")");
    const real* z = lv.ptr() + i * vocab;
    const double mx = kernels::active().maxValue(z, vocab);
    double se = 0, sumZ = 0;
    for (std::size_t j = 0; j < vocab; ++j) {
      se += std::exp(z[j] - mx);
      sumZ += z[j];
    }
    const double lse = mx + std::log(se);
    const double nllTarget = lse - z[targets[i]];
    const double nllUniform = lse - sumZ / static_cast<double>(vocab);
    const double loss = (1.0 - epsilon) * nllTarget + epsilon * nllUniform;
    totalLoss += weights[i] * loss;
    totalW += weights[i];
    rows.push_back(i);
    for (std::size_t j = 0; j < vocab; ++j) probs.push_back(static_cast<real>(std::exp(z[j] - lse)));
  }
  Tensor out({1});
  out[0] = totalW > 0 ? static_cast<real>(totalLoss / totalW) : real(0);
  Var self{t.size()};
  return t.push(std::move(out), t.needsGrad(logits) && totalW > 0,
                [logits, self, vocab, epsilon, totalW, rows = std::move(rows), probs = std::move(probs),
                 tg = std::vector<TokenId>(targets.begin(), targets.end()),
                 w = std::vector<real>(weights.begin(), weights.end())](Tape& tp) {
    const double g = tp.grad(self)[0];
    Tensor& dz = tp.gradMut(logits);
    const double uniform = epsilon / static_cast<double>(vocab);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const std::size_t i = rows[r];
      const double c = g * w[i] / totalW;
      real* out = dz.ptr() + i * vocab;
      const real* p = probs.data() + r * vocab;
      for (std::size_t j = 0; j < vocab; ++j) {
        double qj = uniform + (static_cast<TokenId>(j) == tg[i] ? 1.0 - epsilon : 0.0);
        out[j] += static_cast<real>(c * (p[j] - qj));
      }
    }
  }, "crossEntropy");
}

Var combineScalars(Tape& t, Var a, real alpha, Var b, real beta) {
  if (t.value(a).size() != 1 || t.value(b).size() != 1) throw ShapeError("combineScalars: operands must be scalars");
  Tensor out({1});
  out[0] = static_cast<real>(static_cast<double>(alpha) * t.value(a)[0] + static_cast<double>(beta) * t.value(b)[0]);
  Var self{t.size()};
  return t.push(std::move(out), t.needsGrad(a) || t.needsGrad(b), [a, b, alpha, beta, self](Tape& tp) {
    const real g = tp.grad(self)[0];
    if (tp.needsGrad(a)) tp.gradMut(a)[0] += alpha * g;
    if (tp.needsGrad(b)) tp.gradMut(b)[0] += beta * g;
  }, "combineScalars");
}

Var weightedSum(Tape& t, Var x, const Tensor& w) {
  const Tensor& xv = t.value(x);
  if (xv.size() != w.size()) throw ShapeError("weightedSum: weight size mismatch");
  double acc = 0;
  for (std::size_t i = 0; i < xv.size(); ++i) acc += static_cast<double>(xv[i]) * w[i];
  Tensor out({1});
  out[0] = static_cast<real>(acc);
  Var self{t.size()};
  return t.push(std::move(out), t.needsGrad(x), [x, self, w](Tape& tp) {
    kernels::active().axpy(tp.grad(self)[0], w.ptr(), tp.gradMut(x).ptr(), w.size());
  }, "weightedSum");
}

}  // namespace ops

void maskedSoftmaxForward(const real* logits, MaskView mask, real* probs) {
  const std::size_t k = mask.cols;
  for (std::size_t i = 0; i < mask.rows; ++i) {
    const real* z = logits + i * k;
    real* p = probs + i * k;
    double mx = -std::numeric_limits<double>::infinity();
    bool any = false;
    // Blocked keys get exactly zero weight, whatever their logit.
    for (std::size_t j = 0; j < k; ++j) {
      if (!mask.allowed(i, j)) continue;
      any = true;
      mx = std::max(mx, static_cast<double>(z[j]));
    }
    if (!any) throw DataError("maskedSoftmax: query row " + std::to_string(i) + " has no allowed key");
    double sum = 0;
    for (std::size_t j = 0; j < k; ++j) {
      if (!mask.allowed(i, j)) {
        p[j] = 0;
        continue;
      }
      const double e = std::exp(z[j] - mx);
      p[j] = static_cast<real>(e);
      sum += e;
    }
    const double inv = 1.0 / sum;
    for (std::size_t j = 0; j < k; ++j) p[j] = static_cast<real>(p[j] * inv);
  }
}

Tensor sinusoidalPositions(std::size_t maxLen, std::size_t d) {
  Tensor pe({maxLen, d});
  for (std::size_t pos = 0; pos < maxLen; ++pos) {
    for (std::size_t i = 0; i < d; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(d));
      pe.at(pos, i) = static_cast<real>(std::sin(pos * freq));
      if (i + 1 < d) pe.at(pos, i + 1) = static_cast<real>(std::cos(pos * freq));
    }
  }
  return pe;
}

TLM_END_NAMESPACE
