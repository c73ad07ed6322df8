#include "tlm/loss.hpp"

#include <cmath>

TLM_BEGIN_NAMESPACE

double crossEntropyValue(const Tensor& logits, std::span<const TokenId> targets, std::span<const real> weights,
                         double epsilon) {
  const std::size_t n = logits.rows(), v = logits.cols();
  if (targets.size() != n || weights.size() != n) throw ShapeError("crossEntropyValue: length mismatch");
  double total = 0, totalW = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (weights[i] <= 0) continue;
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= v)
      throw DataError("crossEntropyValue: target id out of range");
    const real* z = logits.ptr() + i * v;
    double mx = z[0], sumZ = 0;
    for (std::size_t j = 1; j < v; ++j) mx = std::max(mx, static_cast<double>(z[j]));
    double se = 0;
    for (std::size_t j = 0; j < v; ++j) {
      se += std::exp(z[j] - mx);
      sumZ += z[j];
    }
    const double lse = mx + std::log(se);
    const double loss = (1.0 - epsilon) * (lse - z[targets[i]]) + epsilon * (lse - sumZ / static_cast<double>(v));
    total += weights[i] * loss;
    totalW += weights[i];
  }
  return totalW > 0 ? total / totalW : 0.0;
}

TlmLoss computeTlmLoss(Tape& tape, const BatchLogits& logits, std::span<const ConcatExample* const> batch,
                       double lambda, double epsilon) {
  if (lambda < 0) throw UsageError("lambda must be non-negative");
  const std::size_t rows = logits.example.size();
  if (tape.value(logits.logits).rows() != rows) throw ShapeError("logit rows do not match the row index");
  std::vector<TokenId> targets(rows);
  std::vector<real> mtW(rows, 0), reW(rows, 0);
  TlmLoss out;
  out.lambda = lambda;
  for (std::size_t r = 0; r < rows; ++r) {
    const ConcatExample& ex = *batch[logits.example[r]];
    const std::size_t p = logits.position[r];
    targets[r] = ex.targetIds[p];
    const real w = ex.lossWeights[p];
    if (w <= 0) continue;
    if (p >= ex.boundary) {
      mtW[r] = w;
      ++out.mtPositions;
    } else {
      reW[r] = w;
      ++out.rePositions;
    }
  }
  if (out.mtPositions == 0) throw DataError("batch has no target-side loss positions");

  const real eps = static_cast<real>(epsilon);
  out.mtVar = ops::crossEntropy(tape, logits.logits, targets, mtW, eps);
  out.mt = tape.value(out.mtVar)[0];
  if (lambda == 0 || out.rePositions == 0) {
    out.re = out.rePositions ? crossEntropyValue(tape.value(logits.logits), targets, reW, epsilon) : 0.0;
    out.total = out.mtVar;
    out.tlm = out.mt;
    return out;
  }
  const Var re = ops::crossEntropy(tape, logits.logits, targets, reW, eps);
  out.re = tape.value(re)[0];
  out.total = ops::combineScalars(tape, re, static_cast<real>(lambda), out.mtVar, real(1));
  out.tlm = tape.value(out.total)[0];
  return out;
}

TlmLoss computeTlmLoss(Tape& tape, Var logits, const ConcatExample& ex, double lambda, double epsilon) {
  BatchLogits bl;
  bl.logits = logits;
  for (std::size_t p = 0; p < ex.length(); ++p) {
    bl.example.push_back(0);
    bl.position.push_back(p);
  }
  const ConcatExample* batch[1] = {&ex};
  return computeTlmLoss(tape, bl, batch, lambda, epsilon);
}

TLM_END_NAMESPACE
