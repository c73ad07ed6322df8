#pragma once

#include <span>

#include "tlm/data.hpp"
#include "tlm/model.hpp"
#include "tlm/tensor.hpp"

TLM_BEGIN_NAMESPACE

/// L_TLM = lambda * L_RE + L_MT over one batch.
///
/// L_MT is the weighted mean over target-side loss positions (including all
/// positions of monolingual examples), L_RE over source-side ones. Both use
/// the same label smoothing. `total` is the differentiable L_TLM; when
/// lambda == 0 it is L_MT itself and the reconstruction term never enters the
/// graph (re is still reported, evaluated without a tape node).
struct TlmLoss {
  Var total;
  Var mtVar;
  double mt = 0;
  double re = 0;
  double tlm = 0;
  double lambda = 0;
  std::size_t mtPositions = 0;
  std::size_t rePositions = 0;
};

TlmLoss computeTlmLoss(Tape& tape, const BatchLogits& logits, std::span<const ConcatExample* const> batch,
                       double lambda, double epsilon);

/// Single-example convenience over a logits tensor of shape (J+I) x V.
TlmLoss computeTlmLoss(Tape& tape, Var logits, const ConcatExample& ex, double lambda, double epsilon);

/// Label-smoothed weighted mean NLL evaluated directly on a logits tensor,
/// in double. Same definition as ops::crossEntropy.
double crossEntropyValue(const Tensor& logits, std::span<const TokenId> targets, std::span<const real> weights,
                         double epsilon);

TLM_END_NAMESPACE
