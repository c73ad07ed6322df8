#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tlm/tensor.hpp"

TLM_BEGIN_NAMESPACE

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
};

/// First and second moment estimates, one pair per parameter.
struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;

  static AdamState zerosLike(std::span<const Parameter> params);
};

/// Inverse-square-root schedule with linear warmup:
///   lr(t) = scale * dModel^-0.5 * min(t^-0.5, t * warmup^-1.5)
/// Peaks at t == warmup.
double warmupInvSqrtLearningRate(std::size_t dModel, std::size_t step, std::size_t warmup, double scale = 1.0);

/// One Adam update with bias correction. `step` is 1-based. Gradients are
/// read from each Parameter's grad field; they are not cleared here.
void adamStep(std::span<Parameter> params, AdamState& state, std::size_t step, double lr,
              const AdamHyper& hyper = {});

TLM_END_NAMESPACE
