#include "tlm/optim.hpp"

#include <algorithm>
#include <cmath>

TLM_BEGIN_NAMESPACE

AdamState AdamState::zerosLike(std::span<const Parameter> params) {
  AdamState s;
  for (const Parameter& p : params) {
    s.m.emplace_back(p.value.shape());
    s.v.emplace_back(p.value.shape());
  }
  return s;
}

double warmupInvSqrtLearningRate(std::size_t dModel, std::size_t step, std::size_t warmup, double scale) {
  if (step == 0) throw UsageError("learning-rate step is 1-based");
  if (warmup == 0) throw ConfigError("warmup must be positive");
  const double t = static_cast<double>(step);
  const double w = static_cast<double>(warmup);
  return scale * std::pow(static_cast<double>(dModel), -0.5) * std::min(std::pow(t, -0.5), t * std::pow(w, -1.5));
}

void adamStep(std::span<Parameter> params, AdamState& state, std::size_t step, double lr, const AdamHyper& hyper) {
  if (step == 0) throw UsageError("adam step is 1-based");
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw ShapeError("adam: state does not match parameter list");
  const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = params[i];
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    if (p.grad.shape() != p.value.shape() || m.shape() != p.value.shape() || v.shape() != p.value.shape())
      throw ShapeError("adam: shape mismatch for parameter " + p.name);
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double g = p.grad[j];
      const double mj = hyper.beta1 * m[j] + (1.0 - hyper.beta1) * g;
      const double vj = hyper.beta2 * v[j] + (1.0 - hyper.beta2) * g * g;
      m[j] = static_cast<real>(mj);
      v[j] = static_cast<real>(vj);
      const double update = lr * (mj / bc1) / (std::sqrt(vj / bc2) + hyper.eps);
      p.value[j] = static_cast<real>(p.value[j] - update);
    }
  }
}

TLM_END_NAMESPACE
