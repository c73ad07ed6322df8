#pragma once

#include <cstddef>
#include <string>

#include "tlm/common.hpp"

TLM_BEGIN_NAMESPACE

enum class ScheduleKind { Const0, Const1, TwoStepLinear, Exponential };

const char* toString(ScheduleKind k);
/// Accepts const0, const1, linear, exp (and the enum spellings).
ScheduleKind parseScheduleKind(const std::string& s);

/// Weight of the reconstruction loss over training steps.
///
///   Const0         0
///   Const1         1
///   TwoStepLinear  start -> knee linearly over [0, tau], then down toward
///                  `floor` with slope (knee - floor) / (postSlopeDivisor * tau)
///   Exponential    knee^(t / tau)
///
/// Both decaying kinds equal `knee` at t == tau.
struct LambdaSchedule {
  ScheduleKind kind = ScheduleKind::Const1;
  std::size_t tau = 0;
  double startValue = 1.0;
  double kneeValue = 0.1;
  double postSlopeDivisor = 9.0;
  double floorValue = 0.01;

  bool decays() const { return kind == ScheduleKind::TwoStepLinear || kind == ScheduleKind::Exponential; }
  void validate() const;
};

double lambdaAt(const LambdaSchedule& s, std::size_t t);

TLM_END_NAMESPACE
