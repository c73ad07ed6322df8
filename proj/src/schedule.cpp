#include "tlm/schedule.hpp"

#include <algorithm>
#include <cmath>

TLM_BEGIN_NAMESPACE

const char* toString(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::Const0: return "const0";
    case ScheduleKind::Const1: return "const1";
    case ScheduleKind::TwoStepLinear: return "linear";
    case ScheduleKind::Exponential: return "exp";
  }
  return "?";
}

ScheduleKind parseScheduleKind(const std::string& s) {
  if (s == "const0" || s == "Const0") return ScheduleKind::Const0;
  if (s == "const1" || s == "Const1") return ScheduleKind::Const1;
  if (s == "linear" || s == "TwoStepLinear") return ScheduleKind::TwoStepLinear;
  if (s == "exp" || s == "Exponential") return ScheduleKind::Exponential;
  throw ConfigError("unknown lambda schedule '" + s + "' (expected const0|const1|linear|exp)");
}

void LambdaSchedule::validate() const {
  if (decays() && tau == 0) throw ConfigError("lambda schedule '" + std::string(toString(kind)) + "' needs tau > 0");
  if (kind == ScheduleKind::TwoStepLinear) {
    if (postSlopeDivisor <= 0) throw ConfigError("schedule post-slope divisor must be positive");
    if (floorValue < 0 || floorValue > kneeValue) throw ConfigError("schedule floor must lie in [0, knee]");
  }
  if (decays() && (kneeValue <= 0 || startValue < kneeValue))
    throw ConfigError("decaying schedule needs start >= knee > 0");
}

double lambdaAt(const LambdaSchedule& s, std::size_t t) {
  s.validate();
  switch (s.kind) {
    case ScheduleKind::Const0:
      return 0.0;
    case ScheduleKind::Const1:
      return 1.0;
    case ScheduleKind::Exponential:
      return std::pow(s.kneeValue, static_cast<double>(t) / static_cast<double>(s.tau));
    case ScheduleKind::TwoStepLinear: {
      const double tau = static_cast<double>(s.tau);
      if (t == 0) return s.startValue;
      if (t <= s.tau) return s.kneeValue + (s.startValue - s.kneeValue) * ((tau - static_cast<double>(t)) / tau);
      const double slope = (s.kneeValue - s.floorValue) / (s.postSlopeDivisor * tau);
      return std::max(s.floorValue, s.kneeValue - slope * (static_cast<double>(t) - tau));
    }
  }
  return 0.0;
}

TLM_END_NAMESPACE
