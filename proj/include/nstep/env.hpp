#pragma once

#include <cmath>
#include <stdexcept>

namespace nstep::env {

inline constexpr int kNumActions = 3;

inline constexpr double kMinPosition = -1.2;
inline constexpr double kMaxPosition = 0.6;
inline constexpr double kMaxVelocity = 0.07;
inline constexpr double kGoalPosition = 0.5;
inline constexpr double kForce = 0.001;
inline constexpr double kGravity = 0.0025;

struct EnvState {
  double position = 0.0;
  double velocity = 0.0;
};

struct StepOutcome {
  EnvState next;
  double reward = -1.0;
  bool terminal = false;
};

// Start distribution: position uniform in [-0.6, -0.4), velocity 0.
template <class R>
EnvState reset(R& rng) {
  return {rng.uniform(-0.6, -0.4), 0.0};
}

// Deterministic mountain-car dynamics. Throttle is action-1 in {-1,0,+1};
// hitting the left wall is inelastic (velocity zeroed), reaching
// position >= 0.5 terminates. Reward is -1 on every step.
inline StepOutcome step(const EnvState& s, int action) {
  if (action < 0 || action >= kNumActions) {
    throw std::invalid_argument("env::step: action out of range");
  }
  const double throttle = static_cast<double>(action - 1);
  double v = s.velocity + kForce * throttle - kGravity * std::cos(3.0 * s.position);
  if (v > kMaxVelocity) v = kMaxVelocity;
  if (v < -kMaxVelocity) v = -kMaxVelocity;
  double x = s.position + v;
  if (x > kMaxPosition) x = kMaxPosition;
  if (x < kMinPosition) {
    x = kMinPosition;
    v = 0.0;
  }
  return {{x, v}, -1.0, x >= kGoalPosition};
}

}  // namespace nstep::env
