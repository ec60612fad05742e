#pragma once

#include <vector>

#include "controller.hpp"

namespace rd {

// Quintic smoothstep: f(0)=0, f(1)=1, first and second derivatives vanish at
// both ends, so anything blended with it stays twice differentiable.
struct Smooth {
  double f, df, ddf;
};
Smooth quintic_step(double u);
// Integral of quintic_step from 0 to u; equals 0.5 at u = 1.
double quintic_step_integral(double u);

// Figure-eight path point with derivatives taken w.r.t. the path parameter.
// The curve is the A*(sin t, sin t cos t) figure eight rotated 45 degrees in
// the plane so t = pi/2 and t = 3pi/2 land exactly on the two stations
// (a, a) and (-a, -a), a = amplitude/sqrt(2).
struct PathPoint {
  Eigen::Vector2d p, dp, ddp;
};
PathPoint lemniscate_point(double amplitude, double theta);

// Full-loop arc length by composite Simpson quadrature (rotation-invariant).
double lemniscate_length(double amplitude);

// Instantaneous payload change applied by the closed loop at the first
// control tick at or after t.
struct PayloadEvent {
  double t;
  bool attach;
  double mass;  // ignored on detach
};

struct ScenarioSpec {
  double speed = 0.5;    // loop-average path speed at the cruise rate, m/s
  double payload = 0.3;  // grasped mass, kg
  double amplitude = 1.4142135623730951;  // stations at (+-1, +-1)
  double z_ref = 1.5;
};

// Pick-transport-place mission over the rotated figure eight. Phases:
//   [0, 2)            hover at station A, arm tucked
//   [2, 4)            1 s blend to the grasp pose, 1 s dwell; mass attaches
//                     at the end
//   [4, 4+Tt)         outbound transit to station B
//   [4+Tt, 6+Tt)      1 s blend to the release pose, 1 s dwell; mass
//                     detaches at the end
//   [6+Tt, 6+2Tt)     return transit back to A
//   [6+2Tt, 7+2Tt]    hover at A while the arm blends back to tuck
// The path rate ramps over 1 s at each end of a transit (quintic), so every
// channel of the reference is twice differentiable; Tt = pi/omega + 1 makes
// each transit cover exactly half the loop. omega = 2*pi*speed / arc length,
// which pins the loop-average path speed at the cruise rate to `speed`.
// Altitude and attitude references are constant (z_ref, level).
class Scenario {
 public:
  explicit Scenario(const ScenarioSpec& spec);

  const ScenarioSpec& spec() const { return spec_; }
  double duration() const { return 7.0 + 2.0 * transit_; }
  double transit_duration() const { return transit_; }
  double omega() const { return omega_; }
  double path_length() const { return length_; }
  Eigen::Vector2d station_a() const;
  Eigen::Vector2d station_b() const;

  // Reference at time t; t is clamped into [0, duration].
  Reference8 sample(double t) const;

  std::vector<PayloadEvent> payload_events() const;

 private:
  ScenarioSpec spec_;
  double length_, omega_, transit_;
};

}  // namespace rd
