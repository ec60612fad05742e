#pragma once

#include "common.hpp"

namespace rd {

// Diagonal gain set for the adaptive sliding controller. Defaults are the
// values the tracking experiments run with.
struct ControllerGains {
  Vec8 Phi;     // error filter
  Vec8 Lambda;  // sliding feedback
  Vec8 Mbar;    // nominal diagonal inertia, must match the plant's
  double nu = 2.0;
  double sigma0 = 0.1;
  double varpi = 0.1;
  ControllerGains();
  void validate() const;
};

// Reference sample at one control tick.
struct Reference8 {
  Vec8 chi_d = Vec8::Zero();
  Vec8 chi_dot_d = Vec8::Zero();
  Vec8 chi_ddot_d = Vec8::Zero();
};

// s = e_dot + Phi e.
Vec8 sliding_variable(const Vec8& e, const Vec8& e_dot,
                      const ControllerGains& g);

// sigma_hat * s / sqrt(|s|^2 + varpi): the smoothed switching direction.
// Magnitude stays strictly below sigma_hat for varpi > 0.
Vec8 switching_term(const Vec8& s, double sigma_hat, double varpi);

// tau = -Lambda s + Mbar (chi_ddot_d - Phi e_dot) + H_hat - switching.
Vec8 control_input(const Vec8& s, const Vec8& e_dot, const Vec8& chi_ddot_d,
                   const Vec8& H_hat, double sigma_hat,
                   const ControllerGains& g);

// Explicit Euler update of the adaptive gain. Positivity of the result is
// asserted whenever nu*dt < 1, where it is guaranteed for positive inputs.
double adapt_step(double sigma_hat, double s_norm, double nu, double dt);

// V = 1/2 s' Mbar s + 1/2 (sigma_hat - sigma_m)^2.
double lyapunov_value(const Vec8& s, double sigma_hat, double sigma_m,
                      const ControllerGains& g);

// Decrease-rate constants: rho = min(min(Lambda), nu/2) / max(min(Mbar)/2,
// 1/2) and delta = (nu/2) sigma_m^2. The quadratic-form weight in V is the
// nominal diagonal inertia (the analysis text writes the full inertia there;
// the candidate function itself uses the nominal one).
struct LyapunovRates {
  double rho = 0.0;
  double delta = 0.0;
};
LyapunovRates lyapunov_rates(const ControllerGains& g, double sigma_m);

// Accumulates the per-tick discrete decrease check
//   (V_t - V_{t-1})/dt <= -rho V_{t-1} + delta + tol
// over the ticks whose predecessor sits outside the terminal set
// V > 2 delta / rho. Diagnostic only; never throws on violations.
class LyapunovMonitor {
 public:
  LyapunovMonitor(const ControllerGains& g, double sigma_m, double tol);
  void tick(const Vec8& s, double sigma_hat, double dt);
  void reset();
  int64_t ticks_checked() const { return checked_; }
  int64_t ticks_satisfied() const { return satisfied_; }
  double fraction_satisfied() const;
  double terminal_ball() const { return vball_; }
  double last_value() const { return prev_v_; }

 private:
  ControllerGains g_;
  double sigma_m_, tol_, rho_, delta_, vball_;
  bool has_prev_ = false;
  double prev_v_ = 0.0;
  int64_t checked_ = 0, satisfied_ = 0;
};

// Mutable per-run controller state.
struct AdaptiveControllerState {
  double sigma_hat = 0.1;
  Vec8 last_s = Vec8::Zero();
  Vec8 last_tau = Vec8::Zero();
};

// One control tick in the published order: sliding variable, gain update,
// then the input computed with the updated gain.
Vec8 controller_tick(AdaptiveControllerState& st, const Vec8& e,
                     const Vec8& e_dot, const Vec8& chi_ddot_d,
                     const Vec8& H_hat, const ControllerGains& g, double dt);

}  // namespace rd
