#pragma once

#include <string>

#include "common.hpp"

namespace rd {

struct PlantParams {
  double m_b = 2.4;
  double m1 = 0.2;
  double m2 = 0.2;
  double l1 = 0.18;
  double l2 = 0.18;
  double lc1 = 0.09;
  double lc2 = 0.09;
  double I1 = 5e-4;
  double I2 = 5e-4;
  Eigen::Vector3d J{0.03, 0.03, 0.05};
  double g0 = 9.81;
  Vec8 D_lin;
  Vec8 D_quad;
  double tau_w = 0.5;
  double sigma_w = 0.05;
  Vec8 M_bar_diag;
  double dt = 0.01;
  PlantParams();
};

struct StepOutput {
  Vec8 chi_ddot;  // realized acceleration at the step's initial state
  Vec8 H;         // tau - M_bar * chi_ddot, same instant
  Vec8 d;         // disturbance held constant across the step
};

// Ground-truth simulator: an 8-DOF base-plus-2R-arm system with payload mass
// as a piecewise-constant regime, quadratic drag plus an Ornstein-Uhlenbeck
// disturbance, integrated with classical RK4. Coriolis terms come from
// finite-difference Christoffel symbols of the inertia matrix, which makes
// the passivity identity hold by construction.
class Plant {
 public:
  explicit Plant(PlantParams p);

  void reset(const Vec8& chi, const Vec8& chi_dot);
  // Payload events are a two-state machine; double attach/detach is a
  // contract violation. Masses 0.3 / 0.5 kg are evaluation-only regimes.
  void attach(double m_p);
  void detach();
  bool attached() const { return attached_; }
  double payload() const { return m_p_; }
  std::string regime_label() const;

  Mat8 inertia_matrix(const Vec8& chi) const { return inertia_matrix(chi, m_p_); }
  Mat8 inertia_matrix(const Vec8& chi, double m_p) const;
  Mat8 coriolis_matrix(const Vec8& chi, const Vec8& chi_dot) const {
    return coriolis_matrix(chi, chi_dot, m_p_);
  }
  Mat8 coriolis_matrix(const Vec8& chi, const Vec8& chi_dot, double m_p) const;
  Vec8 coriolis_times_qdot(const Vec8& chi, const Vec8& chi_dot) const {
    return coriolis_matrix(chi, chi_dot) * chi_dot;
  }
  Vec8 gravity_vector(const Vec8& chi) const { return gravity_vector(chi, m_p_); }
  Vec8 gravity_vector(const Vec8& chi, double m_p) const;
  // d(M)/d(chi_j) by central differences, step 1e-6.
  Mat8 inertia_derivative(const Vec8& chi, int j, double m_p) const;

  Vec8 accel(const Vec8& chi, const Vec8& chi_dot, const Vec8& tau,
             const Vec8& d) const;

  // Computes d from the current velocity and disturbance state, advances the
  // OU state (8 normal draws, always, so the stream layout is fixed), then
  // integrates one dt with tau and d held constant. Throws a diverged error
  // when any state entry exceeds 1e6 in magnitude.
  StepOutput step(const Vec8& tau, Rng& rng);

  const Vec8& chi() const { return chi_; }
  const Vec8& chi_dot() const { return chi_dot_; }
  const Vec8& disturbance_state() const { return w_; }
  void set_disturbance_state(const Vec8& w) { w_ = w; }
  double time() const { return t_; }
  int64_t tick() const { return tick_; }

  double kinetic_energy() const;
  double total_mass() const { return prm_.m_b + prm_.m1 + prm_.m2 + m_p_; }
  const PlantParams& params() const { return prm_; }
  Mat8 nominal_inertia() const;

 private:
  PlantParams prm_;
  double m_p_ = 0.0;
  bool attached_ = false;
  Vec8 chi_ = Vec8::Zero();
  Vec8 chi_dot_ = Vec8::Zero();
  Vec8 w_ = Vec8::Zero();
  double t_ = 0.0;
  int64_t tick_ = 0;
};

// Wraps an angle to (-pi, pi].
double wrap_angle(double a);

// Exact one-step discretization of dw = -w/tau_w dt + noise with stationary
// standard deviation sigma_w. Always draws one normal per component.
double ou_update(double w, double dt, double tau_w, double sigma_w, Rng& rng);

}  // namespace rd
