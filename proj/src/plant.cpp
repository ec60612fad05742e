#include "plant.hpp"

#include <cmath>

namespace rd {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

PlantParams::PlantParams() {
  D_lin << 0.05, 0.05, 0.05, 0.01, 0.01, 0.01, 0.01, 0.01;
  D_quad << 0.02, 0.02, 0.02, 0, 0, 0, 0, 0;
  M_bar_diag << 2, 2, 2, 0.02, 0.02, 0.02, 0.05, 0.05;
}

double wrap_angle(double a) {
  double y = std::fmod(a + kPi, 2.0 * kPi);
  if (y <= 0.0) y += 2.0 * kPi;
  return y - kPi;
}

Plant::Plant(PlantParams p) : prm_(p) {
  // Link masses may be zero (massless-arm limit used by formula checks); the
  // link inertias keep the arm block positive definite there.
  require(prm_.m_b > 0 && prm_.m1 >= 0 && prm_.m2 >= 0, ErrCode::invalid_argument,
          "plant: masses must be positive");
  require(prm_.l1 > 0 && prm_.l2 > 0 && prm_.lc1 <= prm_.l1 && prm_.lc2 <= prm_.l2,
          ErrCode::invalid_argument, "plant: link geometry invalid");
  require(prm_.I1 > 0 && prm_.I2 > 0 && prm_.J.minCoeff() > 0,
          ErrCode::invalid_argument, "plant: inertias must be positive");
  require(prm_.M_bar_diag.minCoeff() > 0, ErrCode::invalid_argument,
          "plant: nominal inertia must be positive definite");
  require(prm_.dt > 0, ErrCode::invalid_argument, "plant: dt must be positive");
}

void Plant::reset(const Vec8& chi, const Vec8& chi_dot) {
  chi_ = chi;
  chi_dot_ = chi_dot;
  w_ = Vec8::Zero();
  t_ = 0.0;
  tick_ = 0;
}

void Plant::attach(double m_p) {
  require(!attached_, ErrCode::contract, "plant: payload already attached");
  require(m_p > 0, ErrCode::invalid_argument, "plant: payload mass must be positive");
  attached_ = true;
  m_p_ = m_p;
}

void Plant::detach() {
  require(attached_, ErrCode::contract, "plant: no payload attached");
  attached_ = false;
  m_p_ = 0.0;
}

std::string Plant::regime_label() const {
  if (!attached_) return "free";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "p%03d", (int)std::lround(m_p_ * 1000.0));
  return buf;
}

Mat8 Plant::inertia_matrix(const Vec8& chi, double m_p) const {
  const double m_tot = prm_.m_b + prm_.m1 + prm_.m2 + m_p;
  const double mu1 = prm_.m1 * prm_.lc1 + (prm_.m2 + m_p) * prm_.l1;
  const double mu2 = prm_.m2 * prm_.lc2 + m_p * prm_.l2;
  const double c1 = std::cos(chi[6]), s1 = std::sin(chi[6]);
  const double c12 = std::cos(chi[6] + chi[7]), s12 = std::sin(chi[6] + chi[7]);
  const double a1 = prm_.I1 + prm_.m1 * prm_.lc1 * prm_.lc1 +
                    (prm_.m2 + m_p) * prm_.l1 * prm_.l1;
  const double a2 = prm_.I2 + prm_.m2 * prm_.lc2 * prm_.lc2 +
                    m_p * prm_.l2 * prm_.l2;
  const double a3 = (prm_.m2 * prm_.lc2 + m_p * prm_.l2) * prm_.l1;
  const double c2 = std::cos(chi[7]);

  Mat8 M = Mat8::Zero();
  M(0, 0) = M(1, 1) = M(2, 2) = m_tot;
  M(3, 3) = prm_.J[0];
  M(4, 4) = prm_.J[1];
  M(5, 5) = prm_.J[2];

  const double cx1 = mu1 * c1 + mu2 * c12;
  const double cx2 = mu2 * c12;
  const double cz1 = mu1 * s1 + mu2 * s12;
  const double cz2 = mu2 * s12;
  M(0, 6) = cx1;
  M(0, 7) = cx2;
  M(2, 6) = cz1;
  M(2, 7) = cz2;
  M(6, 0) = cx1;
  M(7, 0) = cx2;
  M(6, 2) = cz1;
  M(7, 2) = cz2;

  M(6, 6) = a1 + a2 + 2.0 * a3 * c2;
  const double m12 = a2 + a3 * c2;
  M(6, 7) = m12;
  M(7, 6) = m12;
  M(7, 7) = a2;
  return M;
}

Vec8 Plant::gravity_vector(const Vec8& chi, double m_p) const {
  const double m_tot = prm_.m_b + prm_.m1 + prm_.m2 + m_p;
  const double mu1 = prm_.m1 * prm_.lc1 + (prm_.m2 + m_p) * prm_.l1;
  const double mu2 = prm_.m2 * prm_.lc2 + m_p * prm_.l2;
  const double c1 = std::cos(chi[6]);
  const double c12 = std::cos(chi[6] + chi[7]);
  Vec8 g = Vec8::Zero();
  g[2] = m_tot * prm_.g0;
  g[6] = mu1 * prm_.g0 * c1 + mu2 * prm_.g0 * c12;
  g[7] = mu2 * prm_.g0 * c12;
  return g;
}

Mat8 Plant::inertia_derivative(const Vec8& chi, int j, double m_p) const {
  require(j >= 0 && j < 8, ErrCode::contract, "plant: coordinate index out of range");
  const double h = 1e-6;
  Vec8 hi = chi, lo = chi;
  hi[j] += h;
  lo[j] -= h;
  return (inertia_matrix(hi, m_p) - inertia_matrix(lo, m_p)) / (2.0 * h);
}

Mat8 Plant::coriolis_matrix(const Vec8& chi, const Vec8& chi_dot, double m_p) const {
  // Christoffel symbols of the first kind from the same inertia matrix the
  // solver uses, so skew-symmetry of (dM/dt - 2C) is structural.
  Mat8 dM[8];
  for (int k = 0; k < 8; ++k) dM[k] = inertia_derivative(chi, k, m_p);
  Mat8 C = Mat8::Zero();
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) {
      double cij = 0.0;
      for (int k = 0; k < 8; ++k)
        cij += 0.5 * (dM[k](i, j) + dM[j](i, k) - dM[i](j, k)) * chi_dot[k];
      C(i, j) = cij;
    }
  return C;
}

Vec8 Plant::accel(const Vec8& chi, const Vec8& chi_dot, const Vec8& tau,
                  const Vec8& d) const {
  const Mat8 M = inertia_matrix(chi, m_p_);
  const Vec8 rhs = tau - coriolis_matrix(chi, chi_dot, m_p_) * chi_dot -
                   gravity_vector(chi, m_p_) - d;
  Eigen::LLT<Mat8> llt(M);
  require(llt.info() == Eigen::Success, ErrCode::numeric,
          "plant: configuration rejected, inertia matrix not positive definite");
  return llt.solve(rhs);
}

double ou_update(double w, double dt, double tau_w, double sigma_w, Rng& rng) {
  const double decay = std::exp(-dt / tau_w);
  return w * decay + sigma_w * std::sqrt(1.0 - decay * decay) * rng.normal();
}

StepOutput Plant::step(const Vec8& tau, Rng& rng) {
  // Disturbance from the pre-update OU state, held constant for the step.
  Vec8 d;
  for (int i = 0; i < 8; ++i)
    d[i] = prm_.D_lin[i] * chi_dot_[i] +
           prm_.D_quad[i] * chi_dot_[i] * std::fabs(chi_dot_[i]) + w_[i];
  Vec8 w_next;
  for (int i = 0; i < 8; ++i)
    w_next[i] = ou_update(w_[i], prm_.dt, prm_.tau_w, prm_.sigma_w, rng);

  const double dt = prm_.dt;
  const Vec8 k1v = accel(chi_, chi_dot_, tau, d);
  const Vec8 k1x = chi_dot_;
  const Vec8 k2v = accel(chi_ + 0.5 * dt * k1x, chi_dot_ + 0.5 * dt * k1v, tau, d);
  const Vec8 k2x = chi_dot_ + 0.5 * dt * k1v;
  const Vec8 k3v = accel(chi_ + 0.5 * dt * k2x, chi_dot_ + 0.5 * dt * k2v, tau, d);
  const Vec8 k3x = chi_dot_ + 0.5 * dt * k2v;
  const Vec8 k4v = accel(chi_ + dt * k3x, chi_dot_ + dt * k3v, tau, d);
  const Vec8 k4x = chi_dot_ + dt * k3v;

  chi_ += (dt / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
  chi_dot_ += (dt / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
  chi_[6] = wrap_angle(chi_[6]);
  chi_[7] = wrap_angle(chi_[7]);
  w_ = w_next;
  t_ += dt;
  ++tick_;

  for (int i = 0; i < 8; ++i) {
    if (!(std::fabs(chi_[i]) <= 1e6) || !(std::fabs(chi_dot_[i]) <= 1e6)) {
      fail(ErrCode::diverged,
           "plant: simulation diverged at step " + std::to_string(tick_));
    }
  }

  StepOutput out;
  out.chi_ddot = k1v;
  out.H = tau - prm_.M_bar_diag.asDiagonal() * k1v;
  out.d = d;
  return out;
}

double Plant::kinetic_energy() const {
  const Mat8 M = inertia_matrix(chi_, m_p_);
  return 0.5 * chi_dot_.dot(M * chi_dot_);
}

Mat8 Plant::nominal_inertia() const {
  return prm_.M_bar_diag.asDiagonal();
}

}  // namespace rd
