#include "controller.hpp"

namespace rd {

ControllerGains::ControllerGains() {
  Phi << 1.0, 1.0, 1.5, 1.1, 1.1, 1.0, 1.2, 1.2;
  Lambda << 2.0, 2.0, 3.5, 1.5, 1.5, 1.2, 3.0, 3.0;
  Mbar << 2.0, 2.0, 2.0, 0.02, 0.02, 0.02, 0.05, 0.05;
}

void ControllerGains::validate() const {
  for (int i = 0; i < 8; ++i) {
    require(Phi[i] > 0.0, ErrCode::contract, "gains: Phi must be positive");
    require(Lambda[i] > 0.0, ErrCode::contract,
            "gains: Lambda must be positive");
    require(Mbar[i] > 0.0, ErrCode::contract, "gains: Mbar must be positive");
  }
  require(nu > 0.0, ErrCode::contract, "gains: nu must be positive");
  require(sigma0 > 0.0, ErrCode::contract,
          "gains: initial adaptive gain must be positive");
  require(varpi > 0.0, ErrCode::contract,
          "gains: smoothing constant must be positive");
}

Vec8 sliding_variable(const Vec8& e, const Vec8& e_dot,
                      const ControllerGains& g) {
  return e_dot + g.Phi.cwiseProduct(e);
}

Vec8 switching_term(const Vec8& s, double sigma_hat, double varpi) {
  require(varpi > 0.0, ErrCode::contract, "switching: varpi must be positive");
  return (sigma_hat / std::sqrt(s.squaredNorm() + varpi)) * s;
}

Vec8 control_input(const Vec8& s, const Vec8& e_dot, const Vec8& chi_ddot_d,
                   const Vec8& H_hat, double sigma_hat,
                   const ControllerGains& g) {
  return -g.Lambda.cwiseProduct(s) +
         g.Mbar.cwiseProduct(chi_ddot_d - g.Phi.cwiseProduct(e_dot)) + H_hat -
         switching_term(s, sigma_hat, g.varpi);
}

double adapt_step(double sigma_hat, double s_norm, double nu, double dt) {
  require(dt > 0.0, ErrCode::contract, "adapt: dt must be positive");
  require(s_norm >= 0.0 && std::isfinite(s_norm), ErrCode::contract,
          "adapt: norm must be finite and nonnegative");
  const double next = sigma_hat + dt * (s_norm - nu * sigma_hat);
  if (nu * dt < 1.0 && sigma_hat > 0.0)
    require(next > 0.0, ErrCode::numeric, "adapt: gain lost positivity");
  return next;
}

double lyapunov_value(const Vec8& s, double sigma_hat, double sigma_m,
                      const ControllerGains& g) {
  const double err = sigma_hat - sigma_m;
  return 0.5 * s.dot(g.Mbar.cwiseProduct(s)) + 0.5 * err * err;
}

LyapunovRates lyapunov_rates(const ControllerGains& g, double sigma_m) {
  LyapunovRates r;
  r.rho = std::min(g.Lambda.minCoeff(), g.nu / 2.0) /
          std::max(g.Mbar.minCoeff() / 2.0, 0.5);
  r.delta = (g.nu / 2.0) * sigma_m * sigma_m;
  return r;
}

LyapunovMonitor::LyapunovMonitor(const ControllerGains& g, double sigma_m,
                                 double tol)
    : g_(g), sigma_m_(sigma_m), tol_(tol) {
  const LyapunovRates r = lyapunov_rates(g, sigma_m);
  rho_ = r.rho;
  delta_ = r.delta;
  vball_ = 2.0 * delta_ / rho_;
}

void LyapunovMonitor::tick(const Vec8& s, double sigma_hat, double dt) {
  const double v = lyapunov_value(s, sigma_hat, sigma_m_, g_);
  if (has_prev_ && prev_v_ > vball_) {
    ++checked_;
    if ((v - prev_v_) / dt <= -rho_ * prev_v_ + delta_ + tol_) ++satisfied_;
  }
  prev_v_ = v;
  has_prev_ = true;
}

void LyapunovMonitor::reset() {
  has_prev_ = false;
  prev_v_ = 0.0;
  checked_ = satisfied_ = 0;
}

double LyapunovMonitor::fraction_satisfied() const {
  return checked_ == 0 ? 1.0
                       : static_cast<double>(satisfied_) /
                             static_cast<double>(checked_);
}

Vec8 controller_tick(AdaptiveControllerState& st, const Vec8& e,
                     const Vec8& e_dot, const Vec8& chi_ddot_d,
                     const Vec8& H_hat, const ControllerGains& g, double dt) {
  const Vec8 s = sliding_variable(e, e_dot, g);
  st.sigma_hat = adapt_step(st.sigma_hat, s.norm(), g.nu, dt);
  const Vec8 tau = control_input(s, e_dot, chi_ddot_d, H_hat, st.sigma_hat, g);
  st.last_s = s;
  st.last_tau = tau;
  return tau;
}

}  // namespace rd
