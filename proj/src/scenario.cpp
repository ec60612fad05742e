#include "scenario.hpp"

#include <cmath>

namespace rd {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kSqrt2 = 1.4142135623730951;
// Joint poses, radians: tuck (0, 90), grasp (50, 50), release (-50, -50).
constexpr double kDeg = kPi / 180.0;
const Eigen::Vector2d kTuck{0.0, 90.0 * kDeg};
const Eigen::Vector2d kGrasp{50.0 * kDeg, 50.0 * kDeg};
const Eigen::Vector2d kRelease{-50.0 * kDeg, -50.0 * kDeg};

double clamp01(double u) { return u < 0.0 ? 0.0 : (u > 1.0 ? 1.0 : u); }

// Path-rate warp over a transit of duration T: rises from rest over 1 s,
// holds the unit rate, settles over the final 1 s. Returns the integral and
// its first two derivatives; the integral reaches T - 1 at tau = T.
Smooth transit_warp(double tau, double T) {
  if (tau <= 0.0) return {0.0, 0.0, 0.0};
  if (tau < 1.0) {
    Smooth s = quintic_step(tau);
    return {quintic_step_integral(tau), s.f, s.df};
  }
  if (tau <= T - 1.0) return {0.5 + (tau - 1.0), 1.0, 0.0};
  if (tau < T) {
    const double u = tau - (T - 1.0);
    Smooth s = quintic_step(1.0 - u);
    return {T - 1.0 - quintic_step_integral(1.0 - u), s.f, -s.df};
  }
  return {T - 1.0, 0.0, 0.0};
}

struct Blend1 {
  double f, df, ddf;
};

// Quintic blend from a to b over [0, T], clamped outside.
Blend1 blend(double a, double b, double tau, double T) {
  const double u = clamp01(tau / T);
  const Smooth s = quintic_step(u);
  return {a + (b - a) * s.f, (b - a) * s.df / T, (b - a) * s.ddf / (T * T)};
}
}  // namespace

Smooth quintic_step(double u) {
  u = clamp01(u);
  const double u2 = u * u;
  return {u2 * u * (10.0 + u * (-15.0 + 6.0 * u)),
          30.0 * u2 * (1.0 - u) * (1.0 - u),
          60.0 * u * (1.0 - u) * (1.0 - 2.0 * u)};
}

double quintic_step_integral(double u) {
  u = clamp01(u);
  const double u4 = u * u * u * u;
  return u4 * (2.5 + u * (-3.0 + u));
}

PathPoint lemniscate_point(double amplitude, double theta) {
  require(amplitude > 0.0, ErrCode::invalid_argument,
          "scenario: amplitude must be positive");
  const double st = std::sin(theta), ct = std::cos(theta);
  const double s2 = std::sin(2.0 * theta), c2 = std::cos(2.0 * theta);
  // Unrotated figure eight and derivatives w.r.t. theta.
  const double u = amplitude * st, du = amplitude * ct, ddu = -amplitude * st;
  const double v = 0.5 * amplitude * s2, dv = amplitude * c2,
               ddv = -2.0 * amplitude * s2;
  PathPoint out;
  out.p = {(u - v) / kSqrt2, (u + v) / kSqrt2};
  out.dp = {(du - dv) / kSqrt2, (du + dv) / kSqrt2};
  out.ddp = {(ddu - ddv) / kSqrt2, (ddu + ddv) / kSqrt2};
  return out;
}

double lemniscate_length(double amplitude) {
  require(amplitude > 0.0, ErrCode::invalid_argument,
          "scenario: amplitude must be positive");
  // Speed w.r.t. theta is rotation-invariant: |dp| = A sqrt(cos^2 + cos^2 2t).
  const int n = 1 << 14;  // composite Simpson, even count
  const double h = 2.0 * kPi / n;
  auto speed = [amplitude](double th) {
    const double c = std::cos(th), c2 = std::cos(2.0 * th);
    return amplitude * std::sqrt(c * c + c2 * c2);
  };
  double acc = speed(0.0) + speed(2.0 * kPi);
  for (int i = 1; i < n; ++i) acc += (i % 2 ? 4.0 : 2.0) * speed(i * h);
  return acc * h / 3.0;
}

Scenario::Scenario(const ScenarioSpec& spec) : spec_(spec) {
  require(spec.speed > 0.0 && spec.payload >= 0.0 && spec.amplitude > 0.0,
          ErrCode::invalid_argument, "scenario: bad spec");
  length_ = lemniscate_length(spec.amplitude);
  omega_ = 2.0 * kPi * spec.speed / length_;
  transit_ = kPi / omega_ + 1.0;
  require(transit_ > 2.0, ErrCode::invalid_argument,
          "scenario: speed too high for the ramp profile");
}

Eigen::Vector2d Scenario::station_a() const {
  return lemniscate_point(spec_.amplitude, 0.5 * kPi).p;
}

Eigen::Vector2d Scenario::station_b() const {
  return lemniscate_point(spec_.amplitude, 1.5 * kPi).p;
}

Reference8 Scenario::sample(double t) const {
  require(std::isfinite(t), ErrCode::invalid_argument,
          "scenario: non-finite sample time");
  const double T = duration();
  t = t < 0.0 ? 0.0 : (t > T ? T : t);
  const double Tt = transit_;

  Reference8 r;
  r.chi_d[2] = spec_.z_ref;

  // Planar position: hold a station outside the transits.
  double theta0 = 0.0, tau = -1.0;
  if (t < 4.0) {
    r.chi_d.segment<2>(0) = station_a();
  } else if (t < 4.0 + Tt) {
    theta0 = 0.5 * kPi;
    tau = t - 4.0;
  } else if (t < 6.0 + Tt) {
    r.chi_d.segment<2>(0) = station_b();
  } else if (t < 6.0 + 2.0 * Tt) {
    theta0 = 1.5 * kPi;
    tau = t - (6.0 + Tt);
  } else {
    r.chi_d.segment<2>(0) = station_a();
  }
  if (tau >= 0.0) {
    const Smooth w = transit_warp(tau, Tt);
    const double theta = theta0 + omega_ * w.f;
    const double td = omega_ * w.df, tdd = omega_ * w.ddf;
    const PathPoint pp = lemniscate_point(spec_.amplitude, theta);
    r.chi_d.segment<2>(0) = pp.p;
    r.chi_dot_d.segment<2>(0) = pp.dp * td;
    r.chi_ddot_d.segment<2>(0) = pp.ddp * (td * td) + pp.dp * tdd;
  }

  // Arm: tuck -> grasp -> (hold) -> release -> (hold) -> tuck, 1 s blends.
  Eigen::Vector2d from = kTuck, to = kTuck;
  double btau = 1.0;  // past the blend: hold `to`
  if (t < 2.0) {
    to = kTuck;
  } else if (t < 4.0) {
    from = kTuck;
    to = kGrasp;
    btau = t - 2.0;
  } else if (t < 4.0 + Tt) {
    from = to = kGrasp;
  } else if (t < 6.0 + Tt) {
    from = kGrasp;
    to = kRelease;
    btau = t - (4.0 + Tt);
  } else if (t < 6.0 + 2.0 * Tt) {
    from = to = kRelease;
  } else {
    from = kRelease;
    to = kTuck;
    btau = t - (6.0 + 2.0 * Tt);
  }
  for (int i = 0; i < 2; ++i) {
    const Blend1 b = blend(from[i], to[i], btau, 1.0);
    r.chi_d[6 + i] = b.f;
    r.chi_dot_d[6 + i] = b.df;
    r.chi_ddot_d[6 + i] = b.ddf;
  }
  return r;
}

std::vector<PayloadEvent> Scenario::payload_events() const {
  // The reference sits exactly on the station through each handling dwell,
  // so the scheduled instants coincide with station proximity.
  return {{4.0, true, spec_.payload}, {6.0 + transit_, false, 0.0}};
}

}  // namespace rd
