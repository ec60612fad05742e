#include "collect.hpp"

#include <cmath>
#include <cstdio>

namespace rd {

namespace {
constexpr double kTwoPi = 6.28318530717958647692;
}

ReferenceTrajectory::ReferenceTrajectory(uint64_t seed) {
  Rng rng(seed);
  auto draw = [&](int coord, int n, double amp_max, double f_lo, double f_hi) {
    for (int i = 0; i < n; ++i) {
      Component c;
      c.amp = rng.uniform(0.0, amp_max);
      c.omega = kTwoPi * rng.uniform(f_lo, f_hi);
      c.phase = rng.uniform(0.0, kTwoPi);
      comp_[static_cast<size_t>(coord)].push_back(c);
    }
  };
  for (int a = 0; a < 3; ++a) draw(a, 3, 0.4, 0.05, 0.4);
  for (int a = 3; a < 6; ++a) draw(a, 2, 0.1, 0.05, 0.3);
  for (int a = 6; a < 8; ++a) {
    offset_[a] = rng.uniform(-0.6, 0.6);
    draw(a, 2, 0.3, 0.05, 0.3);
  }
}

Vec8 ReferenceTrajectory::position(double t) const {
  Vec8 p = offset_;
  for (int i = 0; i < 8; ++i)
    for (const Component& c : comp_[static_cast<size_t>(i)])
      p[i] += c.amp * std::sin(c.omega * t + c.phase);
  return p;
}

Vec8 ReferenceTrajectory::velocity(double t) const {
  Vec8 v = Vec8::Zero();
  for (int i = 0; i < 8; ++i)
    for (const Component& c : comp_[static_cast<size_t>(i)])
      v[i] += c.amp * c.omega * std::cos(c.omega * t + c.phase);
  return v;
}

Episode collect_episode(const PlantParams& pp, const PilotGains& gains,
                        double payload, double duration_s, uint64_t seed) {
  require(payload >= 0, ErrCode::invalid_argument, "collect: payload < 0");
  require(duration_s > 0, ErrCode::invalid_argument, "collect: duration <= 0");

  ReferenceTrajectory ref(derive_seed(seed, "ref"));
  Rng plant_rng(derive_seed(seed, "plant"));
  Rng sched_rng(derive_seed(seed, "sched"));

  double t_attach = -1, t_detach = -1;
  if (payload > 0) {
    t_attach = duration_s * sched_rng.uniform(0.15, 0.30);
    t_detach = duration_s * sched_rng.uniform(0.60, 0.80);
  }

  Plant plant(pp);
  plant.reset(ref.position(0.0), ref.velocity(0.0));

  Episode ep;
  ep.dt = pp.dt;
  ep.seed = seed;
  ep.payload = payload;
  ep.family = "rich-sine";
  if (payload > 0) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "attach@%.2f detach@%.2f", t_attach, t_detach);
    ep.schedule = buf;
  } else {
    ep.schedule = "none";
  }

  const int64_t n_steps = static_cast<int64_t>(std::llround(duration_s / pp.dt));
  ep.steps.reserve(static_cast<size_t>(n_steps));
  for (int64_t k = 0; k < n_steps; ++k) {
    const double t = plant.time();
    if (payload > 0 && !plant.attached() && t >= t_attach && t < t_detach)
      plant.attach(payload);
    if (payload > 0 && plant.attached() && t >= t_detach) plant.detach();

    const Vec8 e = ref.position(t) - plant.chi();
    const Vec8 edot = ref.velocity(t) - plant.chi_dot();
    const Vec8 tau = gains.kp.cwiseProduct(e) + gains.kd.cwiseProduct(edot) +
                     plant.gravity_vector(plant.chi());

    StepRecord rec;
    rec.t = t;
    rec.chi = plant.chi();
    rec.chi_dot = plant.chi_dot();
    rec.tau = tau;
    rec.m_p = plant.payload();
    rec.regime = plant.regime_label();

    const StepOutput out = plant.step(tau, plant_rng);
    rec.H = out.H;
    rec.chi_ddot = out.chi_ddot;
    ep.steps.push_back(rec);
  }
  return ep;
}

std::vector<Episode> collect_episodes(const CollectConfig& cfg) {
  require(cfg.episodes_per_level >= 1, ErrCode::invalid_argument,
          "collect: episodes_per_level < 1");
  require(!cfg.payload_levels.empty(), ErrCode::invalid_argument,
          "collect: no payload levels");
  std::vector<Episode> out;
  for (size_t li = 0; li < cfg.payload_levels.size(); ++li) {
    for (int e = 0; e < cfg.episodes_per_level; ++e) {
      char tag[32];
      std::snprintf(tag, sizeof(tag), "ep-%zu-%d", li, e);
      out.push_back(collect_episode(cfg.plant, cfg.gains, cfg.payload_levels[li],
                                    cfg.duration_s, derive_seed(cfg.seed, tag)));
    }
  }
  return out;
}

}  // namespace rd
