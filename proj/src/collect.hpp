#pragma once

#include "plant.hpp"
#include "episode.hpp"

namespace rd {

// Per-coordinate PD gains for the data-collection pilot. Translational gains
// follow the collection protocol. Joint damping is capped by the held-torque
// update: torque is constant across a step, so kd*dt must stay well below the
// arm's smallest effective inertia (~5e-4 with the arm straight).
struct PilotGains {
  Vec8 kp, kd;
  PilotGains() {
    kp << 4, 4, 4, 1.5, 1.5, 1.5, 1.0, 1.0;
    kd << 3, 3, 3, 0.8, 0.8, 0.8, 0.05, 0.05;
  }
};

// Smooth randomized reference: per coordinate a constant offset plus a sum of
// sinusoids. Translational axes use three components with amplitudes drawn so
// the excursion stays within 1.2 m; joints stay inside +-pi/2.
class ReferenceTrajectory {
 public:
  explicit ReferenceTrajectory(uint64_t seed);
  Vec8 position(double t) const;
  Vec8 velocity(double t) const;

 private:
  struct Component {
    double amp, omega, phase;
  };
  Vec8 offset_ = Vec8::Zero();
  std::array<std::vector<Component>, 8> comp_;
};

struct CollectConfig {
  PlantParams plant;
  PilotGains gains;
  std::vector<double> payload_levels{0.0, 0.2, 0.4};
  int episodes_per_level = 3;
  double duration_s = 60.0;
  uint64_t seed = 1;
};

// Runs the PD + gravity feed-forward pilot along a randomized reference and
// logs every tick. Episodes with payload > 0 attach it partway in and release
// it later (times recorded in Episode::schedule).
Episode collect_episode(const PlantParams& pp, const PilotGains& gains,
                        double payload, double duration_s, uint64_t seed);

std::vector<Episode> collect_episodes(const CollectConfig& cfg);

}  // namespace rd
