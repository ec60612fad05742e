#pragma once

#include <string>
#include <vector>

#include "common.hpp"

namespace rd {

struct StepRecord {
  double t = 0.0;
  Vec8 chi = Vec8::Zero();
  Vec8 chi_dot = Vec8::Zero();
  Vec8 tau = Vec8::Zero();
  Vec8 H = Vec8::Zero();
  Vec8 chi_ddot = Vec8::Zero();
  double m_p = 0.0;
  std::string regime = "free";
};

struct Episode {
  double dt = 0.01;
  uint64_t seed = 0;
  double payload = 0.0;       // scheduled payload mass for this episode
  std::string family;         // trajectory family tag
  std::string schedule;       // payload event schedule, human readable
  std::vector<StepRecord> steps;

  int64_t size() const { return static_cast<int64_t>(steps.size()); }
};

// One row per step: t, chi(8), chi_dot(8), tau(8), H(8), chi_ddot(8), m_p,
// regime. 43 columns, header mandatory, 17-significant-digit decimals.
void write_episode_csv(const std::string& path, const Episode& ep);

// Strict reader: exact header, finite values, strictly increasing t with
// uniform dt. Parse failures name the file and line.
Episode read_episode_csv(const std::string& path);

}  // namespace rd
