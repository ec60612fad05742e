#pragma once

#include "episode.hpp"
#include "tensor.hpp"

namespace rd {

// Per-channel affine statistics for states (16), inputs (8), residuals (8).
// Fitted on the training split only; stds are clamped at 1e-8.
struct Normalizer {
  Eigen::VectorXd state_mean{Eigen::VectorXd::Zero(16)};
  Eigen::VectorXd state_std{Eigen::VectorXd::Ones(16)};
  Vec8 tau_mean = Vec8::Zero();
  Vec8 tau_std = Vec8::Ones();
  Vec8 h_mean = Vec8::Zero();
  Vec8 h_std = Vec8::Ones();

  Eigen::VectorXd norm_state(const Vec8& chi, const Vec8& chi_dot) const;
  Vec8 norm_tau(const Vec8& tau) const;
  Vec8 norm_h(const Vec8& h) const;
  Vec8 denorm_h(const Vec8& z) const;
};

struct SegmentRef {
  int episode = 0;
  int64_t start = 0;  // first in-segment tick; history occupies start-L..start
};

// Episode collection with segment windows, an episode-level split, and the
// training-split normalizer.
struct Dataset {
  int64_t S = 8;
  int64_t L = 10;
  int64_t stride = 1;
  uint64_t seed = 0;
  std::vector<Episode> episodes;
  std::vector<SegmentRef> train, val, test;
  Normalizer norm;
};

int64_t segment_count(int64_t n_steps, int64_t S, int64_t L, int64_t stride);
std::vector<SegmentRef> segment_episode(int episode, int64_t n_steps, int64_t S,
                                        int64_t L, int64_t stride);

// Shuffles episode indices deterministically and splits 70/15/15 by episode
// (every split gets at least one episode when possible).
void split_episodes(Dataset& ds);

Normalizer fit_normalizer(const Dataset& ds, const std::vector<SegmentRef>& refs);

// Builds Dataset from episodes: segments each split's episodes and fits the
// normalizer on the training split.
Dataset build_dataset(std::vector<Episode> episodes, int64_t S, int64_t L,
                      int64_t stride, uint64_t seed);

// Training batch in normalized units.
// hist rows pair the state at tick u with the input applied one tick earlier;
// the pre-episode input is zero.
struct Batch {
  nn::Tensor hist;    // [B, L+1, 24]
  nn::Tensor cond;    // [B, 24]: current state and previous input
  nn::Tensor target;  // [B, S, 8] residual sequence
};
Batch make_batch(const Dataset& ds, const std::vector<SegmentRef>& refs,
                 const std::vector<int64_t>& picks);

// Directory layout: manifest.json plus one CSV per episode.
void save_dataset(const std::string& dir, const Dataset& ds);
Dataset load_dataset(const std::string& dir);

}  // namespace rd
