#pragma once

#include "encoder.hpp"

namespace rd {

// Deterministic regressor baseline: the current normalized state and previous
// input (24 values) map through two SiLU hidden layers to the conditional
// mean of the normalized residual at the current tick.
struct MlpModel {
  int64_t in = 24, hidden = 128, out = 8;
  int64_t L = 10;  // kept for a shared warm-up gate with the other models
  Normalizer norm;
  nn::ParamStore params;
};

MlpModel make_mlp_model(const Normalizer& norm, int64_t L, uint64_t seed);

int mlp_on_tape(nn::Tape& tp, const nn::ParamStore& ps, int x,
                const MlpModel& m);

double mlp_train_step(MlpModel& m, const Dataset& ds,
                      const std::vector<SegmentRef>& refs, int64_t batch,
                      uint64_t step_seed, const nn::AdamConfig& cfg,
                      int64_t adam_t);

double mlp_eval_loss(const MlpModel& m, const Dataset& ds,
                     const std::vector<SegmentRef>& refs, int64_t batch,
                     uint64_t seed);

// Denormalized residual prediction from the latest raw observation.
Vec8 mlp_predict(const MlpModel& m, const Vec8& chi, const Vec8& chi_dot,
                 const Vec8& tau_prev);

void save_mlp(const std::string& path, const MlpModel& m);
MlpModel load_mlp(const std::string& path);

}  // namespace rd
