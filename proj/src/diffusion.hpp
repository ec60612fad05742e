#pragma once

#include "encoder.hpp"

namespace rd {

// Cosine corruption schedule. Index i holds step k = i+1; alpha_bar is the
// running product of (1 - beta) after clipping, so prod(alpha) == alpha_bar
// exactly by construction.
struct NoiseSchedule {
  int K = 0;
  std::vector<double> beta, alpha, alpha_bar;
};

NoiseSchedule make_schedule(int K);

// alpha_bar at step k with the k = 0 convention alpha_bar = 1.
double abar(const NoiseSchedule& s, int k);

// Closed-form forward marginal: sqrt(abar_k) h0 + sqrt(1 - abar_k) eps.
nn::Tensor q_sample(const nn::Tensor& h0, int k, const nn::Tensor& eps,
                    const NoiseSchedule& s);

// Sinusoidal embedding of the diffusion step index.
Eigen::VectorXd k_embedding(int k, int64_t dim = 32);

struct DenoiserShape {
  int64_t data_dim = 8, channels = 64, cond_dim = 88;
  int groups = 8;
  std::vector<int> dilations{1, 2, 4, 8};
};

// Conditioned denoising model over residual sequences plus its history
// encoder; the two parameter sets live in one store ("enc.", "den.") and are
// trained jointly. The unconditioned ablation zeroes the descriptor at both
// training and sampling time.
struct DiffusionModel {
  int64_t S = 8, L = 10;
  int K = 20;
  bool conditioned = true;
  EncoderShape enc;
  DenoiserShape den;
  NoiseSchedule sched;
  Normalizer norm;
  nn::ParamStore params;
};

DiffusionModel make_diffusion_model(int64_t S, int64_t L, int K,
                                    bool conditioned, const Normalizer& norm,
                                    uint64_t seed);

// Tape route (training): hk [B,S,8], cond [B,cond_dim] -> eps_hat [B,S,8].
int denoiser_on_tape(nn::Tape& tp, const nn::ParamStore& ps, int hk, int cond,
                     const DenoiserShape& sh);

// Inference route, one sequence at a time.
RowMat denoiser_eval(const nn::ParamStore& ps, const RowMat& hk,
                     const Eigen::VectorXd& cond, const DenoiserShape& sh);

// One joint Adam update on a batch drawn from refs. Returns the loss. adam_t
// is the 1-based optimizer step used for bias correction.
double train_step(DiffusionModel& m, const Dataset& ds,
                  const std::vector<SegmentRef>& refs, int64_t batch,
                  uint64_t step_seed, const nn::AdamConfig& cfg,
                  int64_t adam_t);

// Loss of a batch without touching parameters (validation).
double eval_loss(const DiffusionModel& m, const Dataset& ds,
                 const std::vector<SegmentRef>& refs, int64_t batch,
                 uint64_t seed);

// Reverse process in normalized units given the conditioning pieces.
RowMat sample_core(const DiffusionModel& m, const Eigen::VectorXd& cond24,
                   const Eigen::VectorXd& r, Rng& rng);

// Full sampling path from a raw history window; output is denormalized.
RowMat sample_sequence(const DiffusionModel& m, const HistoryBuffer& buf,
                       Rng& rng);

// First time-step of a sampled sequence, the value the controller consumes.
Vec8 predict_residual(const DiffusionModel& m, const HistoryBuffer& buf,
                      Rng& rng);

void save_model(const std::string& path, const DiffusionModel& m);
DiffusionModel load_model(const std::string& path);

}  // namespace rd
