#pragma once

#include <memory>

#include "diffusion.hpp"
#include "mlp.hpp"

namespace rd {

struct TrainLogRow {
  int64_t step;
  double train_loss;
  double val_loss;
};
using TrainLog = std::vector<TrainLogRow>;

// Joint denoiser+encoder training over the dataset's training split.
// Deterministic given seed; logs train/validation loss every 100 steps.
TrainLog train_diffusion(DiffusionModel& m, const Dataset& ds, int64_t steps,
                         int64_t batch, double lr, uint64_t seed);

TrainLog train_mlp(MlpModel& m, const Dataset& ds, int64_t steps,
                   int64_t batch, double lr, uint64_t seed);

// Uniform prediction surface for the closed loop and the evaluations. The
// loop substitutes a zero residual until the history buffer is full.
class ResidualPredictor {
 public:
  virtual ~ResidualPredictor() = default;
  // Observations required before predictions start (the warm-up gate).
  virtual int64_t history_len() const = 0;
  virtual Vec8 predict(const HistoryBuffer& buf, Rng& rng) const = 0;
  virtual std::string name() const = 0;
};

std::unique_ptr<ResidualPredictor> make_diffusion_predictor(DiffusionModel m);
std::unique_ptr<ResidualPredictor> make_mlp_predictor(MlpModel m);
// The first-principles controller runs with no residual model at all.
std::unique_ptr<ResidualPredictor> make_zero_predictor();

// Dispatches on the checkpoint kind ("diffusion" or "mlp").
std::unique_ptr<ResidualPredictor> load_predictor(const std::string& path);

}  // namespace rd
