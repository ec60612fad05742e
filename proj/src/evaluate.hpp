#pragma once

#include "closed_loop.hpp"
#include "dataset.hpp"

namespace rd {

// One next-step prediction case: a raw observation window and the residual
// realized at the window's final tick (whose input is not yet in the window,
// matching what the controller knows when it asks for a prediction).
struct EvalSample {
  RowMat window;  // [L+1, 24] raw (chi, chi_dot, tau_prev) rows
  Vec8 target;
};

// Every prediction point of every episode, in order, `stride` ticks apart.
std::vector<EvalSample> build_eval_samples(const std::vector<Episode>& eps,
                                           int64_t L, int64_t stride);

// Per-channel and per-group prediction RMSE. Groups pool squared errors
// across their channels before the root: position H1-3, attitude H4-6,
// manipulator H7-8.
struct ModelEvalRow {
  std::string model;
  Vec8 rmse = Vec8::Zero();
  double position = 0, attitude = 0, manipulator = 0;
};

using PredictFn = std::function<Vec8(const EvalSample&, Rng&)>;

ModelEvalRow evaluate_predictions(const std::string& name, const PredictFn& fn,
                                  const std::vector<EvalSample>& samples,
                                  uint64_t seed);
ModelEvalRow evaluate_model(const ResidualPredictor& pred,
                            const std::vector<EvalSample>& samples,
                            uint64_t seed);

// Reference rows for harness validation. The oracle emits each sample's
// realized residual (all RMSE must come out zero). The "zero" row emits the
// evaluation set's per-channel mean, i.e. zero in standardized residual
// units, so its RMSE equals the per-channel standard deviation of the
// targets exactly; a literal zero vector would instead measure the RMS,
// which differs wherever a channel has nonzero mean (gravity keeps the
// vertical channel near 29 N).
ModelEvalRow evaluate_oracle(const std::vector<EvalSample>& samples);
ModelEvalRow evaluate_target_mean(const std::vector<EvalSample>& samples);
Vec8 target_mean(const std::vector<EvalSample>& samples);
Vec8 target_std(const std::vector<EvalSample>& samples);

// Linear-interpolation quartiles (the common type-7 convention).
struct Quartiles {
  double q1, median, q3;
};
Quartiles quartiles(std::vector<double> values);

// Tracking grid. All models share one plant-noise stream per (cell, trial),
// so per-trial comparisons are paired; trials are independent and run
// concurrently, aggregation is ordered by trial index.
struct TrialOutcome {
  uint64_t seed = 0;
  bool diverged = false;
  double pos_rmse = 0;
  Vec8 chan = Vec8::Zero();
  double sigma_max = 0;
  // Decrement-condition fraction, replayed post-run with the estimation-error
  // bound realized in that run (the guarantee binds only under its bound).
  double monitor_fraction = 1.0;
};

struct CellResult {
  double payload = 0, speed = 0;
  std::vector<TrialOutcome> trials;
  int completed = 0;
  double mean_pos_rmse = 0;  // over completed trials
};

struct ModelGrid {
  std::string model;
  std::vector<CellResult> cells;
};

std::vector<ModelGrid> run_tracking_grid(
    const std::vector<const ResidualPredictor*>& models,
    const PlantParams& plant_params, const ControllerGains& gains,
    const std::vector<double>& payloads, const std::vector<double>& speeds,
    int trials, uint64_t master_seed);

// Top-2 principal components of row-sample matrix X (columns are centered
// internally). Needs at least 3 samples and 2 columns.
struct Pca2 {
  Eigen::MatrixXd axes;        // [2, D], unit rows, leading component first
  Eigen::VectorXd eigenvalues; // all D, descending
  Eigen::MatrixXd projected;   // [N, 2]
  double pc1_ratio = 0;        // leading eigenvalue / total variance
};
Pca2 pca_top2(const Eigen::MatrixXd& X);

// Mean pairwise centroid distance over mean within-cluster RMS spread, in
// the projected plane. Labels must cover at least two clusters.
double between_within_ratio(const Eigen::MatrixXd& projected,
                            const std::vector<int>& labels);

// Fraction of rows whose projected point sits in the half-plane of its own
// label's centroid (nearest-centroid assignment accuracy).
double cluster_assignment_accuracy(const Eigen::MatrixXd& projected,
                                   const std::vector<int>& labels);

// Fixed-width histogram of values over [lo, hi); out-of-range values clamp
// into the edge bins.
std::vector<int64_t> histogram(const std::vector<double>& values, double lo,
                               double hi, int bins);

// Emitters. Every table carries the resolved-config hash in a trailing
// column or field.
void write_model_table(const std::string& path,
                       const std::vector<ModelEvalRow>& rows,
                       const std::string& config_hash);
void write_tracking_csv(const std::string& path,
                        const std::vector<ModelGrid>& grids,
                        const std::string& config_hash);
void write_tracking_summary_json(const std::string& path,
                                 const std::vector<ModelGrid>& grids,
                                 const std::string& config_hash);

}  // namespace rd
