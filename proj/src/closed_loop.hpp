#pragma once

#include <functional>

#include "controller.hpp"
#include "infer.hpp"
#include "plant.hpp"
#include "scenario.hpp"

namespace rd {

// One logged control tick. V is the diagnostic energy 1/2 s'Mbar s +
// 1/2 sigma_hat^2; the monitor tracks its own value with the configured
// error-bound convention.
struct LogRow {
  double t;
  Vec8 chi, e, s, tau, H_hat, H;
  double sigma_hat, V;
};

struct TrackingResult {
  std::vector<LogRow> rows;
  bool diverged = false;
  std::string divergence_note;
  double completed_s = 0.0;
  int64_t ticks = 0;
  int64_t predicted_ticks = 0;  // ticks where the warm-up gate was open
  // Lyapunov decrement monitor over ticks outside the terminal ball.
  int64_t monitor_checked = 0;
  int64_t monitor_satisfied = 0;
  double monitor_fraction = 1.0;
};

struct LoopOptions {
  ControllerGains gains;
  double control_dt = 0.02;  // 50 Hz outer loop
  int substeps = 2;          // plant integration steps per tick (zero-order hold)
  double duration_s = 10.0;
  // Error-bound convention for the decrement monitor's stored energy; the
  // injected-error harness sets this to the injected bound.
  double monitor_sigma_m = 0.0;
  double monitor_tol = 0.05;
  int64_t divergence_tail = 100;  // rows kept in a failure report
};

using RefFn = std::function<Reference8(double)>;
// Per-tick operation probe for order-of-operations tests. Called with the
// tick index and a short tag for each stage in execution order.
using TraceFn = std::function<void(int64_t, const char*)>;

// Runs the residual-compensated adaptive loop: per tick, read the reference,
// read feedback, push the observation into the history window, predict the
// residual once the window is full (zero before that), form the tracking and
// sliding errors, advance the adaptive gain, compute the input with the
// updated gain, and hold it across the plant substeps. The plant must be
// reset by the caller; payload events fire at the first tick at or after
// their scheduled time. Simulation divergence is reported, not thrown, with
// the last `divergence_tail` rows retained.
TrackingResult run_closed_loop(Plant& plant, const ResidualPredictor& pred,
                               const RefFn& ref,
                               const std::vector<PayloadEvent>& events,
                               const LoopOptions& opt, uint64_t seed,
                               const TraceFn& trace = {});

// Bounded estimation-error injection for the stability harness: the loop is
// given a residual estimate that differs from the realized residual by
// exactly sigma(t), which the harness keeps within the bound it monitors.
struct InjectedError {
  std::function<Vec8(double)> sigma;
  double sigma_m = 0.5;
};

// Same controller with the gate bypassed: the residual estimate is the exact
// torque-consistent residual plus sigma(t). Solves the estimate/input fixed
// point in closed form, so the realized estimation error equals sigma(t) to
// rounding at the instant the input is applied.
TrackingResult run_injected_loop(Plant& plant, const RefFn& ref,
                                 const InjectedError& inj,
                                 const LoopOptions& opt, uint64_t seed);

// Position RMSE (meters) over the logged rows, the tracking headline number.
double position_rmse(const TrackingResult& res);
// Full-state per-channel RMSE of the tracking error.
Vec8 channel_rmse(const TrackingResult& res);

// Writes rows as CSV: t, e[8], s[8], tau[8], H_hat[8], H[8], sigma_hat, V.
void write_log_csv(const std::string& path, const TrackingResult& res);

}  // namespace rd
