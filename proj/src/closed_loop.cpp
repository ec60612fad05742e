#include "closed_loop.hpp"

#include <cmath>
#include <fstream>

namespace rd {

namespace {

void truncate_tail(TrackingResult& res, int64_t tail) {
  if (static_cast<int64_t>(res.rows.size()) > tail)
    res.rows.erase(res.rows.begin(),
                   res.rows.end() - static_cast<ptrdiff_t>(tail));
}

void finish_monitor(TrackingResult& res, const LyapunovMonitor& mon) {
  res.monitor_checked = mon.ticks_checked();
  res.monitor_satisfied = mon.ticks_satisfied();
  res.monitor_fraction = mon.fraction_satisfied();
}

}  // namespace

TrackingResult run_closed_loop(Plant& plant, const ResidualPredictor& pred,
                               const RefFn& ref,
                               const std::vector<PayloadEvent>& events,
                               const LoopOptions& opt, uint64_t seed,
                               const TraceFn& trace) {
  opt.gains.validate();
  require(opt.control_dt > 0.0 && opt.substeps >= 1 && opt.duration_s > 0.0,
          ErrCode::invalid_argument, "loop: bad step configuration");
  require(std::fabs(opt.control_dt - opt.substeps * plant.params().dt) <
              1e-12,
          ErrCode::invalid_argument,
          "loop: control_dt must equal substeps * plant dt");

  Rng rng(derive_seed(seed, "plant-noise"));
  Rng model_rng(derive_seed(seed, "sampling"));

  const int64_t hist = pred.history_len();
  HistoryBuffer buf(std::max<int64_t>(hist, 1));
  const bool gated = hist > 0;

  AdaptiveControllerState st;
  st.sigma_hat = opt.gains.sigma0;
  LyapunovMonitor mon(opt.gains, opt.monitor_sigma_m, opt.monitor_tol);

  TrackingResult res;
  const int64_t n_ticks =
      static_cast<int64_t>(std::llround(opt.duration_s / opt.control_dt));
  res.rows.reserve(static_cast<size_t>(n_ticks));

  Vec8 tau_prev = Vec8::Zero();
  size_t next_event = 0;

  for (int64_t k = 0; k < n_ticks; ++k) {
    const double t = k * opt.control_dt;
    while (next_event < events.size() && events[next_event].t <= t + 1e-12) {
      const PayloadEvent& ev = events[next_event++];
      if (ev.attach) {
        plant.attach(ev.mass);
        if (trace) trace(k, "attach");
      } else {
        plant.detach();
        if (trace) trace(k, "detach");
      }
    }

    const Reference8 r = ref(t);
    if (trace) trace(k, "ref");

    const Vec8 chi = plant.chi();
    const Vec8 chi_dot = plant.chi_dot();
    if (trace) trace(k, "feedback");

    if (gated) buf.push(chi, chi_dot, tau_prev);
    if (trace) trace(k, "buffer");

    Vec8 H_hat = Vec8::Zero();
    if (gated && buf.full()) {
      H_hat = pred.predict(buf, model_rng);
      ++res.predicted_ticks;
      if (trace) trace(k, "gate:predict");
    } else {
      if (trace) trace(k, "gate:zero");
    }

    const Vec8 e = chi - r.chi_d;
    const Vec8 e_dot = chi_dot - r.chi_dot_d;
    const Vec8 s = sliding_variable(e, e_dot, opt.gains);
    if (trace) trace(k, "error");

    st.sigma_hat = adapt_step(st.sigma_hat, s.norm(), opt.gains.nu,
                              opt.control_dt);
    if (trace) trace(k, "adapt");

    const Vec8 tau = control_input(s, e_dot, r.chi_ddot_d, H_hat,
                                   st.sigma_hat, opt.gains);
    if (trace) trace(k, "control");

    LogRow row;
    row.t = t;
    row.chi = chi;
    row.e = e;
    row.s = s;
    row.tau = tau;
    row.H_hat = H_hat;
    row.sigma_hat = st.sigma_hat;
    row.V = lyapunov_value(s, st.sigma_hat, 0.0, opt.gains);
    mon.tick(s, st.sigma_hat, opt.control_dt);

    bool finite = true;
    try {
      StepOutput first{};
      for (int sub = 0; sub < opt.substeps; ++sub) {
        StepOutput out = plant.step(tau, rng);
        if (sub == 0) first = out;
      }
      row.H = first.H;
    } catch (const Error& err) {
      if (err.code() != ErrCode::diverged) throw;
      res.diverged = true;
      res.divergence_note = err.what();
      finite = false;
      row.H = Vec8::Zero();
    }
    if (trace) trace(k, "plant");

    res.rows.push_back(row);
    if (trace) trace(k, "log");
    tau_prev = tau;
    ++res.ticks;
    res.completed_s = t + opt.control_dt;

    if (!finite) {
      truncate_tail(res, opt.divergence_tail);
      break;
    }
  }

  finish_monitor(res, mon);
  return res;
}

TrackingResult run_injected_loop(Plant& plant, const RefFn& ref,
                                 const InjectedError& inj,
                                 const LoopOptions& opt, uint64_t seed) {
  opt.gains.validate();
  require(static_cast<bool>(inj.sigma), ErrCode::invalid_argument,
          "loop: injected error function required");
  require(std::fabs(opt.control_dt - opt.substeps * plant.params().dt) <
              1e-12,
          ErrCode::invalid_argument,
          "loop: control_dt must equal substeps * plant dt");

  Rng rng(derive_seed(seed, "plant-noise"));
  AdaptiveControllerState st;
  st.sigma_hat = opt.gains.sigma0;
  LyapunovMonitor mon(opt.gains, inj.sigma_m, opt.monitor_tol);

  const PlantParams& pp = plant.params();
  TrackingResult res;
  const int64_t n_ticks =
      static_cast<int64_t>(std::llround(opt.duration_s / opt.control_dt));
  res.rows.reserve(static_cast<size_t>(n_ticks));

  for (int64_t k = 0; k < n_ticks; ++k) {
    const double t = k * opt.control_dt;
    const Reference8 r = ref(t);
    const Vec8 chi = plant.chi();
    const Vec8 chi_dot = plant.chi_dot();

    const Vec8 e = chi - r.chi_d;
    const Vec8 e_dot = chi_dot - r.chi_dot_d;
    const Vec8 s = sliding_variable(e, e_dot, opt.gains);
    st.sigma_hat = adapt_step(st.sigma_hat, s.norm(), opt.gains.nu,
                              opt.control_dt);

    const Vec8 sig = inj.sigma(t);
    require(sig.norm() <= inj.sigma_m + 1e-12, ErrCode::contract,
            "loop: injected error exceeds its declared bound");

    // Estimate/input fixed point: tau = u0 + H_hat must realize an
    // estimation error of exactly sigma at the pre-step state.
    const Vec8 u0 = control_input(s, e_dot, r.chi_ddot_d, Vec8::Zero(),
                                  st.sigma_hat, opt.gains);
    const Mat8 M = plant.inertia_matrix(chi);
    const Vec8 c = plant.coriolis_times_qdot(chi, chi_dot) +
                   plant.gravity_vector(chi) +
                   (pp.D_lin.array() * chi_dot.array() +
                    pp.D_quad.array() * chi_dot.array() *
                        chi_dot.array().abs())
                       .matrix() +
                   plant.disturbance_state();
    const Vec8 u0s = u0 + sig;
    const Vec8 H_hat =
        M * (u0s.array() / pp.M_bar_diag.array()).matrix() - u0 + c;
    const Vec8 tau = u0 + H_hat;

    LogRow row;
    row.t = t;
    row.chi = chi;
    row.e = e;
    row.s = s;
    row.tau = tau;
    row.H_hat = H_hat;
    row.sigma_hat = st.sigma_hat;
    row.V = lyapunov_value(s, st.sigma_hat, inj.sigma_m, opt.gains);
    mon.tick(s, st.sigma_hat, opt.control_dt);

    bool finite = true;
    try {
      StepOutput first{};
      for (int sub = 0; sub < opt.substeps; ++sub) {
        StepOutput out = plant.step(tau, rng);
        if (sub == 0) first = out;
      }
      row.H = first.H;
    } catch (const Error& err) {
      if (err.code() != ErrCode::diverged) throw;
      res.diverged = true;
      res.divergence_note = err.what();
      finite = false;
      row.H = Vec8::Zero();
    }

    res.rows.push_back(row);
    ++res.ticks;
    res.completed_s = t + opt.control_dt;
    if (!finite) {
      truncate_tail(res, opt.divergence_tail);
      break;
    }
  }

  finish_monitor(res, mon);
  return res;
}

double position_rmse(const TrackingResult& res) {
  require(!res.rows.empty(), ErrCode::contract, "loop: no rows logged");
  double acc = 0.0;
  for (const LogRow& r : res.rows) acc += r.e.segment<3>(0).squaredNorm();
  return std::sqrt(acc / static_cast<double>(res.rows.size()));
}

Vec8 channel_rmse(const TrackingResult& res) {
  require(!res.rows.empty(), ErrCode::contract, "loop: no rows logged");
  Vec8 acc = Vec8::Zero();
  for (const LogRow& r : res.rows)
    acc += (r.e.array() * r.e.array()).matrix();
  return (acc / static_cast<double>(res.rows.size())).array().sqrt();
}

void write_log_csv(const std::string& path, const TrackingResult& res) {
  std::ofstream out(path);
  require(out.good(), ErrCode::io, "loop: cannot write " + path);
  out << "t";
  const char* groups[] = {"e", "s", "tau", "H_hat", "H"};
  for (const char* g : groups)
    for (int i = 1; i <= 8; ++i) out << "," << g << i;
  out << ",sigma_hat,V\n";
  out.precision(17);
  for (const LogRow& r : res.rows) {
    out << r.t;
    const Vec8* vecs[] = {&r.e, &r.s, &r.tau, &r.H_hat, &r.H};
    for (const Vec8* v : vecs)
      for (int i = 0; i < 8; ++i) out << "," << (*v)[i];
    out << "," << r.sigma_hat << "," << r.V << "\n";
  }
  require(out.good(), ErrCode::io, "loop: failed writing " + path);
}

}  // namespace rd
