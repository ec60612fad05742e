#include "evaluate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <thread>

#include <json.hpp>

namespace rd {

using nlohmann::json;

std::vector<EvalSample> build_eval_samples(const std::vector<Episode>& eps,
                                           int64_t L, int64_t stride) {
  require(L >= 1 && stride >= 1, ErrCode::invalid_argument,
          "eval: bad window parameters");
  std::vector<EvalSample> out;
  for (const Episode& ep : eps) {
    for (int64_t u = L; u < ep.size(); u += stride) {
      EvalSample s;
      s.window.resize(L + 1, 24);
      for (int64_t i = 0; i <= L; ++i) {
        const StepRecord& st = ep.steps[static_cast<size_t>(u - L + i)];
        const Vec8 tau_prev = (u - L + i) >= 1
                                  ? ep.steps[static_cast<size_t>(u - L + i - 1)].tau
                                  : Vec8::Zero();
        for (int c = 0; c < 8; ++c) {
          s.window(i, c) = st.chi[c];
          s.window(i, 8 + c) = st.chi_dot[c];
          s.window(i, 16 + c) = tau_prev[c];
        }
      }
      s.target = ep.steps[static_cast<size_t>(u)].H;
      out.push_back(std::move(s));
    }
  }
  require(!out.empty(), ErrCode::contract, "eval: no samples produced");
  return out;
}

namespace {

ModelEvalRow finish_row(const std::string& name, const Vec8& sq_sum,
                        int64_t n) {
  ModelEvalRow row;
  row.model = name;
  const Vec8 mse = sq_sum / static_cast<double>(n);
  row.rmse = mse.array().sqrt();
  row.position = std::sqrt(mse.segment<3>(0).sum() / 3.0);
  row.attitude = std::sqrt(mse.segment<3>(3).sum() / 3.0);
  row.manipulator = std::sqrt(mse.segment<2>(6).sum() / 2.0);
  return row;
}

}  // namespace

ModelEvalRow evaluate_predictions(const std::string& name, const PredictFn& fn,
                                  const std::vector<EvalSample>& samples,
                                  uint64_t seed) {
  require(!samples.empty(), ErrCode::contract, "eval: no samples");
  Rng rng(derive_seed(seed, "eval-" + name));
  Vec8 sq = Vec8::Zero();
  for (const EvalSample& s : samples) {
    const Vec8 err = fn(s, rng) - s.target;
    sq += (err.array() * err.array()).matrix();
  }
  return finish_row(name, sq, static_cast<int64_t>(samples.size()));
}

ModelEvalRow evaluate_model(const ResidualPredictor& pred,
                            const std::vector<EvalSample>& samples,
                            uint64_t seed) {
  require(!samples.empty(), ErrCode::contract, "eval: no samples");
  const int64_t rows = samples.front().window.rows();
  require(pred.history_len() == 0 || pred.history_len() == rows,
          ErrCode::contract, "eval: window length does not match the model");
  return evaluate_predictions(
      pred.name(),
      [&](const EvalSample& s, Rng& rng) {
        HistoryBuffer buf(rows);
        for (int64_t i = 0; i < rows; ++i) {
          const Eigen::RowVectorXd r = s.window.row(i);
          buf.push(r.segment<8>(0).transpose(), r.segment<8>(8).transpose(),
                   r.segment<8>(16).transpose());
        }
        return pred.predict(buf, rng);
      },
      samples, seed);
}

ModelEvalRow evaluate_oracle(const std::vector<EvalSample>& samples) {
  return evaluate_predictions(
      "oracle", [](const EvalSample& s, Rng&) { return s.target; }, samples,
      0);
}

Vec8 target_mean(const std::vector<EvalSample>& samples) {
  require(!samples.empty(), ErrCode::contract, "eval: no samples");
  Vec8 m = Vec8::Zero();
  for (const EvalSample& s : samples) m += s.target;
  return m / static_cast<double>(samples.size());
}

Vec8 target_std(const std::vector<EvalSample>& samples) {
  const Vec8 m = target_mean(samples);
  Vec8 sq = Vec8::Zero();
  for (const EvalSample& s : samples) {
    const Vec8 d = s.target - m;
    sq += (d.array() * d.array()).matrix();
  }
  return (sq / static_cast<double>(samples.size())).array().sqrt();
}

ModelEvalRow evaluate_target_mean(const std::vector<EvalSample>& samples) {
  const Vec8 m = target_mean(samples);
  return evaluate_predictions(
      "zero", [&m](const EvalSample&, Rng&) { return m; }, samples, 0);
}

Quartiles quartiles(std::vector<double> values) {
  require(values.size() >= 2, ErrCode::invalid_argument,
          "quartiles: need at least two values");
  std::sort(values.begin(), values.end());
  auto at = [&](double q) {
    const double pos = q * (static_cast<double>(values.size()) - 1.0);
    const size_t lo = static_cast<size_t>(pos);
    const size_t hi = std::min(lo + 1, values.size() - 1);
    const double w = pos - static_cast<double>(lo);
    return values[lo] * (1.0 - w) + values[hi] * w;
  };
  return {at(0.25), at(0.5), at(0.75)};
}

std::vector<ModelGrid> run_tracking_grid(
    const std::vector<const ResidualPredictor*>& models,
    const PlantParams& plant_params, const ControllerGains& gains,
    const std::vector<double>& payloads, const std::vector<double>& speeds,
    int trials, uint64_t master_seed) {
  require(!models.empty() && !payloads.empty() && !speeds.empty() &&
              trials >= 1,
          ErrCode::invalid_argument, "tracking: empty grid");

  std::vector<ModelGrid> out(models.size());
  for (size_t mi = 0; mi < models.size(); ++mi)
    out[mi].model = models[mi]->name();

  for (double payload : payloads) {
    for (double speed : speeds) {
      const Scenario sc({speed, payload, ScenarioSpec{}.amplitude,
                         ScenarioSpec{}.z_ref});
      for (size_t mi = 0; mi < models.size(); ++mi) {
        CellResult cell;
        cell.payload = payload;
        cell.speed = speed;
        cell.trials.resize(static_cast<size_t>(trials));

        auto run_trial = [&](int ti) {
          const uint64_t seed = derive_seed(
              master_seed, "track-p" + std::to_string(payload) + "-v" +
                               std::to_string(speed) + "-trial" +
                               std::to_string(ti));
          Plant plant(plant_params);
          plant.reset(sc.sample(0.0).chi_d, Vec8::Zero());
          LoopOptions opt;
          opt.gains = gains;
          opt.duration_s = sc.duration();
          opt.substeps = 2;
          opt.control_dt = 2.0 * plant_params.dt;
          const TrackingResult res = run_closed_loop(
              plant, *models[mi], [&](double t) { return sc.sample(t); },
              sc.payload_events(), opt, seed);
          TrialOutcome& o = cell.trials[static_cast<size_t>(ti)];
          o.seed = seed;
          o.diverged = res.diverged;
          for (const LogRow& r : res.rows)
            o.sigma_max = std::max(o.sigma_max, r.sigma_hat);
          // Decrement check replayed against the realized estimation-error
          // bound of this run; the guarantee only binds where that bound
          // holds, so the warm-up ticks widen the ball honestly.
          double err_bound = 0;
          for (const LogRow& r : res.rows)
            err_bound = std::max(err_bound, (r.H - r.H_hat).norm());
          LyapunovMonitor mon(gains, err_bound, opt.monitor_tol);
          for (const LogRow& r : res.rows)
            mon.tick(r.s, r.sigma_hat, opt.control_dt);
          o.monitor_fraction = mon.fraction_satisfied();
          if (!res.diverged) {
            o.pos_rmse = position_rmse(res);
            o.chan = channel_rmse(res);
          }
        };

        const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
        const int workers =
            static_cast<int>(std::min<unsigned>(hw, static_cast<unsigned>(trials)));
        if (workers <= 1) {
          for (int ti = 0; ti < trials; ++ti) run_trial(ti);
        } else {
          std::vector<std::thread> pool;
          std::atomic<int> next{0};
          for (int w = 0; w < workers; ++w)
            pool.emplace_back([&] {
              for (int ti = next.fetch_add(1); ti < trials;
                   ti = next.fetch_add(1))
                run_trial(ti);
            });
          for (auto& th : pool) th.join();
        }

        double acc = 0;
        for (const TrialOutcome& o : cell.trials)
          if (!o.diverged) {
            acc += o.pos_rmse;
            ++cell.completed;
          }
        cell.mean_pos_rmse = cell.completed ? acc / cell.completed : 0.0;
        out[mi].cells.push_back(std::move(cell));
      }
    }
  }
  return out;
}

Pca2 pca_top2(const Eigen::MatrixXd& X) {
  require(X.rows() >= 3, ErrCode::contract,
          "pca: need at least 3 samples, got " + std::to_string(X.rows()));
  require(X.cols() >= 2, ErrCode::contract, "pca: need at least 2 columns");
  const Eigen::RowVectorXd mean = X.colwise().mean();
  const Eigen::MatrixXd C = X.rowwise() - mean;
  const Eigen::MatrixXd cov =
      (C.transpose() * C) / static_cast<double>(X.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  require(es.info() == Eigen::Success, ErrCode::numeric,
          "pca: eigen-decomposition failed");

  const int64_t d = cov.rows();
  Pca2 out;
  out.eigenvalues.resize(d);
  for (int64_t i = 0; i < d; ++i)
    out.eigenvalues[i] = std::max(0.0, es.eigenvalues()[d - 1 - i]);
  out.axes.resize(2, d);
  out.axes.row(0) = es.eigenvectors().col(d - 1).transpose();
  out.axes.row(1) = es.eigenvectors().col(d - 2).transpose();
  out.projected = C * out.axes.transpose();
  const double total = out.eigenvalues.sum();
  out.pc1_ratio = total > 0 ? out.eigenvalues[0] / total : 0.0;
  return out;
}

namespace {

std::map<int, Eigen::Vector2d> centroids(const Eigen::MatrixXd& proj,
                                         const std::vector<int>& labels) {
  require(static_cast<size_t>(proj.rows()) == labels.size(),
          ErrCode::invalid_argument, "clusters: label count mismatch");
  std::map<int, Eigen::Vector2d> sum;
  std::map<int, int> cnt;
  for (int64_t i = 0; i < proj.rows(); ++i) {
    const int l = labels[static_cast<size_t>(i)];
    sum.try_emplace(l, Eigen::Vector2d::Zero()).first->second +=
        proj.row(i).transpose();
    ++cnt[l];
  }
  require(sum.size() >= 2, ErrCode::contract,
          "clusters: need at least two labels");
  for (auto& [k, v] : sum) v /= cnt[k];
  return sum;
}

}  // namespace

double between_within_ratio(const Eigen::MatrixXd& proj,
                            const std::vector<int>& labels) {
  const auto cents = centroids(proj, labels);
  double between = 0;
  int pairs = 0;
  for (auto a = cents.begin(); a != cents.end(); ++a)
    for (auto b = std::next(a); b != cents.end(); ++b) {
      between += (a->second - b->second).norm();
      ++pairs;
    }
  between /= pairs;

  std::map<int, double> sq;
  std::map<int, int> cnt;
  for (int64_t i = 0; i < proj.rows(); ++i) {
    const int l = labels[static_cast<size_t>(i)];
    sq[l] += (proj.row(i).transpose() - cents.at(l)).squaredNorm();
    ++cnt[l];
  }
  double within = 0;
  for (auto& [k, v] : sq) within += std::sqrt(v / cnt[k]);
  within /= static_cast<double>(sq.size());
  require(within > 0, ErrCode::numeric, "clusters: degenerate within-spread");
  return between / within;
}

double cluster_assignment_accuracy(const Eigen::MatrixXd& proj,
                                   const std::vector<int>& labels) {
  const auto cents = centroids(proj, labels);
  int64_t hit = 0;
  for (int64_t i = 0; i < proj.rows(); ++i) {
    const Eigen::Vector2d p = proj.row(i).transpose();
    int best = cents.begin()->first;
    double bd = (p - cents.begin()->second).norm();
    for (const auto& [k, c] : cents) {
      const double d = (p - c).norm();
      if (d < bd) {
        bd = d;
        best = k;
      }
    }
    if (best == labels[static_cast<size_t>(i)]) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(proj.rows());
}

std::vector<int64_t> histogram(const std::vector<double>& values, double lo,
                               double hi, int bins) {
  require(bins >= 1 && hi > lo, ErrCode::invalid_argument,
          "histogram: bad range");
  std::vector<int64_t> h(static_cast<size_t>(bins), 0);
  for (double v : values) {
    int b = static_cast<int>((v - lo) / (hi - lo) * bins);
    b = std::clamp(b, 0, bins - 1);
    ++h[static_cast<size_t>(b)];
  }
  return h;
}

void write_model_table(const std::string& path,
                       const std::vector<ModelEvalRow>& rows,
                       const std::string& config_hash) {
  std::ofstream out(path);
  require(out.good(), ErrCode::io, "eval: cannot write " + path);
  out << "model";
  for (int i = 1; i <= 8; ++i) out << ",H" << i;
  out << ",position,attitude,manipulator,config\n";
  out.precision(10);
  for (const ModelEvalRow& r : rows) {
    out << r.model;
    for (int i = 0; i < 8; ++i) out << "," << r.rmse[i];
    out << "," << r.position << "," << r.attitude << "," << r.manipulator
        << "," << config_hash << "\n";
  }
  require(out.good(), ErrCode::io, "eval: failed writing " + path);
}

void write_tracking_csv(const std::string& path,
                        const std::vector<ModelGrid>& grids,
                        const std::string& config_hash) {
  std::ofstream out(path);
  require(out.good(), ErrCode::io, "eval: cannot write " + path);
  out << "model,payload,speed,trial,seed,diverged,pos_rmse";
  for (int i = 1; i <= 8; ++i) out << ",e" << i;
  out << ",sigma_max,monitor_fraction,config\n";
  out.precision(10);
  for (const ModelGrid& g : grids)
    for (const CellResult& c : g.cells)
      for (size_t ti = 0; ti < c.trials.size(); ++ti) {
        const TrialOutcome& o = c.trials[ti];
        out << g.model << "," << c.payload << "," << c.speed << "," << ti
            << "," << o.seed << "," << (o.diverged ? 1 : 0) << ","
            << o.pos_rmse;
        for (int i = 0; i < 8; ++i) out << "," << o.chan[i];
        out << "," << o.sigma_max << "," << o.monitor_fraction << ","
            << config_hash << "\n";
      }
  require(out.good(), ErrCode::io, "eval: failed writing " + path);
}

void write_tracking_summary_json(const std::string& path,
                                 const std::vector<ModelGrid>& grids,
                                 const std::string& config_hash) {
  json j;
  j["config"] = config_hash;
  json cells = json::array();
  for (const ModelGrid& g : grids)
    for (const CellResult& c : g.cells) {
      json e;
      e["model"] = g.model;
      e["payload"] = c.payload;
      e["speed"] = c.speed;
      e["trials"] = c.trials.size();
      e["completed"] = c.completed;
      e["mean_pos_rmse"] = c.mean_pos_rmse;
      cells.push_back(e);
    }
  j["cells"] = cells;
  std::ofstream out(path);
  require(out.good(), ErrCode::io, "eval: cannot write " + path);
  out << j.dump(2) << "\n";
  require(out.good(), ErrCode::io, "eval: failed writing " + path);
}

}  // namespace rd
