// C surface of the shared library plus the pipeline commands behind it. The
// CLI is a thin flag parser over these entry points; everything here works
// through the public core headers.

#include "resdiff.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "closed_loop.hpp"
#include "collect.hpp"
#include "config.hpp"
#include "evaluate.hpp"
#include "infer.hpp"

using nlohmann::json;

struct rd_config {
  rd::RunConfig cfg;
  mutable std::string resolved;  // lazy cache, invalidated by overrides
};

struct rd_model {
  std::unique_ptr<rd::ResidualPredictor> pred;
  std::string name;
};

namespace {

thread_local std::string t_err;

rd_status map_code(rd::ErrCode c) {
  switch (c) {
    case rd::ErrCode::invalid_argument: return RD_ERR_INVALID_ARGUMENT;
    case rd::ErrCode::contract: return RD_ERR_CONTRACT;
    case rd::ErrCode::numeric: return RD_ERR_NUMERIC;
    case rd::ErrCode::parse: return RD_ERR_PARSE;
    case rd::ErrCode::io: return RD_ERR_IO;
    case rd::ErrCode::integrity: return RD_ERR_INTEGRITY;
    case rd::ErrCode::diverged: return RD_ERR_DIVERGED;
    case rd::ErrCode::version: return RD_ERR_VERSION;
    case rd::ErrCode::internal: return RD_ERR_INTERNAL;
  }
  return RD_ERR_INTERNAL;
}

template <class F>
rd_status guarded(F&& body) {
  try {
    body();
    t_err.clear();
    return RD_OK;
  } catch (const rd::Error& e) {
    t_err = e.what();
    return map_code(e.code());
  } catch (const json::exception& e) {
    t_err = e.what();
    return RD_ERR_PARSE;
  } catch (const std::exception& e) {
    t_err = e.what();
    return RD_ERR_INTERNAL;
  } catch (...) {
    t_err = "unrecognized exception";
    return RD_ERR_INTERNAL;
  }
}

std::string fnv1a_hex(const std::string& bytes) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  rd::require(in.good(), rd::ErrCode::io, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  rd::require(out.good(), rd::ErrCode::io, "cannot write " + path);
  out << text;
  rd::require(out.good(), rd::ErrCode::io, "short write to " + path);
}

bool known_selector(const std::string& m) {
  return m == "proposed" || m == "diffusion-nocond" || m == "mlp" ||
         m == "asmc";
}

// The conditioned diffusion checkpoint reports itself as "diffusion".
std::string checkpoint_kind(const std::string& selector) {
  return selector == "proposed" ? "diffusion" : selector;
}

// ---- collect ---------------------------------------------------------------

void cmd_collect(const rd::RunConfig& cfg, bool full) {
  rd::CollectConfig cc;
  cc.plant = cfg.plant;
  cc.payload_levels = cfg.collect.payloads;
  cc.episodes_per_level = cfg.collect.episodes_per_payload;
  cc.duration_s = full ? cfg.collect.full_duration_s : cfg.collect.duration_s;
  cc.seed = cfg.seed;
  const std::vector<rd::Episode> eps = rd::collect_episodes(cc);

  rd::write_resolved_config(cfg, cfg.out);
  json manifest;
  manifest["version"] = 1;
  manifest["config"] = rd::config_hash(cfg);
  manifest["episodes"] = json::array();
  int64_t records = 0;
  for (size_t i = 0; i < eps.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "ep_%03zu.csv", i);
    const std::string path = cfg.out + "/" + name;
    rd::write_episode_csv(path, eps[i]);
    json row;
    row["file"] = name;
    row["hash"] = fnv1a_hex(read_file(path));
    row["payload"] = eps[i].payload;
    row["seed"] = eps[i].seed;
    row["steps"] = eps[i].size();
    manifest["episodes"].push_back(row);
    records += eps[i].size();
  }
  manifest["records"] = records;
  write_text(cfg.out + "/manifest.json", manifest.dump(2) + "\n");
  std::printf("[collect] %zu episodes, %lld records -> %s\n", eps.size(),
              static_cast<long long>(records), cfg.out.c_str());
}

// ---- shared dataset loading -------------------------------------------------

std::vector<rd::Episode> load_data_dir(const std::string& dir) {
  const std::string mpath = dir + "/manifest.json";
  const json manifest = json::parse(read_file(mpath), nullptr, true);
  rd::require(manifest.contains("episodes") && manifest["episodes"].is_array(),
              rd::ErrCode::parse, "manifest has no episode list: " + mpath);
  std::vector<rd::Episode> eps;
  for (const json& row : manifest["episodes"]) {
    const std::string file = row.at("file").get<std::string>();
    const std::string path = dir + "/" + file;
    rd::require(fnv1a_hex(read_file(path)) == row.at("hash").get<std::string>(),
                rd::ErrCode::integrity, "content hash mismatch: " + path);
    eps.push_back(rd::read_episode_csv(path));
    eps.back().payload = row.value("payload", 0.0);
    eps.back().seed = row.value("seed", uint64_t{0});
  }
  rd::require(!eps.empty(), rd::ErrCode::contract, "no episodes in " + dir);
  return eps;
}

// ---- train -------------------------------------------------------------------

void cmd_train(const rd::RunConfig& cfg, const std::string& data_dir,
               const std::string& model) {
  rd::require(known_selector(model) && model != "asmc",
              rd::ErrCode::invalid_argument,
              "unknown trainable model selector: " + model);
  rd::Dataset ds =
      rd::build_dataset(load_data_dir(data_dir), cfg.dataset.S, cfg.dataset.L,
                        cfg.dataset.stride, cfg.seed);
  rd::write_resolved_config(cfg, cfg.out);
  const std::string ckpt = cfg.out + "/" + model + ".ckpt";

  const std::vector<rd::SegmentRef>& vrefs = ds.val.empty() ? ds.train : ds.val;
  const int64_t vbatch =
      std::min<int64_t>(256, static_cast<int64_t>(vrefs.size()));
  const uint64_t vseed = rd::derive_seed(cfg.seed, "reload-check");

  rd::TrainLog log;
  double val_mem = 0, val_reload = 0;
  if (model == "mlp") {
    rd::MlpModel m = rd::make_mlp_model(ds.norm, cfg.dataset.L,
                                        rd::derive_seed(cfg.seed, "init-mlp"));
    log = rd::train_mlp(m, ds, cfg.train.steps, cfg.train.batch, cfg.train.lr,
                        rd::derive_seed(cfg.seed, "train-mlp"));
    rd::save_mlp(ckpt, m);
    const rd::MlpModel r = rd::load_mlp(ckpt);
    val_mem = rd::mlp_eval_loss(m, ds, vrefs, vbatch, vseed);
    val_reload = rd::mlp_eval_loss(r, ds, vrefs, vbatch, vseed);
  } else {
    rd::DiffusionModel m = rd::make_diffusion_model(
        cfg.dataset.S, cfg.dataset.L, cfg.train.K, model == "proposed",
        ds.norm, rd::derive_seed(cfg.seed, "init-" + model));
    log = rd::train_diffusion(m, ds, cfg.train.steps, cfg.train.batch,
                              cfg.train.lr,
                              rd::derive_seed(cfg.seed, "train-" + model));
    rd::save_model(ckpt, m);
    const rd::DiffusionModel r = rd::load_model(ckpt);
    val_mem = rd::eval_loss(m, ds, vrefs, vbatch, vseed);
    val_reload = rd::eval_loss(r, ds, vrefs, vbatch, vseed);
  }
  rd::require(std::isfinite(log.back().train_loss) &&
                  std::isfinite(log.back().val_loss),
              rd::ErrCode::numeric, "training loss is not finite");
  rd::require(val_mem == val_reload, rd::ErrCode::integrity,
              "checkpoint reload changed the validation loss");

  const std::string hash = rd::config_hash(cfg);
  std::ostringstream csv;
  csv << "step,train_loss,val_loss,config\n";
  csv.precision(17);
  for (const rd::TrainLogRow& r : log)
    csv << r.step << ',' << r.train_loss << ',' << r.val_loss << ',' << hash
        << '\n';
  write_text(cfg.out + "/train_curve.csv", csv.str());

  json s;
  s["command"] = "train";
  s["model"] = model;
  s["config"] = hash;
  s["checkpoint"] = model + ".ckpt";
  s["steps"] = cfg.train.steps;
  s["batch"] = cfg.train.batch;
  s["lr"] = cfg.train.lr;
  s["final_train_loss"] = log.back().train_loss;
  s["val_first"] = log.front().val_loss;
  s["val_last"] = log.back().val_loss;
  s["val_improved"] = log.back().val_loss < log.front().val_loss;
  s["reload_bitexact"] = true;
  write_text(cfg.out + "/train_summary.json", s.dump(2) + "\n");
  std::printf("[train] %s: %lld steps, val %.6g -> %.6g, wrote %s\n",
              model.c_str(), static_cast<long long>(cfg.train.steps),
              log.front().val_loss, log.back().val_loss, ckpt.c_str());
}

// ---- eval-model ---------------------------------------------------------------

// Deterministic pilot episodes at the held-out evaluation payload. Identical
// across models and across reruns of the same config.
std::vector<rd::EvalSample> eval_samples(const rd::RunConfig& cfg) {
  std::vector<rd::Episode> eps;
  for (int i = 0; i < cfg.eval.seeds; ++i)
    eps.push_back(rd::collect_episode(
        cfg.plant, rd::PilotGains{}, cfg.eval.payload, cfg.eval.duration_s,
        rd::derive_seed(cfg.seed, "eval-ep-" + std::to_string(i))));
  return rd::build_eval_samples(eps, cfg.dataset.L, cfg.dataset.stride);
}

void print_model_rows(const std::vector<rd::ModelEvalRow>& rows) {
  std::printf("  %-20s %8s %8s %8s %8s %8s %8s %8s %8s | %8s %8s %8s\n",
              "model", "H1", "H2", "H3", "H4", "H5", "H6", "H7", "H8", "pos",
              "att", "man");
  for (const rd::ModelEvalRow& r : rows) {
    std::printf("  %-20s", r.model.c_str());
    for (int c = 0; c < 8; ++c) std::printf(" %8.4f", r.rmse[c]);
    std::printf(" | %8.4f %8.4f %8.4f\n", r.position, r.attitude,
                r.manipulator);
  }
}

void cmd_eval_model(const rd::RunConfig& cfg,
                    const std::vector<std::string>& ckpts) {
  const std::vector<rd::EvalSample> samples = eval_samples(cfg);

  std::vector<rd::ModelEvalRow> rows;
  // Reference rows double as a harness check: the oracle must score exactly
  // zero and the zero predictor must reproduce the target deviation.
  rows.push_back(rd::evaluate_oracle(samples));
  rd::require(rows.back().rmse.maxCoeff() == 0.0, rd::ErrCode::integrity,
              "oracle row must score zero");
  rows.push_back(rd::evaluate_target_mean(samples));
  const rd::Vec8 sd = rd::target_std(samples);
  rd::require((rows.back().rmse - sd).cwiseAbs().maxCoeff() < 1e-9,
              rd::ErrCode::integrity,
              "zero-predictor row must equal the target deviation");

  for (const std::string& p : ckpts) {
    const std::unique_ptr<rd::ResidualPredictor> pred = rd::load_predictor(p);
    rows.push_back(rd::evaluate_model(*pred, samples,
                                      rd::derive_seed(cfg.seed, "eval-model")));
  }

  rd::write_resolved_config(cfg, cfg.out);
  const std::string hash = rd::config_hash(cfg);
  rd::write_model_table(cfg.out + "/model_rmse.csv", rows, hash);

  json s;
  s["command"] = "eval-model";
  s["config"] = hash;
  s["samples"] = samples.size();
  s["payload"] = cfg.eval.payload;
  s["rows"] = json::array();
  for (const rd::ModelEvalRow& r : rows) {
    json row;
    row["model"] = r.model;
    row["position"] = r.position;
    row["attitude"] = r.attitude;
    row["manipulator"] = r.manipulator;
    s["rows"].push_back(row);
  }
  write_text(cfg.out + "/eval_summary.json", s.dump(2) + "\n");

  std::printf("[eval-model] %zu samples at payload %.3g kg\n", samples.size(),
              cfg.eval.payload);
  print_model_rows(rows);
}

// ---- eval-tracking --------------------------------------------------------------

// Mirrors the grid's per-trial construction so a flagged trial can be
// replayed bit-exactly for its tick log.
rd::TrackingResult rerun_trial(const rd::RunConfig& cfg,
                               const rd::ResidualPredictor& pred,
                               double payload, double speed, int ti) {
  const rd::Scenario sc({speed, payload, rd::ScenarioSpec{}.amplitude,
                         rd::ScenarioSpec{}.z_ref});
  const uint64_t seed = rd::derive_seed(
      cfg.seed, "track-p" + std::to_string(payload) + "-v" +
                    std::to_string(speed) + "-trial" + std::to_string(ti));
  rd::Plant plant(cfg.plant);
  plant.reset(sc.sample(0.0).chi_d, rd::Vec8::Zero());
  rd::LoopOptions opt;
  opt.gains = cfg.controller;
  opt.duration_s = sc.duration();
  opt.substeps = 2;
  opt.control_dt = 2.0 * cfg.plant.dt;
  return rd::run_closed_loop(
      plant, pred, [&](double t) { return sc.sample(t); },
      sc.payload_events(), opt, seed);
}

void cmd_eval_tracking(const rd::RunConfig& cfg, const std::string& model,
                       const char* ckpt) {
  rd::require(known_selector(model), rd::ErrCode::invalid_argument,
              "unknown model selector: " + model);
  std::unique_ptr<rd::ResidualPredictor> pred;
  if (model == "asmc") {
    rd::require(ckpt == nullptr, rd::ErrCode::invalid_argument,
                "asmc takes no checkpoint");
    pred = rd::make_zero_predictor();
  } else {
    rd::require(ckpt != nullptr, rd::ErrCode::invalid_argument,
                "model '" + model + "' needs a checkpoint");
    pred = rd::load_predictor(ckpt);
    rd::require(pred->name() == checkpoint_kind(model),
                rd::ErrCode::invalid_argument,
                "checkpoint kind '" + pred->name() +
                    "' does not match selector '" + model + "'");
  }

  rd::write_resolved_config(cfg, cfg.out);
  const std::string hash = rd::config_hash(cfg);
  std::vector<const rd::ResidualPredictor*> ms{pred.get()};
  std::vector<rd::ModelGrid> grids = rd::run_tracking_grid(
      ms, cfg.plant, cfg.controller, cfg.tracking.payloads,
      cfg.tracking.speeds, cfg.tracking.trials, cfg.seed);
  grids[0].model = model;  // report under the user-facing selector
  rd::write_tracking_csv(cfg.out + "/tracking.csv", grids, hash);
  rd::write_tracking_summary_json(cfg.out + "/tracking_summary.json", grids,
                                  hash);

  // Representative full tick log per cell (trial 0, deterministic replay).
  for (const rd::CellResult& cell : grids[0].cells) {
    const rd::TrackingResult res =
        rerun_trial(cfg, *pred, cell.payload, cell.speed, 0);
    char tname[64];
    std::snprintf(tname, sizeof tname, "trace_p%g_v%g.csv", cell.payload,
                  cell.speed);
    rd::write_log_csv(cfg.out + "/" + tname, res);
  }

  for (const rd::CellResult& cell : grids[0].cells) {
    for (size_t ti = 0; ti < cell.trials.size(); ++ti) {
      if (!cell.trials[ti].diverged) continue;
      const rd::TrackingResult res = rerun_trial(cfg, *pred, cell.payload,
                                                 cell.speed, static_cast<int>(ti));
      rd::write_log_csv(cfg.out + "/failure_ticks.csv", res);
      json f;
      f["command"] = "eval-tracking";
      f["model"] = model;
      f["payload"] = cell.payload;
      f["speed"] = cell.speed;
      f["trial"] = ti;
      f["seed"] = cell.trials[ti].seed;
      f["note"] = res.divergence_note;
      f["completed_s"] = res.completed_s;
      f["ticks_kept"] = res.rows.size();
      f["config"] = hash;
      write_text(cfg.out + "/failure.json", f.dump(2) + "\n");
      rd::fail(rd::ErrCode::diverged,
               "trial " + std::to_string(ti) + " diverged at payload " +
                   std::to_string(cell.payload) + ", speed " +
                   std::to_string(cell.speed) + "; see failure.json");
    }
  }

  std::printf("[eval-tracking] %s over %zu cells x %d trials\n", model.c_str(),
              grids[0].cells.size(), cfg.tracking.trials);
  for (const rd::CellResult& cell : grids[0].cells)
    std::printf("  payload %.2g speed %.2g: mean pos RMSE %.4f m (%d/%zu)\n",
                cell.payload, cell.speed, cell.mean_pos_rmse, cell.completed,
                cell.trials.size());
}

// ---- diagnose ---------------------------------------------------------------------

void cmd_diagnose(const rd::RunConfig& cfg,
                  const std::vector<std::string>& ckpts) {
  rd::require(!ckpts.empty(), rd::ErrCode::invalid_argument,
              "diagnose needs at least one checkpoint");
  const auto [lo_it, hi_it] = std::minmax_element(cfg.collect.payloads.begin(),
                                                  cfg.collect.payloads.end());
  rd::require(lo_it != cfg.collect.payloads.end() && *hi_it > *lo_it,
              rd::ErrCode::contract,
              "diagnose needs two distinct payload levels in collect.payloads");

  // Labeled two-regime evaluation set: the lightest and heaviest collection
  // payloads, two pilot episodes each.
  std::vector<rd::EvalSample> samples;
  std::vector<int> labels;
  for (int r = 0; r < 2; ++r) {
    const double payload = r == 0 ? *lo_it : *hi_it;
    for (int k = 0; k < 2; ++k) {
      const rd::Episode ep = rd::collect_episode(
          cfg.plant, rd::PilotGains{}, payload, cfg.eval.duration_s,
          rd::derive_seed(cfg.seed, "diag-r" + std::to_string(r) + "-e" +
                                        std::to_string(k)));
      std::vector<rd::EvalSample> s =
          rd::build_eval_samples({ep}, cfg.dataset.L, cfg.dataset.stride);
      for (rd::EvalSample& x : s) {
        samples.push_back(std::move(x));
        labels.push_back(r);
      }
    }
  }

  rd::write_resolved_config(cfg, cfg.out);
  const std::string hash = rd::config_hash(cfg);
  const int64_t rows = samples.front().window.rows();

  struct ModelDiag {
    std::string label;
    Eigen::MatrixXd projected;
    std::vector<double> errs;
    double pc1_ratio, ratio, acc;
  };
  std::vector<ModelDiag> diags;
  for (size_t i = 0; i < ckpts.size(); ++i) {
    const std::unique_ptr<rd::ResidualPredictor> pred =
        rd::load_predictor(ckpts[i]);
    rd::require(pred->history_len() == rows, rd::ErrCode::contract,
                "checkpoint window length does not match dataset.L");
    Eigen::MatrixXd X(static_cast<int64_t>(samples.size()), 8);
    std::vector<double> errs(samples.size());
    rd::Rng rng(rd::derive_seed(cfg.seed, "diag-pred-" + std::to_string(i)));
    for (size_t s = 0; s < samples.size(); ++s) {
      rd::HistoryBuffer buf(rows);
      for (int64_t k = 0; k < rows; ++k) {
        const Eigen::RowVectorXd row = samples[s].window.row(k);
        buf.push(row.segment<8>(0).transpose(), row.segment<8>(8).transpose(),
                 row.segment<8>(16).transpose());
      }
      const rd::Vec8 h = pred->predict(buf, rng);
      X.row(static_cast<int64_t>(s)) = h.transpose();
      errs[s] = (h - samples[s].target).norm();
    }
    const rd::Pca2 p = rd::pca_top2(X);
    ModelDiag d;
    d.label = pred->name();
    for (const ModelDiag& prev : diags)
      if (prev.label == pred->name()) {
        d.label = pred->name() + "#" + std::to_string(i);
        break;
      }
    d.projected = p.projected;
    d.errs = std::move(errs);
    d.pc1_ratio = p.pc1_ratio;
    d.ratio = rd::between_within_ratio(p.projected, labels);
    d.acc = rd::cluster_assignment_accuracy(p.projected, labels);
    diags.push_back(std::move(d));
  }

  std::ostringstream emb;
  emb.precision(17);
  emb << "model,pc1,pc2,regime,config\n";
  for (const ModelDiag& d : diags)
    for (int64_t s = 0; s < d.projected.rows(); ++s)
      emb << d.label << ',' << d.projected(s, 0) << ',' << d.projected(s, 1)
          << ',' << labels[static_cast<size_t>(s)] << ',' << hash << '\n';
  write_text(cfg.out + "/embedding.csv", emb.str());

  double err_hi = 1e-12;
  for (const ModelDiag& d : diags)
    err_hi = std::max(err_hi, *std::max_element(d.errs.begin(), d.errs.end()));
  const int bins = 20;
  std::ostringstream hist;
  hist.precision(17);
  hist << "model,bin_lo,bin_hi,count,config\n";
  for (const ModelDiag& d : diags) {
    const std::vector<int64_t> counts = rd::histogram(d.errs, 0, err_hi, bins);
    for (int b = 0; b < bins; ++b)
      hist << d.label << ',' << err_hi * b / bins << ','
           << err_hi * (b + 1) / bins << ',' << counts[static_cast<size_t>(b)]
           << ',' << hash << '\n';
  }
  write_text(cfg.out + "/error_hist.csv", hist.str());

  json s;
  s["command"] = "diagnose";
  s["config"] = hash;
  s["samples"] = samples.size();
  s["models"] = json::array();
  for (size_t i = 0; i < diags.size(); ++i) {
    const ModelDiag& d = diags[i];
    const double mean_err =
        std::accumulate(d.errs.begin(), d.errs.end(), 0.0) /
        static_cast<double>(d.errs.size());
    json row;
    row["name"] = d.label;
    row["checkpoint"] = ckpts[i];
    row["pc1_ratio"] = d.pc1_ratio;
    row["between_within"] = d.ratio;
    row["cluster_accuracy"] = d.acc;
    row["mean_error"] = mean_err;
    s["models"].push_back(row);
  }
  write_text(cfg.out + "/diagnose_summary.json", s.dump(2) + "\n");

  std::printf("[diagnose] %zu samples, %zu models\n", samples.size(),
              diags.size());
  for (const ModelDiag& d : diags)
    std::printf("  %-20s pc1 %.3f separation %.3f accuracy %.3f\n",
                d.label.c_str(), d.pc1_ratio, d.ratio, d.acc);
}

}  // namespace

// ---- C surface -----------------------------------------------------------------

extern "C" {

const char* rd_version(void) { return "0.1.0"; }

const char* rd_status_name(rd_status s) {
  switch (s) {
    case RD_OK: return "ok";
    case RD_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case RD_ERR_CONTRACT: return "contract";
    case RD_ERR_NUMERIC: return "numeric";
    case RD_ERR_PARSE: return "parse";
    case RD_ERR_IO: return "io";
    case RD_ERR_INTEGRITY: return "integrity";
    case RD_ERR_DIVERGED: return "diverged";
    case RD_ERR_VERSION: return "version";
    case RD_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* rd_last_error(void) { return t_err.c_str(); }

rd_status rd_config_load(const char* path, rd_config** out) {
  return guarded([&] {
    rd::require(path && out, rd::ErrCode::invalid_argument,
                "config_load: null argument");
    auto h = std::make_unique<rd_config>();
    h->cfg = rd::load_config(path);
    *out = h.release();
  });
}

rd_status rd_config_parse(const char* json_text, const char* context,
                          rd_config** out) {
  return guarded([&] {
    rd::require(json_text && out, rd::ErrCode::invalid_argument,
                "config_parse: null argument");
    auto h = std::make_unique<rd_config>();
    h->cfg = rd::config_from_json_text(json_text,
                                       context ? context : "<inline>");
    *out = h.release();
  });
}

void rd_config_free(rd_config* cfg) { delete cfg; }

const char* rd_config_resolved(const rd_config* cfg) {
  if (!cfg) return nullptr;
  try {
    if (cfg->resolved.empty()) cfg->resolved = rd::resolved_config(cfg->cfg);
    return cfg->resolved.c_str();
  } catch (...) {
    return nullptr;
  }
}

rd_status rd_config_hash(const rd_config* cfg, char* buf, size_t cap) {
  return guarded([&] {
    rd::require(cfg && buf, rd::ErrCode::invalid_argument,
                "config_hash: null argument");
    rd::require(cap >= 17, rd::ErrCode::invalid_argument,
                "config_hash: buffer must hold 17 bytes");
    const std::string h = rd::config_hash(cfg->cfg);
    std::snprintf(buf, cap, "%s", h.c_str());
  });
}

rd_status rd_config_set_seed(rd_config* cfg, uint64_t seed) {
  return guarded([&] {
    rd::require(cfg, rd::ErrCode::invalid_argument, "set_seed: null config");
    cfg->cfg.seed = seed;
    cfg->resolved.clear();
  });
}

rd_status rd_config_set_out(rd_config* cfg, const char* dir) {
  return guarded([&] {
    rd::require(cfg && dir && *dir, rd::ErrCode::invalid_argument,
                "set_out: null or empty directory");
    cfg->cfg.out = dir;
    cfg->resolved.clear();
  });
}

rd_status rd_model_open(const char* checkpoint_path, rd_model** out) {
  return guarded([&] {
    rd::require(checkpoint_path && out, rd::ErrCode::invalid_argument,
                "model_open: null argument");
    auto h = std::make_unique<rd_model>();
    h->pred = rd::load_predictor(checkpoint_path);
    h->name = h->pred->name();
    *out = h.release();
  });
}

rd_status rd_model_zero(rd_model** out) {
  return guarded([&] {
    rd::require(out, rd::ErrCode::invalid_argument, "model_zero: null out");
    auto h = std::make_unique<rd_model>();
    h->pred = rd::make_zero_predictor();
    h->name = h->pred->name();
    *out = h.release();
  });
}

void rd_model_free(rd_model* m) { delete m; }

const char* rd_model_name(const rd_model* m) {
  return m ? m->name.c_str() : nullptr;
}

int64_t rd_model_history(const rd_model* m) {
  return m ? m->pred->history_len() : -1;
}

rd_status rd_model_predict(const rd_model* m, const double* chi,
                           const double* chi_dot, const double* tau_prev,
                           int64_t rows, uint64_t seed, double out_h[8]) {
  return guarded([&] {
    rd::require(m && out_h, rd::ErrCode::invalid_argument,
                "model_predict: null argument");
    const int64_t need = m->pred->history_len();
    rd::require(need == 0 || rows == need, rd::ErrCode::invalid_argument,
                "model_predict: expected " + std::to_string(need) +
                    " rows, got " + std::to_string(rows));
    rd::require(need == 0 || (chi && chi_dot && tau_prev),
                rd::ErrCode::invalid_argument, "model_predict: null window");
    rd::HistoryBuffer buf(std::max<int64_t>(need, 1));
    for (int64_t i = 0; need > 0 && i < rows; ++i) {
      rd::Vec8 c, cd, tp;
      for (int j = 0; j < 8; ++j) {
        c[j] = chi[i * 8 + j];
        cd[j] = chi_dot[i * 8 + j];
        tp[j] = tau_prev[i * 8 + j];
      }
      buf.push(c, cd, tp);
    }
    rd::Rng rng(seed);
    const rd::Vec8 h = m->pred->predict(buf, rng);
    for (int j = 0; j < 8; ++j) out_h[j] = h[j];
  });
}

rd_status rd_run_collect(const rd_config* cfg, int full) {
  return guarded([&] {
    rd::require(cfg, rd::ErrCode::invalid_argument, "collect: null config");
    cmd_collect(cfg->cfg, full != 0);
  });
}

rd_status rd_run_train(const rd_config* cfg, const char* data_dir,
                       const char* model) {
  return guarded([&] {
    rd::require(cfg && data_dir && model, rd::ErrCode::invalid_argument,
                "train: null argument");
    cmd_train(cfg->cfg, data_dir, model);
  });
}

rd_status rd_run_eval_model(const rd_config* cfg,
                            const char* const* checkpoints,
                            size_t n_checkpoints) {
  return guarded([&] {
    rd::require(cfg && (n_checkpoints == 0 || checkpoints),
                rd::ErrCode::invalid_argument, "eval-model: null argument");
    std::vector<std::string> cks;
    for (size_t i = 0; i < n_checkpoints; ++i) {
      rd::require(checkpoints[i], rd::ErrCode::invalid_argument,
                  "eval-model: null checkpoint path");
      cks.emplace_back(checkpoints[i]);
    }
    cmd_eval_model(cfg->cfg, cks);
  });
}

rd_status rd_run_eval_tracking(const rd_config* cfg, const char* model,
                               const char* checkpoint) {
  return guarded([&] {
    rd::require(cfg && model, rd::ErrCode::invalid_argument,
                "eval-tracking: null argument");
    cmd_eval_tracking(cfg->cfg, model, checkpoint);
  });
}

rd_status rd_run_diagnose(const rd_config* cfg, const char* const* checkpoints,
                          size_t n_checkpoints) {
  return guarded([&] {
    rd::require(cfg && (n_checkpoints == 0 || checkpoints),
                rd::ErrCode::invalid_argument, "diagnose: null argument");
    std::vector<std::string> cks;
    for (size_t i = 0; i < n_checkpoints; ++i) {
      rd::require(checkpoints[i], rd::ErrCode::invalid_argument,
                  "diagnose: null checkpoint path");
      cks.emplace_back(checkpoints[i]);
    }
    cmd_diagnose(cfg->cfg, cks);
  });
}

}  // extern "C"
