// Command-line front end. Flag parsing only; every piece of real work happens
// behind the C API so the binary exercises exactly what an embedding gets.

#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <resdiff.h>

namespace {

int fail(rd_status st) {
  std::fprintf(stderr, "error (%s): %s\n", rd_status_name(st),
               rd_last_error());
  return static_cast<int>(st);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Residual-dynamics pipeline: data collection, diffusion/regressor "
      "training, prediction and tracking evaluation, regime diagnostics."};
  app.require_subcommand(1);

  std::string config_path, out_dir, data_dir;
  std::string model = "proposed";
  uint64_t seed = 0;
  bool full = false, no_regime = false;
  std::vector<std::string> ckpts;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "run configuration (JSON file)")
        ->required();
    cmd->add_option("--seed", seed, "master seed override");
    cmd->add_option("--out", out_dir, "output directory override");
  };

  CLI::App* c_collect = app.add_subcommand(
      "collect", "record seeded pilot episodes across the payload grid");
  add_common(c_collect);
  c_collect->add_flag("--full", full, "long-protocol episode durations");

  CLI::App* c_train = app.add_subcommand(
      "train", "train a residual model on a collected dataset");
  add_common(c_train);
  c_train->add_option("--data", data_dir, "collect output directory")
      ->required();
  c_train->add_option("--model", model, "proposed | diffusion-nocond | mlp");
  c_train->add_flag("--no-regime", no_regime,
                    "train the history-blind diffusion ablation");

  CLI::App* c_eval = app.add_subcommand(
      "eval-model",
      "per-channel prediction RMSE on the held-out evaluation payload");
  add_common(c_eval);
  c_eval->add_option("--ckpt", ckpts, "checkpoint path (repeatable)");

  CLI::App* c_track = app.add_subcommand(
      "eval-tracking", "closed-loop tracking grid for one model");
  add_common(c_track);
  c_track->add_option("--model", model,
                      "proposed | diffusion-nocond | mlp | asmc");
  c_track->add_option("--ckpt", ckpts, "checkpoint for the selected model");

  CLI::App* c_diag = app.add_subcommand(
      "diagnose", "regime embedding and prediction-error histograms");
  add_common(c_diag);
  c_diag->add_option("--ckpt", ckpts, "checkpoint path (repeatable)")
      ->required();

  CLI11_PARSE(app, argc, argv);
  CLI::App* sub = app.get_subcommands().front();

  rd_config* raw = nullptr;
  rd_status st = rd_config_load(config_path.c_str(), &raw);
  if (st != RD_OK) return fail(st);
  const std::unique_ptr<rd_config, void (*)(rd_config*)> cfg(raw,
                                                             rd_config_free);
  if (sub->count("--seed")) {
    st = rd_config_set_seed(cfg.get(), seed);
    if (st != RD_OK) return fail(st);
  }
  if (sub->count("--out")) {
    st = rd_config_set_out(cfg.get(), out_dir.c_str());
    if (st != RD_OK) return fail(st);
  }

  std::vector<const char*> ck_ptrs;
  ck_ptrs.reserve(ckpts.size());
  for (const std::string& s : ckpts) ck_ptrs.push_back(s.c_str());

  if (sub == c_collect) {
    st = rd_run_collect(cfg.get(), full ? 1 : 0);
  } else if (sub == c_train) {
    if (no_regime) {
      if (model == "mlp") {
        std::fprintf(stderr,
                     "error (invalid_argument): --no-regime selects the "
                     "diffusion ablation and does not apply to mlp\n");
        return static_cast<int>(RD_ERR_INVALID_ARGUMENT);
      }
      model = "diffusion-nocond";
    }
    st = rd_run_train(cfg.get(), data_dir.c_str(), model.c_str());
  } else if (sub == c_eval) {
    st = rd_run_eval_model(cfg.get(), ck_ptrs.data(), ck_ptrs.size());
  } else if (sub == c_track) {
    if (ckpts.size() > 1) {
      std::fprintf(stderr,
                   "error (invalid_argument): eval-tracking takes one "
                   "checkpoint\n");
      return static_cast<int>(RD_ERR_INVALID_ARGUMENT);
    }
    st = rd_run_eval_tracking(cfg.get(), model.c_str(),
                              ckpts.empty() ? nullptr : ck_ptrs.front());
  } else {
    st = rd_run_diagnose(cfg.get(), ck_ptrs.data(), ck_ptrs.size());
  }
  return st == RD_OK ? 0 : fail(st);
}
