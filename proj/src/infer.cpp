#include "infer.hpp"

#include <json.hpp>

namespace rd {

namespace {

template <typename StepFn, typename EvalFn>
TrainLog run_training(int64_t steps, uint64_t seed,
                      StepFn step_fn, EvalFn eval_fn) {
  require(steps >= 1, ErrCode::contract, "train: steps must be >= 1");
  TrainLog log;
  for (int64_t t = 1; t <= steps; ++t) {
    const uint64_t step_seed = derive_seed(seed, "step-" + std::to_string(t));
    const double loss = step_fn(step_seed, t);
    if (t == 1 || t % 100 == 0 || t == steps) {
      const double val =
          eval_fn(derive_seed(seed, "val-" + std::to_string(t)));
      log.push_back({t, loss, val});
    }
  }
  return log;
}

}  // namespace

TrainLog train_diffusion(DiffusionModel& m, const Dataset& ds, int64_t steps,
                         int64_t batch, double lr, uint64_t seed) {
  require(!ds.train.empty(), ErrCode::contract, "train: empty training split");
  nn::AdamConfig cfg;
  cfg.lr = lr;
  const std::vector<SegmentRef>& val = ds.val.empty() ? ds.train : ds.val;
  const int64_t val_batch = std::min<int64_t>(batch, 256);
  return run_training(
      steps, seed,
      [&](uint64_t s, int64_t t) {
        return train_step(m, ds, ds.train, batch, s, cfg, t);
      },
      [&](uint64_t s) { return eval_loss(m, ds, val, val_batch, s); });
}

TrainLog train_mlp(MlpModel& m, const Dataset& ds, int64_t steps,
                   int64_t batch, double lr, uint64_t seed) {
  require(!ds.train.empty(), ErrCode::contract, "train: empty training split");
  nn::AdamConfig cfg;
  cfg.lr = lr;
  const std::vector<SegmentRef>& val = ds.val.empty() ? ds.train : ds.val;
  const int64_t val_batch = std::min<int64_t>(batch, 256);
  return run_training(
      steps, seed,
      [&](uint64_t s, int64_t t) {
        return mlp_train_step(m, ds, ds.train, batch, s, cfg, t);
      },
      [&](uint64_t s) { return mlp_eval_loss(m, ds, val, val_batch, s); });
}

namespace {

class DiffusionPredictor final : public ResidualPredictor {
 public:
  explicit DiffusionPredictor(DiffusionModel m) : m_(std::move(m)) {}
  int64_t history_len() const override { return m_.L + 1; }
  Vec8 predict(const HistoryBuffer& buf, Rng& rng) const override {
    return predict_residual(m_, buf, rng);
  }
  std::string name() const override {
    return m_.conditioned ? "diffusion" : "diffusion-nocond";
  }

 private:
  DiffusionModel m_;
};

class MlpPredictor final : public ResidualPredictor {
 public:
  explicit MlpPredictor(MlpModel m) : m_(std::move(m)) {}
  int64_t history_len() const override { return m_.L + 1; }
  Vec8 predict(const HistoryBuffer& buf, Rng&) const override {
    const RowMat w = buf.window();
    const Eigen::RowVectorXd last = w.row(w.rows() - 1);
    return mlp_predict(m_, last.segment<8>(0).transpose(),
                       last.segment<8>(8).transpose(),
                       last.segment<8>(16).transpose());
  }
  std::string name() const override { return "mlp"; }

 private:
  MlpModel m_;
};

class ZeroPredictor final : public ResidualPredictor {
 public:
  int64_t history_len() const override { return 0; }
  Vec8 predict(const HistoryBuffer&, Rng&) const override {
    return Vec8::Zero();
  }
  std::string name() const override { return "asmc"; }
};

}  // namespace

std::unique_ptr<ResidualPredictor> make_diffusion_predictor(DiffusionModel m) {
  return std::make_unique<DiffusionPredictor>(std::move(m));
}

std::unique_ptr<ResidualPredictor> make_mlp_predictor(MlpModel m) {
  return std::make_unique<MlpPredictor>(std::move(m));
}

std::unique_ptr<ResidualPredictor> make_zero_predictor() {
  return std::make_unique<ZeroPredictor>();
}

std::unique_ptr<ResidualPredictor> load_predictor(const std::string& path) {
  nn::Checkpoint ck = nn::load_checkpoint(path);
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(ck.header_json);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrCode::parse, std::string("checkpoint header: ") + e.what());
  }
  const std::string kind = h.value("kind", "");
  if (kind == "diffusion") return make_diffusion_predictor(load_model(path));
  if (kind == "mlp") return make_mlp_predictor(load_mlp(path));
  fail(ErrCode::version, "checkpoint: unknown model kind '" + kind + "'");
}

}  // namespace rd
