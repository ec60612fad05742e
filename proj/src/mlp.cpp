#include "mlp.hpp"

#include <json.hpp>

#include "neteval.hpp"

namespace rd {

using nlohmann::json;

MlpModel make_mlp_model(const Normalizer& norm, int64_t L, uint64_t seed) {
  MlpModel m;
  m.norm = norm;
  m.L = L;
  Rng rng(derive_seed(seed, "init"));
  m.params.declare("mlp.l1.w", {m.in, m.hidden}, m.in, rng);
  m.params.declare("mlp.l1.b", {m.hidden}, m.in, rng);
  m.params.declare("mlp.l2.w", {m.hidden, m.hidden}, m.hidden, rng);
  m.params.declare("mlp.l2.b", {m.hidden}, m.hidden, rng);
  m.params.declare("mlp.l3.w", {m.hidden, m.out}, m.hidden, rng);
  m.params.declare("mlp.l3.b", {m.out}, m.hidden, rng);
  return m;
}

int mlp_on_tape(nn::Tape& tp, const nn::ParamStore& ps, int x,
                const MlpModel&) {
  int h = tp.linear(x, tp.param(ps, "mlp.l1.w"), tp.param(ps, "mlp.l1.b"));
  h = tp.silu(h);
  h = tp.linear(h, tp.param(ps, "mlp.l2.w"), tp.param(ps, "mlp.l2.b"));
  h = tp.silu(h);
  return tp.linear(h, tp.param(ps, "mlp.l3.w"), tp.param(ps, "mlp.l3.b"));
}

namespace {

int mlp_loss(nn::Tape& tp, const MlpModel& m, const Dataset& ds,
             const std::vector<SegmentRef>& refs, int64_t batch, Rng& rng) {
  require(!refs.empty(), ErrCode::contract, "mlp: empty segment list");
  std::vector<int64_t> picks(static_cast<size_t>(batch));
  for (auto& p : picks)
    p = static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(refs.size())));
  Batch b = make_batch(ds, refs, picks);
  // Target is the residual at the conditioning tick: first window row.
  nn::Tensor y = nn::Tensor::zeros({batch, 8});
  for (int64_t j = 0; j < batch; ++j)
    for (int64_t c = 0; c < 8; ++c)
      y.v[static_cast<size_t>(j * 8 + c)] =
          b.target.v[static_cast<size_t>(j * ds.S * 8 + c)];
  const int yhat = mlp_on_tape(tp, m.params, tp.input(b.cond), m);
  return tp.mean_sq_diff(yhat, tp.input(y));
}

}  // namespace

double mlp_train_step(MlpModel& m, const Dataset& ds,
                      const std::vector<SegmentRef>& refs, int64_t batch,
                      uint64_t step_seed, const nn::AdamConfig& cfg,
                      int64_t adam_t) {
  Rng rng(step_seed);
  nn::Tape tp;
  const int loss = mlp_loss(tp, m, ds, refs, batch, rng);
  const double val = tp.scalar(loss);
  nn::GradMap grads = tp.backward(loss);
  nn::adam_step(m.params, grads, cfg, adam_t);
  return val;
}

double mlp_eval_loss(const MlpModel& m, const Dataset& ds,
                     const std::vector<SegmentRef>& refs, int64_t batch,
                     uint64_t seed) {
  Rng rng(seed);
  nn::Tape tp;
  return tp.scalar(mlp_loss(tp, m, ds, refs, batch, rng));
}

Vec8 mlp_predict(const MlpModel& m, const Vec8& chi, const Vec8& chi_dot,
                 const Vec8& tau_prev) {
  using namespace nn;
  Eigen::VectorXd x(24);
  x.segment<16>(0) = m.norm.norm_state(chi, chi_dot);
  x.segment<8>(16) = m.norm.norm_tau(tau_prev);
  Eigen::VectorXd h =
      linear_eval(x, m.params.at("mlp.l1.w").value, m.params.at("mlp.l1.b").value);
  for (int64_t i = 0; i < h.size(); ++i) h[i] *= sigmoid(h[i]);
  h = linear_eval(h, m.params.at("mlp.l2.w").value, m.params.at("mlp.l2.b").value);
  for (int64_t i = 0; i < h.size(); ++i) h[i] *= sigmoid(h[i]);
  h = linear_eval(h, m.params.at("mlp.l3.w").value, m.params.at("mlp.l3.b").value);
  return m.norm.denorm_h(h);
}

namespace {

json norm_json(const Normalizer& n) {
  auto vec = [](const double* p, int len) {
    json a = json::array();
    for (int i = 0; i < len; ++i) a.push_back(p[i]);
    return a;
  };
  return {{"state_mean", vec(n.state_mean.data(), 16)},
          {"state_std", vec(n.state_std.data(), 16)},
          {"tau_mean", vec(n.tau_mean.data(), 8)},
          {"tau_std", vec(n.tau_std.data(), 8)},
          {"h_mean", vec(n.h_mean.data(), 8)},
          {"h_std", vec(n.h_std.data(), 8)}};
}

Normalizer norm_from_json(const json& j) {
  Normalizer n;
  auto vec = [&](const char* key, double* p, int len) {
    const json& a = j.at(key);
    require(a.is_array() && static_cast<int>(a.size()) == len,
            ErrCode::integrity, std::string("checkpoint: bad ") + key);
    for (int i = 0; i < len; ++i) p[i] = a[static_cast<size_t>(i)].get<double>();
  };
  vec("state_mean", n.state_mean.data(), 16);
  vec("state_std", n.state_std.data(), 16);
  vec("tau_mean", n.tau_mean.data(), 8);
  vec("tau_std", n.tau_std.data(), 8);
  vec("h_mean", n.h_mean.data(), 8);
  vec("h_std", n.h_std.data(), 8);
  return n;
}

}  // namespace

void save_mlp(const std::string& path, const MlpModel& m) {
  json h;
  h["kind"] = "mlp";
  h["L"] = m.L;
  h["normalizer"] = norm_json(m.norm);
  nn::save_checkpoint(path, h.dump(), m.params);
}

MlpModel load_mlp(const std::string& path) {
  nn::Checkpoint ck = nn::load_checkpoint(path);
  json h;
  try {
    h = json::parse(ck.header_json);
  } catch (const json::exception& e) {
    fail(ErrCode::parse, std::string("checkpoint header: ") + e.what());
  }
  require(h.value("kind", "") == std::string("mlp"), ErrCode::version,
          "checkpoint: not a regressor model");
  MlpModel m;
  m.L = h.at("L").get<int64_t>();
  m.norm = norm_from_json(h.at("normalizer"));
  m.params = std::move(ck.store);
  return m;
}

}  // namespace rd
