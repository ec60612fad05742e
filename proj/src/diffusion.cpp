#include "diffusion.hpp"

#include <cmath>

#include <json.hpp>

#include "neteval.hpp"

namespace rd {

using nlohmann::json;

namespace {
constexpr double kPi = 3.14159265358979323846;
}

NoiseSchedule make_schedule(int K) {
  require(K >= 1, ErrCode::contract, "schedule: K must be >= 1");
  NoiseSchedule s;
  s.K = K;
  s.beta.resize(static_cast<size_t>(K));
  s.alpha.resize(static_cast<size_t>(K));
  s.alpha_bar.resize(static_cast<size_t>(K));
  constexpr double s0 = 0.008;
  auto f = [&](double k) {
    const double c = std::cos(((k / K + s0) / (1.0 + s0)) * kPi / 2.0);
    return c * c;
  };
  const double f0 = f(0.0);
  double prev = 1.0, run = 1.0;
  for (int k = 1; k <= K; ++k) {
    const double cur = f(static_cast<double>(k)) / f0;
    double beta = 1.0 - cur / prev;
    beta = std::min(0.999, std::max(1e-4, beta));
    prev = cur;
    run *= 1.0 - beta;
    s.beta[static_cast<size_t>(k - 1)] = beta;
    s.alpha[static_cast<size_t>(k - 1)] = 1.0 - beta;
    s.alpha_bar[static_cast<size_t>(k - 1)] = run;
  }
  return s;
}

double abar(const NoiseSchedule& s, int k) {
  require(k >= 0 && k <= s.K, ErrCode::contract, "schedule: k out of range");
  return k == 0 ? 1.0 : s.alpha_bar[static_cast<size_t>(k - 1)];
}

nn::Tensor q_sample(const nn::Tensor& h0, int k, const nn::Tensor& eps,
                    const NoiseSchedule& s) {
  require(k >= 1 && k <= s.K, ErrCode::contract, "q_sample: k out of range");
  require(h0.shape == eps.shape, ErrCode::contract, "q_sample: shape mismatch");
  const double a = std::sqrt(abar(s, k));
  const double b = std::sqrt(1.0 - abar(s, k));
  nn::Tensor out = h0;
  for (size_t i = 0; i < out.v.size(); ++i)
    out.v[i] = a * h0.v[i] + b * eps.v[i];
  return out;
}

Eigen::VectorXd k_embedding(int k, int64_t dim) {
  require(dim % 2 == 0, ErrCode::contract, "k_embedding: dim must be even");
  Eigen::VectorXd e(dim);
  const int64_t half = dim / 2;
  for (int64_t i = 0; i < half; ++i) {
    const double w = std::pow(10000.0, -static_cast<double>(i) /
                                           static_cast<double>(half));
    e[i] = std::sin(k * w);
    e[half + i] = std::cos(k * w);
  }
  return e;
}

namespace {

std::string blk(int i, const char* leaf) {
  return "den.blk" + std::to_string(i) + "." + leaf;
}

}  // namespace

DiffusionModel make_diffusion_model(int64_t S, int64_t L, int K,
                                    bool conditioned, const Normalizer& norm,
                                    uint64_t seed) {
  DiffusionModel m;
  m.S = S;
  m.L = L;
  m.K = K;
  m.conditioned = conditioned;
  m.sched = make_schedule(K);
  m.norm = norm;
  Rng rng(derive_seed(seed, "init"));
  declare_encoder(m.params, m.enc, rng);
  const DenoiserShape& d = m.den;
  m.params.declare("den.in.w", {1, d.data_dim, d.channels}, d.data_dim, rng);
  m.params.declare("den.in.b", {d.channels}, d.data_dim, rng);
  for (size_t i = 0; i < d.dilations.size(); ++i) {
    const int bi = static_cast<int>(i);
    m.params.declare(blk(bi, "conv.w"), {3, d.channels, d.channels},
                     3 * d.channels, rng);
    m.params.declare(blk(bi, "conv.b"), {d.channels}, 3 * d.channels, rng);
    m.params.declare_const(blk(bi, "gn.g"), {d.channels}, 1.0);
    m.params.declare_const(blk(bi, "gn.b"), {d.channels}, 0.0);
    m.params.declare(blk(bi, "emb.w"), {d.cond_dim, d.channels}, d.cond_dim,
                     rng);
    m.params.declare(blk(bi, "emb.b"), {d.channels}, d.cond_dim, rng);
  }
  // The residual blocks accumulate variance along the skip path; a small
  // output projection keeps the untrained prediction near zero so the initial
  // loss sits at the standardized-noise floor.
  for (double& v :
       m.params.declare("den.out.w", {1, d.channels, d.data_dim}, d.channels,
                        rng).v)
    v *= 0.1;
  for (double& v :
       m.params.declare("den.out.b", {d.data_dim}, d.channels, rng).v)
    v *= 0.1;
  return m;
}

int denoiser_on_tape(nn::Tape& tp, const nn::ParamStore& ps, int hk, int cond,
                     const DenoiserShape& sh) {
  int h = tp.conv1d(hk, tp.param(ps, "den.in.w"), tp.param(ps, "den.in.b"), 1);
  for (size_t i = 0; i < sh.dilations.size(); ++i) {
    const int bi = static_cast<int>(i);
    int t = tp.conv1d(h, tp.param(ps, blk(bi, "conv.w")),
                      tp.param(ps, blk(bi, "conv.b")), sh.dilations[i]);
    t = tp.group_norm(t, tp.param(ps, blk(bi, "gn.g")),
                      tp.param(ps, blk(bi, "gn.b")), sh.groups);
    int e = tp.linear(cond, tp.param(ps, blk(bi, "emb.w")),
                      tp.param(ps, blk(bi, "emb.b")));
    t = tp.add_rows(t, e);
    t = tp.silu(t);
    h = tp.add(h, t);
  }
  return tp.conv1d(h, tp.param(ps, "den.out.w"), tp.param(ps, "den.out.b"), 1);
}

RowMat denoiser_eval(const nn::ParamStore& ps, const RowMat& hk,
                     const Eigen::VectorXd& cond, const DenoiserShape& sh) {
  using namespace nn;
  RowMat h = conv1d_eval(hk, ps.at("den.in.w").value, ps.at("den.in.b").value, 1);
  for (size_t i = 0; i < sh.dilations.size(); ++i) {
    const int bi = static_cast<int>(i);
    RowMat t = conv1d_eval(h, ps.at(blk(bi, "conv.w")).value,
                           ps.at(blk(bi, "conv.b")).value, sh.dilations[i]);
    t = group_norm_eval(t, ps.at(blk(bi, "gn.g")).value,
                        ps.at(blk(bi, "gn.b")).value, sh.groups);
    const Eigen::VectorXd e = linear_eval(cond, ps.at(blk(bi, "emb.w")).value,
                                          ps.at(blk(bi, "emb.b")).value);
    t.rowwise() += e.transpose();
    silu_inplace(t);
    h += t;
  }
  return conv1d_eval(h, ps.at("den.out.w").value, ps.at("den.out.b").value, 1);
}

namespace {

// Builds the loss graph for one batch; shared by train_step and eval_loss.
// Returns the loss node; ks records the per-sample diffusion steps.
int build_loss(nn::Tape& tp, const DiffusionModel& m, const Dataset& ds,
               const std::vector<SegmentRef>& refs, int64_t batch, Rng& rng,
               std::vector<int>& ks) {
  require(!refs.empty(), ErrCode::contract, "train: empty segment list");
  require(batch >= 1, ErrCode::contract, "train: batch must be >= 1");
  std::vector<int64_t> picks(static_cast<size_t>(batch));
  for (auto& p : picks)
    p = static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(refs.size())));
  Batch b = make_batch(ds, refs, picks);

  nn::Tensor eps = nn::Tensor::zeros({batch, m.S, 8});
  for (auto& v : eps.v) v = rng.normal();
  nn::Tensor hk = nn::Tensor::zeros({batch, m.S, 8});
  nn::Tensor kemb = nn::Tensor::zeros({batch, 32});
  ks.resize(static_cast<size_t>(batch));
  for (int64_t j = 0; j < batch; ++j) {
    const int k = 1 + static_cast<int>(rng.uniform_int(static_cast<uint64_t>(m.K)));
    ks[static_cast<size_t>(j)] = k;
    const double a = std::sqrt(abar(m.sched, k));
    const double c = std::sqrt(1.0 - abar(m.sched, k));
    const int64_t n = m.S * 8;
    for (int64_t i = 0; i < n; ++i)
      hk.v[static_cast<size_t>(j * n + i)] =
          a * b.target.v[static_cast<size_t>(j * n + i)] +
          c * eps.v[static_cast<size_t>(j * n + i)];
    const Eigen::VectorXd ke = k_embedding(k);
    for (int64_t i = 0; i < 32; ++i)
      kemb.v[static_cast<size_t>(j * 32 + i)] = ke[i];
  }

  int r = encoder_on_tape(tp, m.params, tp.input(b.hist), m.enc);
  if (!m.conditioned) r = tp.scale(r, 0.0);
  const int cond =
      tp.concat({tp.input(b.cond), r, tp.input(kemb)});
  const int eps_hat =
      denoiser_on_tape(tp, m.params, tp.input(hk), cond, m.den);
  return tp.mean_sq_diff(eps_hat, tp.input(eps));
}

std::string ks_brief(const std::vector<int>& ks) {
  std::string out;
  for (size_t i = 0; i < ks.size() && i < 8; ++i)
    out += (i ? "," : "") + std::to_string(ks[i]);
  if (ks.size() > 8) out += ",...";
  return out;
}

}  // namespace

double train_step(DiffusionModel& m, const Dataset& ds,
                  const std::vector<SegmentRef>& refs, int64_t batch,
                  uint64_t step_seed, const nn::AdamConfig& cfg,
                  int64_t adam_t) {
  Rng rng(step_seed);
  nn::Tape tp;
  std::vector<int> ks;
  try {
    const int loss = build_loss(tp, m, ds, refs, batch, rng, ks);
    const double val = tp.scalar(loss);
    nn::GradMap grads = tp.backward(loss);
    nn::adam_step(m.params, grads, cfg, adam_t);
    return val;
  } catch (const Error& e) {
    if (e.code() != ErrCode::numeric) throw;
    fail(ErrCode::numeric, "train_step aborted (batch seed " +
                               std::to_string(step_seed) + ", ks " +
                               ks_brief(ks) + "): " + e.what());
  }
}

double eval_loss(const DiffusionModel& m, const Dataset& ds,
                 const std::vector<SegmentRef>& refs, int64_t batch,
                 uint64_t seed) {
  Rng rng(seed);
  nn::Tape tp;
  std::vector<int> ks;
  return tp.scalar(build_loss(tp, m, ds, refs, batch, rng, ks));
}

RowMat sample_core(const DiffusionModel& m, const Eigen::VectorXd& cond24,
                   const Eigen::VectorXd& r, Rng& rng) {
  require(cond24.size() == 24, ErrCode::contract, "sample: cond must be 24");
  require(r.size() == m.enc.out, ErrCode::contract, "sample: bad descriptor");
  Eigen::VectorXd cond(m.den.cond_dim);
  cond.segment(0, 24) = cond24;
  cond.segment(24, m.enc.out) = r;

  RowMat h(m.S, 8);
  for (int64_t t = 0; t < m.S; ++t)
    for (int64_t c = 0; c < 8; ++c) h(t, c) = rng.normal();

  for (int k = m.K; k >= 1; --k) {
    cond.segment(24 + m.enc.out, 32) = k_embedding(k);
    const RowMat eps = denoiser_eval(m.params, h, cond, m.den);
    const double ak = m.sched.alpha[static_cast<size_t>(k - 1)];
    const double bk = m.sched.beta[static_cast<size_t>(k - 1)];
    const double scale_eps = (1.0 - ak) / std::sqrt(1.0 - abar(m.sched, k));
    h = (h - scale_eps * eps) / std::sqrt(ak);
    if (k > 1) {
      const double sd = std::sqrt(bk);
      for (int64_t t = 0; t < m.S; ++t)
        for (int64_t c = 0; c < 8; ++c) h(t, c) += sd * rng.normal();
    }
  }
  return h;
}

RowMat sample_sequence(const DiffusionModel& m, const HistoryBuffer& buf,
                       Rng& rng) {
  require(buf.capacity() == m.L + 1, ErrCode::contract,
          "sample: buffer capacity does not match the model history length");
  const RowMat z = normalize_window(buf.window(), m.norm);
  Eigen::VectorXd r = Eigen::VectorXd::Zero(m.enc.out);
  if (m.conditioned) r = encoder_eval(m.params, z, m.enc);
  const Eigen::VectorXd cond24 = z.row(z.rows() - 1).transpose();
  RowMat h = sample_core(m, cond24, r, rng);
  for (int64_t t = 0; t < m.S; ++t)
    h.row(t) = m.norm.denorm_h(h.row(t).transpose()).transpose();
  return h;
}

Vec8 predict_residual(const DiffusionModel& m, const HistoryBuffer& buf,
                      Rng& rng) {
  return sample_sequence(m, buf, rng).row(0).transpose();
}

namespace {

json normalizer_to_json(const Normalizer& n) {
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

Normalizer normalizer_from_json(const json& j) {
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

void save_model(const std::string& path, const DiffusionModel& m) {
  json h;
  h["kind"] = "diffusion";
  h["S"] = m.S;
  h["L"] = m.L;
  h["K"] = m.K;
  h["conditioned"] = m.conditioned;
  json beta = json::array();
  for (double b : m.sched.beta) beta.push_back(b);
  h["beta"] = beta;
  h["normalizer"] = normalizer_to_json(m.norm);
  nn::save_checkpoint(path, h.dump(), m.params);
}

DiffusionModel load_model(const std::string& path) {
  nn::Checkpoint ck = nn::load_checkpoint(path);
  json h;
  try {
    h = json::parse(ck.header_json);
  } catch (const json::exception& e) {
    fail(ErrCode::parse, std::string("checkpoint header: ") + e.what());
  }
  require(h.value("kind", "") == std::string("diffusion"), ErrCode::version,
          "checkpoint: not a diffusion model");
  DiffusionModel m;
  m.S = h.at("S").get<int64_t>();
  m.L = h.at("L").get<int64_t>();
  m.K = h.at("K").get<int>();
  m.conditioned = h.at("conditioned").get<bool>();
  m.sched = make_schedule(m.K);
  const json& beta = h.at("beta");
  require(static_cast<int>(beta.size()) == m.K, ErrCode::integrity,
          "checkpoint: schedule length mismatch");
  for (int k = 0; k < m.K; ++k)
    require(std::fabs(beta[static_cast<size_t>(k)].get<double>() -
                      m.sched.beta[static_cast<size_t>(k)]) < 1e-12,
            ErrCode::integrity, "checkpoint: schedule disagrees with K");
  m.norm = normalizer_from_json(h.at("normalizer"));
  m.params = std::move(ck.store);
  return m;
}

}  // namespace rd
