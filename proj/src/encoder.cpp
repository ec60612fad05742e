#include "encoder.hpp"

#include "neteval.hpp"

namespace rd {

HistoryBuffer::HistoryBuffer(int64_t capacity)
    : capacity_(capacity), buf_(RowMat::Zero(capacity, 24)) {
  require(capacity >= 1, ErrCode::contract, "history: capacity must be >= 1");
}

void HistoryBuffer::push(const Vec8& chi, const Vec8& chi_dot,
                         const Vec8& tau_prev) {
  buf_.row(head_).segment<8>(0) = chi.transpose();
  buf_.row(head_).segment<8>(8) = chi_dot.transpose();
  buf_.row(head_).segment<8>(16) = tau_prev.transpose();
  head_ = (head_ + 1) % capacity_;
  if (fill_ < capacity_) ++fill_;
}

void HistoryBuffer::clear() {
  head_ = 0;
  fill_ = 0;
  buf_.setZero();
}

RowMat HistoryBuffer::window() const {
  require(full(), ErrCode::contract, "history: buffer not full");
  RowMat w(capacity_, 24);
  for (int64_t i = 0; i < capacity_; ++i)
    w.row(i) = buf_.row((head_ + i) % capacity_);
  return w;
}

void declare_encoder(nn::ParamStore& ps, const EncoderShape& sh, Rng& rng) {
  ps.declare("enc.conv1.w", {3, sh.in, sh.hidden}, 3 * sh.in, rng);
  ps.declare("enc.conv1.b", {sh.hidden}, 3 * sh.in, rng);
  ps.declare_const("enc.gn1.g", {sh.hidden}, 1.0);
  ps.declare_const("enc.gn1.b", {sh.hidden}, 0.0);
  ps.declare("enc.conv2.w", {3, sh.hidden, sh.hidden}, 3 * sh.hidden, rng);
  ps.declare("enc.conv2.b", {sh.hidden}, 3 * sh.hidden, rng);
  ps.declare_const("enc.gn2.g", {sh.hidden}, 1.0);
  ps.declare_const("enc.gn2.b", {sh.hidden}, 0.0);
  ps.declare("enc.out.w", {sh.hidden, sh.out}, sh.hidden, rng);
  ps.declare("enc.out.b", {sh.out}, sh.hidden, rng);
}

int encoder_on_tape(nn::Tape& tp, const nn::ParamStore& ps, int hist,
                    const EncoderShape& sh) {
  int h = tp.conv1d(hist, tp.param(ps, "enc.conv1.w"),
                    tp.param(ps, "enc.conv1.b"), sh.dil1);
  h = tp.group_norm(h, tp.param(ps, "enc.gn1.g"), tp.param(ps, "enc.gn1.b"),
                    sh.groups);
  h = tp.silu(h);
  h = tp.conv1d(h, tp.param(ps, "enc.conv2.w"), tp.param(ps, "enc.conv2.b"),
                sh.dil2);
  h = tp.group_norm(h, tp.param(ps, "enc.gn2.g"), tp.param(ps, "enc.gn2.b"),
                    sh.groups);
  h = tp.silu(h);
  h = tp.last_row(h);
  h = tp.linear(h, tp.param(ps, "enc.out.w"), tp.param(ps, "enc.out.b"));
  return tp.tanh_(h);
}

Eigen::VectorXd encoder_eval(const nn::ParamStore& ps, const RowMat& hist,
                             const EncoderShape& sh) {
  using namespace nn;
  RowMat h = conv1d_eval(hist, ps.at("enc.conv1.w").value,
                         ps.at("enc.conv1.b").value, sh.dil1);
  h = group_norm_eval(h, ps.at("enc.gn1.g").value, ps.at("enc.gn1.b").value,
                      sh.groups);
  silu_inplace(h);
  h = conv1d_eval(h, ps.at("enc.conv2.w").value, ps.at("enc.conv2.b").value,
                  sh.dil2);
  h = group_norm_eval(h, ps.at("enc.gn2.g").value, ps.at("enc.gn2.b").value,
                      sh.groups);
  silu_inplace(h);
  Eigen::VectorXd last = h.row(h.rows() - 1).transpose();
  Eigen::VectorXd r =
      linear_eval(last, ps.at("enc.out.w").value, ps.at("enc.out.b").value);
  for (int64_t i = 0; i < r.size(); ++i) r[i] = std::tanh(r[i]);
  return r;
}

RowMat normalize_window(const RowMat& raw, const Normalizer& norm) {
  require(raw.cols() == 24, ErrCode::contract, "window: expected 24 columns");
  RowMat z(raw.rows(), 24);
  for (int64_t i = 0; i < raw.rows(); ++i) {
    const Vec8 chi = raw.row(i).segment<8>(0).transpose();
    const Vec8 chid = raw.row(i).segment<8>(8).transpose();
    const Vec8 tau = raw.row(i).segment<8>(16).transpose();
    z.row(i).segment<16>(0) = norm.norm_state(chi, chid).transpose();
    z.row(i).segment<8>(16) = norm.norm_tau(tau).transpose();
  }
  return z;
}

Eigen::VectorXd encode(const HistoryBuffer& buf, const nn::ParamStore& ps,
                       const EncoderShape& sh, const Normalizer& norm) {
  return encoder_eval(ps, normalize_window(buf.window(), norm), sh);
}

}  // namespace rd
