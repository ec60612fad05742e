#pragma once

#include "dataset.hpp"
#include "tape.hpp"

namespace rd {

// Rolling window of the most recent raw (chi, chi_dot, tau_prev) observations.
// Capacity is the history length the encoder was trained with (L+1).
class HistoryBuffer {
 public:
  explicit HistoryBuffer(int64_t capacity);
  void push(const Vec8& chi, const Vec8& chi_dot, const Vec8& tau_prev);
  void clear();
  bool full() const { return fill_ == capacity_; }
  int64_t fill() const { return fill_; }
  int64_t capacity() const { return capacity_; }
  // Chronological [capacity, 24] window of raw values; buffer must be full.
  RowMat window() const;

 private:
  int64_t capacity_, head_ = 0, fill_ = 0;
  RowMat buf_;
};

struct EncoderShape {
  int64_t in = 24, hidden = 64, out = 32;
  int groups = 8;
  int dil1 = 1, dil2 = 2;
};

// Parameter names carry the "enc." prefix inside the shared store.
void declare_encoder(nn::ParamStore& ps, const EncoderShape& sh, Rng& rng);

// Tape route used in training: hist is a [B, T, 24] node of normalized
// history rows. Returns a [B, out] node bounded in (-1, 1) by the final tanh.
int encoder_on_tape(nn::Tape& tp, const nn::ParamStore& ps, int hist,
                    const EncoderShape& sh);

// Inference route: normalized [T, 24] window in, descriptor out.
Eigen::VectorXd encoder_eval(const nn::ParamStore& ps, const RowMat& hist,
                             const EncoderShape& sh);

// Normalizes a raw full buffer window and evaluates the descriptor.
Eigen::VectorXd encode(const HistoryBuffer& buf, const nn::ParamStore& ps,
                       const EncoderShape& sh, const Normalizer& norm);

// Normalized [T, 24] rows from a raw window (states and inputs separately).
RowMat normalize_window(const RowMat& raw, const Normalizer& norm);

}  // namespace rd
