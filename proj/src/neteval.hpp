#pragma once

#include "params.hpp"

// Plain single-sequence forward evaluation, kept in bit-exact agreement with
// the tape ops (same accumulation order); the agreement is pinned by tests.

namespace rd::nn {

// x: [T, Cin] row-major, causal left-zero-padded taps, kernel [k, Cin, Cout].
inline RowMat conv1d_eval(const RowMat& x, const Tensor& w, const Tensor& b,
                          int dilation) {
  const int64_t T = x.rows(), Cin = x.cols();
  const int64_t k = w.dim(0), Cout = w.dim(2);
  require(w.dim(1) == Cin, ErrCode::contract, "conv1d_eval: Cin mismatch");
  RowMat xcat = RowMat::Zero(T, k * Cin);
  for (int64_t t = 0; t < T; ++t)
    for (int64_t j = 0; j < k; ++j) {
      const int64_t tt = t - j * dilation;
      if (tt < 0) continue;
      xcat.row(t).segment(j * Cin, Cin) = x.row(tt);
    }
  Eigen::Map<const RowMat> Wm(w.v.data(), k * Cin, Cout);
  RowMat y = xcat * Wm;
  y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.v.data(), Cout);
  return y;
}

// Group statistics over the whole [T, C/G] block, matching the tape op.
inline RowMat group_norm_eval(const RowMat& x, const Tensor& gamma,
                              const Tensor& beta, int groups) {
  const int64_t T = x.rows(), C = x.cols();
  require(C % groups == 0, ErrCode::contract, "group_norm_eval: C % groups");
  const int64_t gc = C / groups;
  constexpr double kEps = 1e-5;
  RowMat y(T, C);
  for (int g = 0; g < groups; ++g) {
    double s1 = 0, s2 = 0;
    for (int64_t t = 0; t < T; ++t)
      for (int64_t c = g * gc; c < (g + 1) * gc; ++c) {
        s1 += x(t, c);
        s2 += x(t, c) * x(t, c);
      }
    const double n = static_cast<double>(T * gc);
    const double mean = s1 / n;
    const double var = s2 / n - mean * mean;
    const double istd = 1.0 / std::sqrt(var + kEps);
    for (int64_t t = 0; t < T; ++t)
      for (int64_t c = g * gc; c < (g + 1) * gc; ++c)
        y(t, c) = (x(t, c) - mean) * istd * gamma.v[static_cast<size_t>(c)] +
                  beta.v[static_cast<size_t>(c)];
  }
  return y;
}

inline void silu_inplace(RowMat& x) {
  for (int64_t i = 0; i < x.size(); ++i) {
    double* p = x.data() + i;
    *p = *p / (1.0 + std::exp(-*p));
  }
}

// y = x * W + b with W [in, out].
inline Eigen::VectorXd linear_eval(const Eigen::VectorXd& x, const Tensor& w,
                                   const Tensor& b) {
  const int64_t in = w.dim(0), out = w.dim(1);
  require(x.size() == in, ErrCode::contract, "linear_eval: size mismatch");
  Eigen::Map<const RowMat> Wm(w.v.data(), in, out);
  Eigen::VectorXd y = Wm.transpose() * x;
  y += Eigen::Map<const Eigen::VectorXd>(b.v.data(), out);
  return y;
}

}  // namespace rd::nn
