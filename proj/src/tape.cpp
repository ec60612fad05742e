#include "tape.hpp"

#include <cmath>
#include <cstring>
#include <memory>

namespace rd::nn {

namespace {
using EMap = Eigen::Map<RowMat>;
using CMap = Eigen::Map<const RowMat>;
using CRow = Eigen::Map<const Eigen::RowVectorXd>;
}  // namespace

double sigmoid(double x) {
  if (x >= 0.0) {
    const double z = std::exp(-x);
    return 1.0 / (1.0 + z);
  }
  const double z = std::exp(x);
  return z / (1.0 + z);
}

const Tape::Node& Tape::node(int id) const {
  require(id >= 0 && static_cast<size_t>(id) < nodes_.size(), ErrCode::contract,
          "tape: node id out of range");
  return nodes_[static_cast<size_t>(id)];
}

Tape::Node& Tape::node(int id) {
  require(id >= 0 && static_cast<size_t>(id) < nodes_.size(), ErrCode::contract,
          "tape: node id out of range");
  return nodes_[static_cast<size_t>(id)];
}

void Tape::check_finite(const Tensor& t, const std::string& op) const {
  for (double v : t.v) {
    if (!std::isfinite(v)) {
      fail(ErrCode::numeric, op + ": non-finite output (node " +
                                 std::to_string(nodes_.size()) + ")");
    }
  }
}

int Tape::push(Node n) {
  check_finite(n.val, n.op);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

double Tape::scalar(int id) const {
  const Node& n = node(id);
  require(n.val.numel() == 1, ErrCode::contract, "tape: node is not scalar");
  return n.val.v[0];
}

void Tape::accumulate(int id, const double* g, int64_t n) {
  Node& nd = node(id);
  if (!nd.need_grad) return;
  require(n == nd.val.numel(), ErrCode::contract,
          "tape: gradient size mismatch for op " + nd.op);
  if (!nd.has_grad) {
    nd.grad = Tensor::zeros(nd.val.shape);
    nd.has_grad = true;
  }
  for (int64_t i = 0; i < n; ++i) nd.grad.v[static_cast<size_t>(i)] += g[i];
}

int Tape::input(Tensor t) {
  Node n;
  n.op = "input";
  n.val = std::move(t);
  return push(std::move(n));
}

int Tape::param(const ParamStore& store, const std::string& name) {
  for (const auto& p : bound_params_) {
    require(p != name, ErrCode::contract,
            "tape: parameter bound twice: " + name);
  }
  Node n;
  n.op = "param";
  n.val = store.at(name).value;
  n.need_grad = true;
  n.param = name;
  bound_params_.push_back(name);
  return push(std::move(n));
}

int Tape::linear(int x, int w, int b) {
  const Tensor& xv = node(x).val;
  const Tensor& wv = node(w).val;
  const Tensor& bv = node(b).val;
  require(wv.rank() == 2, ErrCode::contract, "linear: weight must be rank 2");
  const int64_t in = wv.dim(0);
  const int64_t out = wv.dim(1);
  require(bv.rank() == 1 && bv.dim(0) == out, ErrCode::contract,
          "linear: bias shape mismatch");
  require(xv.rank() >= 1 && xv.dim(xv.rank() - 1) == in, ErrCode::contract,
          "linear: input feature dim mismatch");
  const int64_t rows = xv.numel() / in;

  Tensor y;
  y.shape = xv.shape;
  y.shape.back() = out;
  y.v.resize(static_cast<size_t>(rows * out));
  EMap Y(y.v.data(), rows, out);
  CMap X(xv.v.data(), rows, in);
  CMap W(wv.v.data(), in, out);
  Y.noalias() = X * W;
  Y.rowwise() += CRow(bv.v.data(), out);

  Node n;
  n.op = "linear";
  n.val = std::move(y);
  n.parents = {x, w, b};
  n.need_grad =
      node(x).need_grad || node(w).need_grad || node(b).need_grad;
  n.back = [rows, in, out](Tape& tp, int self) {
    Node& nd = tp.node(self);
    const int xp = nd.parents[0], wp = nd.parents[1], bp = nd.parents[2];
    CMap G(nd.grad.v.data(), rows, out);
    if (tp.node(xp).need_grad) {
      CMap W(tp.node(wp).val.v.data(), in, out);
      RowMat GX = G * W.transpose();
      tp.accumulate(xp, GX.data(), GX.size());
    }
    if (tp.node(wp).need_grad) {
      CMap X(tp.node(xp).val.v.data(), rows, in);
      RowMat GW = X.transpose() * G;
      tp.accumulate(wp, GW.data(), GW.size());
    }
    if (tp.node(bp).need_grad) {
      Eigen::RowVectorXd GB = G.colwise().sum();
      tp.accumulate(bp, GB.data(), GB.size());
    }
  };
  return push(std::move(n));
}

int Tape::conv1d(int x, int w, int b, int dilation) {
  const Tensor& xv = node(x).val;
  const Tensor& wv = node(w).val;
  const Tensor& bv = node(b).val;
  require(xv.rank() == 3, ErrCode::contract, "conv1d: input must be [B,T,C]");
  require(wv.rank() == 3, ErrCode::contract,
          "conv1d: kernel must be [k,Cin,Cout]");
  require(dilation >= 1, ErrCode::contract, "conv1d: dilation must be >= 1");
  const int64_t B = xv.dim(0), T = xv.dim(1), Cin = xv.dim(2);
  const int64_t k = wv.dim(0), Cout = wv.dim(2);
  require(wv.dim(1) == Cin, ErrCode::contract,
          "conv1d: kernel Cin mismatch");
  require(bv.rank() == 1 && bv.dim(0) == Cout, ErrCode::contract,
          "conv1d: bias shape mismatch");

  // Tap-concatenated input: row (b,t) holds [x(b,t), x(b,t-d), ...], zeros
  // where the window runs past the start. One gemm then covers all taps.
  auto xcat = std::make_shared<RowMat>(RowMat::Zero(B * T, k * Cin));
  for (int64_t bb = 0; bb < B; ++bb) {
    for (int64_t t = 0; t < T; ++t) {
      double* row = xcat->data() + (bb * T + t) * (k * Cin);
      for (int64_t j = 0; j < k; ++j) {
        const int64_t tt = t - j * dilation;
        if (tt < 0) continue;
        std::memcpy(row + j * Cin, xv.v.data() + (bb * T + tt) * Cin,
                    sizeof(double) * static_cast<size_t>(Cin));
      }
    }
  }
  Tensor y = Tensor::zeros({B, T, Cout});
  EMap Y(y.v.data(), B * T, Cout);
  CMap Wm(wv.v.data(), k * Cin, Cout);
  Y.noalias() = (*xcat) * Wm;
  Y.rowwise() += CRow(bv.v.data(), Cout);

  Node n;
  n.op = "conv1d";
  n.val = std::move(y);
  n.parents = {x, w, b};
  n.need_grad =
      node(x).need_grad || node(w).need_grad || node(b).need_grad;
  n.back = [xcat, B, T, Cin, Cout, k, dilation](Tape& tp, int self) {
    Node& nd = tp.node(self);
    const int xp = nd.parents[0], wp = nd.parents[1], bp = nd.parents[2];
    CMap G(nd.grad.v.data(), B * T, Cout);
    if (tp.node(wp).need_grad) {
      RowMat GW = xcat->transpose() * G;
      tp.accumulate(wp, GW.data(), GW.size());
    }
    if (tp.node(bp).need_grad) {
      Eigen::RowVectorXd GB = G.colwise().sum();
      tp.accumulate(bp, GB.data(), GB.size());
    }
    if (tp.node(xp).need_grad) {
      CMap Wm(tp.node(wp).val.v.data(), k * Cin, Cout);
      RowMat GXcat = G * Wm.transpose();
      Tensor gx = Tensor::zeros({B, T, Cin});
      for (int64_t bb = 0; bb < B; ++bb) {
        for (int64_t t = 0; t < T; ++t) {
          const double* row = GXcat.data() + (bb * T + t) * (k * Cin);
          for (int64_t j = 0; j < k; ++j) {
            const int64_t tt = t - j * dilation;
            if (tt < 0) continue;
            double* dst = gx.v.data() + (bb * T + tt) * Cin;
            const double* src = row + j * Cin;
            for (int64_t c = 0; c < Cin; ++c) dst[c] += src[c];
          }
        }
      }
      tp.accumulate(xp, gx.v.data(), gx.numel());
    }
  };
  return push(std::move(n));
}

int Tape::group_norm(int x, int gamma, int beta, int groups) {
  const Tensor& xv = node(x).val;
  const Tensor& gv = node(gamma).val;
  const Tensor& bv = node(beta).val;
  require(xv.rank() == 3, ErrCode::contract,
          "group_norm: input must be [B,T,C]");
  const int64_t B = xv.dim(0), T = xv.dim(1), C = xv.dim(2);
  require(groups >= 1 && C % groups == 0, ErrCode::contract,
          "group_norm: channels not divisible by groups");
  require(gv.rank() == 1 && gv.dim(0) == C, ErrCode::contract,
          "group_norm: gamma shape mismatch");
  require(bv.rank() == 1 && bv.dim(0) == C, ErrCode::contract,
          "group_norm: beta shape mismatch");
  const int64_t Cg = C / groups;
  const int64_t N = T * Cg;
  const double eps = 1e-5;

  Tensor y = Tensor::zeros({B, T, C});
  auto xhat = std::make_shared<Tensor>(Tensor::zeros({B, T, C}));
  auto istd = std::make_shared<Tensor>(Tensor::zeros({B, (int64_t)groups}));
  for (int64_t bb = 0; bb < B; ++bb) {
    for (int64_t g = 0; g < groups; ++g) {
      double mean = 0.0;
      for (int64_t t = 0; t < T; ++t)
        for (int64_t c = g * Cg; c < (g + 1) * Cg; ++c)
          mean += xv.v[(bb * T + t) * C + c];
      mean /= static_cast<double>(N);
      double var = 0.0;
      for (int64_t t = 0; t < T; ++t)
        for (int64_t c = g * Cg; c < (g + 1) * Cg; ++c) {
          const double d = xv.v[(bb * T + t) * C + c] - mean;
          var += d * d;
        }
      var /= static_cast<double>(N);
      const double is = 1.0 / std::sqrt(var + eps);
      istd->v[bb * groups + g] = is;
      for (int64_t t = 0; t < T; ++t)
        for (int64_t c = g * Cg; c < (g + 1) * Cg; ++c) {
          const size_t idx = (bb * T + t) * C + c;
          const double xh = (xv.v[idx] - mean) * is;
          xhat->v[idx] = xh;
          y.v[idx] = gv.v[static_cast<size_t>(c)] * xh +
                     bv.v[static_cast<size_t>(c)];
        }
    }
  }

  Node n;
  n.op = "group_norm";
  n.val = std::move(y);
  n.parents = {x, gamma, beta};
  n.need_grad = node(x).need_grad || node(gamma).need_grad ||
                node(beta).need_grad;
  n.back = [xhat, istd, B, T, C, Cg, groups](Tape& tp, int self) {
    Node& nd = tp.node(self);
    const int xp = nd.parents[0], gp = nd.parents[1], bp = nd.parents[2];
    const Tensor& gy = nd.grad;
    const Tensor& gv = tp.node(gp).val;
    const int64_t N = T * Cg;
    if (tp.node(xp).need_grad) {
      Tensor gx = Tensor::zeros({B, T, C});
      for (int64_t bb = 0; bb < B; ++bb) {
        for (int64_t g = 0; g < groups; ++g) {
          double s1 = 0.0, s2 = 0.0;
          for (int64_t t = 0; t < T; ++t)
            for (int64_t c = g * Cg; c < (g + 1) * Cg; ++c) {
              const size_t idx = (bb * T + t) * C + c;
              const double dxh = gy.v[idx] * gv.v[static_cast<size_t>(c)];
              s1 += dxh;
              s2 += dxh * xhat->v[idx];
            }
          const double is = istd->v[bb * groups + g];
          const double inv_n = 1.0 / static_cast<double>(N);
          for (int64_t t = 0; t < T; ++t)
            for (int64_t c = g * Cg; c < (g + 1) * Cg; ++c) {
              const size_t idx = (bb * T + t) * C + c;
              const double dxh = gy.v[idx] * gv.v[static_cast<size_t>(c)];
              gx.v[idx] =
                  is * (dxh - s1 * inv_n - xhat->v[idx] * s2 * inv_n);
            }
        }
      }
      tp.accumulate(xp, gx.v.data(), gx.numel());
    }
    if (tp.node(gp).need_grad || tp.node(bp).need_grad) {
      Tensor gg = Tensor::zeros({C});
      Tensor gb = Tensor::zeros({C});
      for (int64_t bb = 0; bb < B; ++bb)
        for (int64_t t = 0; t < T; ++t)
          for (int64_t c = 0; c < C; ++c) {
            const size_t idx = (bb * T + t) * C + c;
            gg.v[static_cast<size_t>(c)] += gy.v[idx] * xhat->v[idx];
            gb.v[static_cast<size_t>(c)] += gy.v[idx];
          }
      tp.accumulate(gp, gg.v.data(), gg.numel());
      tp.accumulate(bp, gb.v.data(), gb.numel());
    }
  };
  return push(std::move(n));
}

int Tape::silu(int x) {
  const Tensor& xv = node(x).val;
  Tensor y = Tensor::zeros(xv.shape);
  for (size_t i = 0; i < xv.v.size(); ++i)
    y.v[i] = xv.v[i] * sigmoid(xv.v[i]);
  Node n;
  n.op = "silu";
  n.val = std::move(y);
  n.parents = {x};
  n.need_grad = node(x).need_grad;
  n.back = [](Tape& tp, int self) {
    Node& nd = tp.node(self);
    const Tensor& xv = tp.node(nd.parents[0]).val;
    Tensor g = Tensor::zeros(xv.shape);
    for (size_t i = 0; i < xv.v.size(); ++i) {
      const double s = sigmoid(xv.v[i]);
      g.v[i] = nd.grad.v[i] * s * (1.0 + xv.v[i] * (1.0 - s));
    }
    tp.accumulate(nd.parents[0], g.v.data(), g.numel());
  };
  return push(std::move(n));
}

int Tape::tanh_(int x) {
  const Tensor& xv = node(x).val;
  Tensor y = Tensor::zeros(xv.shape);
  for (size_t i = 0; i < xv.v.size(); ++i) y.v[i] = std::tanh(xv.v[i]);
  Node n;
  n.op = "tanh";
  n.val = std::move(y);
  n.parents = {x};
  n.need_grad = node(x).need_grad;
  n.back = [](Tape& tp, int self) {
    Node& nd = tp.node(self);
    Tensor g = Tensor::zeros(nd.val.shape);
    for (size_t i = 0; i < g.v.size(); ++i)
      g.v[i] = nd.grad.v[i] * (1.0 - nd.val.v[i] * nd.val.v[i]);
    tp.accumulate(nd.parents[0], g.v.data(), g.numel());
  };
  return push(std::move(n));
}

int Tape::add(int a, int b) {
  const Tensor& av = node(a).val;
  const Tensor& bv = node(b).val;
  require(av.same_shape(bv), ErrCode::contract, "add: shape mismatch");
  Tensor y = Tensor::zeros(av.shape);
  for (size_t i = 0; i < y.v.size(); ++i) y.v[i] = av.v[i] + bv.v[i];
  Node n;
  n.op = "add";
  n.val = std::move(y);
  n.parents = {a, b};
  n.need_grad = node(a).need_grad || node(b).need_grad;
  n.back = [](Tape& tp, int self) {
    Node& nd = tp.node(self);
    tp.accumulate(nd.parents[0], nd.grad.v.data(), nd.grad.numel());
    tp.accumulate(nd.parents[1], nd.grad.v.data(), nd.grad.numel());
  };
  return push(std::move(n));
}

int Tape::sub(int a, int b) {
  const Tensor& av = node(a).val;
  const Tensor& bv = node(b).val;
  require(av.same_shape(bv), ErrCode::contract, "sub: shape mismatch");
  Tensor y = Tensor::zeros(av.shape);
  for (size_t i = 0; i < y.v.size(); ++i) y.v[i] = av.v[i] - bv.v[i];
  Node n;
  n.op = "sub";
  n.val = std::move(y);
  n.parents = {a, b};
  n.need_grad = node(a).need_grad || node(b).need_grad;
  n.back = [](Tape& tp, int self) {
    Node& nd = tp.node(self);
    tp.accumulate(nd.parents[0], nd.grad.v.data(), nd.grad.numel());
    Tensor g = Tensor::zeros(nd.grad.shape);
    for (size_t i = 0; i < g.v.size(); ++i) g.v[i] = -nd.grad.v[i];
    tp.accumulate(nd.parents[1], g.v.data(), g.numel());
  };
  return push(std::move(n));
}

int Tape::mul(int a, int b) {
  const Tensor& av = node(a).val;
  const Tensor& bv = node(b).val;
  require(av.same_shape(bv), ErrCode::contract, "mul: shape mismatch");
  Tensor y = Tensor::zeros(av.shape);
  for (size_t i = 0; i < y.v.size(); ++i) y.v[i] = av.v[i] * bv.v[i];
  Node n;
  n.op = "mul";
  n.val = std::move(y);
  n.parents = {a, b};
  n.need_grad = node(a).need_grad || node(b).need_grad;
  n.back = [](Tape& tp, int self) {
    Node& nd = tp.node(self);
    const Tensor& av = tp.node(nd.parents[0]).val;
    const Tensor& bv = tp.node(nd.parents[1]).val;
    Tensor g = Tensor::zeros(nd.grad.shape);
    for (size_t i = 0; i < g.v.size(); ++i) g.v[i] = nd.grad.v[i] * bv.v[i];
    tp.accumulate(nd.parents[0], g.v.data(), g.numel());
    for (size_t i = 0; i < g.v.size(); ++i) g.v[i] = nd.grad.v[i] * av.v[i];
    tp.accumulate(nd.parents[1], g.v.data(), g.numel());
  };
  return push(std::move(n));
}

int Tape::scale(int x, double c) {
  const Tensor& xv = node(x).val;
  Tensor y = Tensor::zeros(xv.shape);
  for (size_t i = 0; i < y.v.size(); ++i) y.v[i] = xv.v[i] * c;
  Node n;
  n.op = "scale";
  n.val = std::move(y);
  n.parents = {x};
  n.need_grad = node(x).need_grad;
  n.back = [c](Tape& tp, int self) {
    Node& nd = tp.node(self);
    Tensor g = Tensor::zeros(nd.grad.shape);
    for (size_t i = 0; i < g.v.size(); ++i) g.v[i] = nd.grad.v[i] * c;
    tp.accumulate(nd.parents[0], g.v.data(), g.numel());
  };
  return push(std::move(n));
}

int Tape::add_rows(int x, int e) {
  const Tensor& xv = node(x).val;
  const Tensor& ev = node(e).val;
  require(xv.rank() == 3, ErrCode::contract, "add_rows: lhs must be [B,T,C]");
  require(ev.rank() == 2 && ev.dim(0) == xv.dim(0) && ev.dim(1) == xv.dim(2),
          ErrCode::contract, "add_rows: rhs must be [B,C]");
  const int64_t B = xv.dim(0), T = xv.dim(1), C = xv.dim(2);
  Tensor y = Tensor::zeros(xv.shape);
  for (int64_t bb = 0; bb < B; ++bb)
    for (int64_t t = 0; t < T; ++t)
      for (int64_t c = 0; c < C; ++c)
        y.v[(bb * T + t) * C + c] =
            xv.v[(bb * T + t) * C + c] + ev.v[bb * C + c];
  Node n;
  n.op = "add_rows";
  n.val = std::move(y);
  n.parents = {x, e};
  n.need_grad = node(x).need_grad || node(e).need_grad;
  n.back = [B, T, C](Tape& tp, int self) {
    Node& nd = tp.node(self);
    tp.accumulate(nd.parents[0], nd.grad.v.data(), nd.grad.numel());
    if (tp.node(nd.parents[1]).need_grad) {
      Tensor ge = Tensor::zeros({B, C});
      for (int64_t bb = 0; bb < B; ++bb)
        for (int64_t t = 0; t < T; ++t)
          for (int64_t c = 0; c < C; ++c)
            ge.v[bb * C + c] += nd.grad.v[(bb * T + t) * C + c];
      tp.accumulate(nd.parents[1], ge.v.data(), ge.numel());
    }
  };
  return push(std::move(n));
}

int Tape::last_row(int x) {
  const Tensor& xv = node(x).val;
  require(xv.rank() == 3, ErrCode::contract, "last_row: input must be [B,T,C]");
  const int64_t B = xv.dim(0), T = xv.dim(1), C = xv.dim(2);
  Tensor y = Tensor::zeros({B, C});
  for (int64_t bb = 0; bb < B; ++bb)
    for (int64_t c = 0; c < C; ++c)
      y.v[bb * C + c] = xv.v[(bb * T + (T - 1)) * C + c];
  Node n;
  n.op = "last_row";
  n.val = std::move(y);
  n.parents = {x};
  n.need_grad = node(x).need_grad;
  n.back = [B, T, C](Tape& tp, int self) {
    Node& nd = tp.node(self);
    Tensor gx = Tensor::zeros({B, T, C});
    for (int64_t bb = 0; bb < B; ++bb)
      for (int64_t c = 0; c < C; ++c)
        gx.v[(bb * T + (T - 1)) * C + c] = nd.grad.v[bb * C + c];
    tp.accumulate(nd.parents[0], gx.v.data(), gx.numel());
  };
  return push(std::move(n));
}

int Tape::concat(const std::vector<int>& xs) {
  require(!xs.empty(), ErrCode::contract, "concat: no inputs");
  const int64_t B = node(xs[0]).val.dim(0);
  int64_t F = 0;
  bool need = false;
  for (int id : xs) {
    const Tensor& t = node(id).val;
    require(t.rank() == 2 && t.dim(0) == B, ErrCode::contract,
            "concat: inputs must be [B,F] with equal B");
    F += t.dim(1);
    need = need || node(id).need_grad;
  }
  Tensor y = Tensor::zeros({B, F});
  int64_t off = 0;
  for (int id : xs) {
    const Tensor& t = node(id).val;
    const int64_t f = t.dim(1);
    for (int64_t bb = 0; bb < B; ++bb)
      std::memcpy(y.v.data() + bb * F + off, t.v.data() + bb * f,
                  sizeof(double) * static_cast<size_t>(f));
    off += f;
  }
  Node n;
  n.op = "concat";
  n.val = std::move(y);
  n.parents = xs;
  n.need_grad = need;
  n.back = [B, F](Tape& tp, int self) {
    Node& nd = tp.node(self);
    int64_t off = 0;
    for (int pid : nd.parents) {
      const int64_t f = tp.node(pid).val.dim(1);
      if (tp.node(pid).need_grad) {
        Tensor g = Tensor::zeros({B, f});
        for (int64_t bb = 0; bb < B; ++bb)
          std::memcpy(g.v.data() + bb * f, nd.grad.v.data() + bb * F + off,
                      sizeof(double) * static_cast<size_t>(f));
        tp.accumulate(pid, g.v.data(), g.numel());
      }
      off += f;
    }
  };
  return push(std::move(n));
}

int Tape::sum(int x) {
  const Tensor& xv = node(x).val;
  double s = 0.0;
  for (double v : xv.v) s += v;
  Tensor y = Tensor::full({1}, s);
  Node n;
  n.op = "sum";
  n.val = std::move(y);
  n.parents = {x};
  n.need_grad = node(x).need_grad;
  n.back = [](Tape& tp, int self) {
    Node& nd = tp.node(self);
    const Tensor& xv = tp.node(nd.parents[0]).val;
    Tensor g = Tensor::full(xv.shape, nd.grad.v[0]);
    tp.accumulate(nd.parents[0], g.v.data(), g.numel());
  };
  return push(std::move(n));
}

int Tape::mean_sq_diff(int a, int b) {
  const Tensor& av = node(a).val;
  const Tensor& bv = node(b).val;
  require(av.same_shape(bv), ErrCode::contract,
          "mean_sq_diff: shape mismatch");
  const double inv_n = 1.0 / static_cast<double>(av.numel());
  double s = 0.0;
  for (size_t i = 0; i < av.v.size(); ++i) {
    const double d = av.v[i] - bv.v[i];
    s += d * d;
  }
  Tensor y = Tensor::full({1}, s * inv_n);
  Node n;
  n.op = "mean_sq_diff";
  n.val = std::move(y);
  n.parents = {a, b};
  n.need_grad = node(a).need_grad || node(b).need_grad;
  n.back = [inv_n](Tape& tp, int self) {
    Node& nd = tp.node(self);
    const Tensor& av = tp.node(nd.parents[0]).val;
    const Tensor& bv = tp.node(nd.parents[1]).val;
    const double g0 = nd.grad.v[0];
    Tensor g = Tensor::zeros(av.shape);
    for (size_t i = 0; i < g.v.size(); ++i)
      g.v[i] = g0 * 2.0 * inv_n * (av.v[i] - bv.v[i]);
    tp.accumulate(nd.parents[0], g.v.data(), g.numel());
    for (size_t i = 0; i < g.v.size(); ++i) g.v[i] = -g.v[i];
    tp.accumulate(nd.parents[1], g.v.data(), g.numel());
  };
  return push(std::move(n));
}

GradMap Tape::backward(int loss) {
  Node& L = node(loss);
  require(L.val.numel() == 1, ErrCode::contract,
          "tape: backward target must be scalar");
  require(!ran_backward_, ErrCode::contract,
          "tape: backward may run only once");
  ran_backward_ = true;
  L.grad = Tensor::full(L.val.shape, 1.0);
  L.has_grad = true;
  for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) {
    Node& nd = nodes_[static_cast<size_t>(id)];
    if (nd.has_grad && nd.back) nd.back(*this, id);
  }
  GradMap out;
  for (Node& nd : nodes_) {
    if (nd.param.empty()) continue;
    if (nd.has_grad) {
      for (double g : nd.grad.v)
        require(std::isfinite(g), ErrCode::numeric,
                "tape: non-finite gradient for " + nd.param);
      out.emplace(nd.param, std::move(nd.grad));
    } else {
      out.emplace(nd.param, Tensor::zeros(nd.val.shape));
    }
  }
  return out;
}

}  // namespace rd::nn
