#pragma once

#include <functional>

#include "params.hpp"

namespace rd::nn {

// Reverse-mode autodiff over a linear tape. Node creation order is the
// forward order; backward() visits nodes in the exact reverse order, so the
// graph is always topologically consistent. A parameter may be bound at most
// once per tape; gradient accumulation still happens when the resulting node
// feeds several consumers.
class Tape {
 public:
  struct Node {
    std::string op;
    Tensor val;
    Tensor grad;  // allocated on first accumulation during backward
    bool need_grad = false;
    bool has_grad = false;
    std::string param;  // set for parameter leaves
    std::vector<int> parents;
    std::function<void(Tape&, int)> back;
  };

  int input(Tensor t);
  int param(const ParamStore& store, const std::string& name);

  // y = x W + b with x seen as [rows, in]; keeps x's leading dims.
  int linear(int x, int w, int b);
  // Causal dilated conv over [B, T, Cin] with kernel [k, Cin, Cout]; tap j
  // reads j*dilation steps into the past, zero padding on the left.
  int conv1d(int x, int w, int b, int dilation);
  // Group normalization over [B, T, C]: per (sample, group) statistics across
  // T and the channels of the group, then per-channel affine.
  int group_norm(int x, int gamma, int beta, int groups);
  int silu(int x);
  int tanh_(int x);
  int add(int a, int b);
  int sub(int a, int b);
  int mul(int a, int b);
  int scale(int x, double c);
  // [B, T, C] + [B, C] broadcast over T.
  int add_rows(int x, int e);
  // [B, T, C] -> [B, C], last time step.
  int last_row(int x);
  // Concatenate [B, Fi] blocks along the feature axis.
  int concat(const std::vector<int>& xs);
  int sum(int x);
  int mean_sq_diff(int a, int b);

  const Tensor& value(int id) const { return node(id).val; }
  double scalar(int id) const;
  size_t size() const { return nodes_.size(); }

  // Backpropagates from a scalar node; returns the gradient for every bound
  // parameter. Node gradients are cleared first, so backward may run once per
  // tape only.
  GradMap backward(int loss);

  const Node& node(int id) const;
  Node& node(int id);
  void accumulate(int id, const double* g, int64_t n);

 private:
  int push(Node n);
  void check_finite(const Tensor& t, const std::string& op) const;
  std::vector<Node> nodes_;
  std::vector<std::string> bound_params_;
  bool ran_backward_ = false;
};

double sigmoid(double x);

}  // namespace rd::nn
