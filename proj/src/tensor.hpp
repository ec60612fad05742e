#pragma once

#include <cstdint>
#include <numeric>

#include "common.hpp"

namespace rd::nn {

// Dense row-major tensor of doubles. Shapes are small (rank <= 3 in practice).
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<double> v;

  Tensor() = default;
  explicit Tensor(std::vector<int64_t> s) : shape(std::move(s)) {
    v.assign(static_cast<size_t>(count(shape)), 0.0);
  }

  static int64_t count(const std::vector<int64_t>& s) {
    int64_t n = 1;
    for (int64_t d : s) {
      require(d > 0, ErrCode::invalid_argument, "tensor dims must be positive");
      n *= d;
    }
    return n;
  }

  static Tensor zeros(std::vector<int64_t> s) { return Tensor(std::move(s)); }

  static Tensor full(std::vector<int64_t> s, double value) {
    Tensor t(std::move(s));
    std::fill(t.v.begin(), t.v.end(), value);
    return t;
  }

  static Tensor from(std::vector<int64_t> s, std::vector<double> data) {
    Tensor t;
    t.shape = std::move(s);
    require(count(t.shape) == static_cast<int64_t>(data.size()), ErrCode::invalid_argument,
            "tensor data size does not match shape");
    t.v = std::move(data);
    return t;
  }

  int64_t numel() const { return static_cast<int64_t>(v.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int64_t dim(int i) const { return shape.at(static_cast<size_t>(i)); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  // View as a rows x cols row-major matrix; total size must match.
  Eigen::Map<RowMat> mat(int64_t rows, int64_t cols) {
    require(rows * cols == numel(), ErrCode::contract, "tensor mat view size mismatch");
    return Eigen::Map<RowMat>(v.data(), rows, cols);
  }
  Eigen::Map<const RowMat> mat(int64_t rows, int64_t cols) const {
    require(rows * cols == numel(), ErrCode::contract, "tensor mat view size mismatch");
    return Eigen::Map<const RowMat>(v.data(), rows, cols);
  }

  bool all_finite() const {
    for (double x : v)
      if (!std::isfinite(x)) return false;
    return true;
  }
};

}  // namespace rd::nn
