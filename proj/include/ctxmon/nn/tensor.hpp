#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ctxmon/common.hpp"

namespace ctxmon::nn {

// Row-major 64-bit float tensor. Everything in the training core is double
// so finite-difference gradient checks stay sharp.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
    data.assign(numel(shape), 0.0);
  }

  static std::size_t numel(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
  }
  std::size_t size() const { return data.size(); }
  void zero() { std::fill(data.begin(), data.end(), 0.0); }
};

// Dense 2-D view used by the layers; rows = batch or time.
struct Mat {
  std::size_t rows = 0, cols = 0;
  std::vector<double> d;

  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), d(r * c, 0.0) {}

  double& at(std::size_t r, std::size_t c) { return d[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return d[r * cols + c]; }
  double* row(std::size_t r) { return d.data() + r * cols; }
  const double* row(std::size_t r) const { return d.data() + r * cols; }
};

// out = a * b
Mat matmul(const Mat& a, const Mat& b);
// out = a * b^T
Mat matmul_nt(const Mat& a, const Mat& b);
// out = a^T * b
Mat matmul_tn(const Mat& a, const Mat& b);

// Named parameter with its gradient and Adam state slots.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;

  Param() = default;
  Param(std::string n, std::vector<std::size_t> shape)
      : name(std::move(n)), value(std::move(shape)) {
    grad = Tensor(value.shape);
  }
};

}  // namespace ctxmon::nn
