#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "garment/error.hpp"

namespace garment::nn {

/// Dense row-major matrix of doubles. Heavy products go through Eigen maps;
/// everything else is plain loops.
struct Tensor2 {
  int rows = 0, cols = 0;
  std::vector<double> v;

  Tensor2() = default;
  Tensor2(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, 0.0) {}

  static Tensor2 zeros(int r, int c) { return Tensor2(r, c); }

  double& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const {
    return v[static_cast<std::size_t>(r) * cols + c];
  }
  double* row(int r) { return v.data() + static_cast<std::size_t>(r) * cols; }
  const double* row(int r) const {
    return v.data() + static_cast<std::size_t>(r) * cols;
  }
  std::size_t size() const { return v.size(); }

  void set_zero() { std::fill(v.begin(), v.end(), 0.0); }
};

using EigenMap =
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using EigenConstMap = Eigen::Map<
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

inline EigenConstMap as_eigen(const Tensor2& t) {
  return EigenConstMap(t.v.data(), t.rows, t.cols);
}
inline EigenMap as_eigen(Tensor2& t) { return EigenMap(t.v.data(), t.rows, t.cols); }

/// out = a * b
inline void matmul(const Tensor2& a, const Tensor2& b, Tensor2& out) {
  if (a.cols != b.rows)
    throw Error("dimension-mismatch", "matmul: " + std::to_string(a.cols) +
                                          " vs " + std::to_string(b.rows));
  out = Tensor2(a.rows, b.cols);
  as_eigen(out).noalias() = as_eigen(a) * as_eigen(b);
}

/// out = a^T * b
inline void matmul_tn(const Tensor2& a, const Tensor2& b, Tensor2& out) {
  if (a.rows != b.rows)
    throw Error("dimension-mismatch", "matmul_tn row mismatch");
  out = Tensor2(a.cols, b.cols);
  as_eigen(out).noalias() = as_eigen(a).transpose() * as_eigen(b);
}

/// out = a * b^T
inline void matmul_nt(const Tensor2& a, const Tensor2& b, Tensor2& out) {
  if (a.cols != b.cols)
    throw Error("dimension-mismatch", "matmul_nt col mismatch");
  out = Tensor2(a.rows, b.rows);
  as_eigen(out).noalias() = as_eigen(a) * as_eigen(b).transpose();
}

inline void check_finite(const Tensor2& t, const char* where) {
  for (double x : t.v)
    if (!std::isfinite(x))
      throw Error("nan-loss", std::string("non-finite value in ") + where);
}

}  // namespace garment::nn
