#pragma once

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <vector>

#include "adc/common.hpp"

namespace adc {

// Row-major dense matrix of doubles. Small by design: the nets here are tiny
// and everything stays on one thread per training run.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}

  double& operator()(int r, int c) { return a[static_cast<std::size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return a[static_cast<std::size_t>(r) * cols + c]; }

  double* row(int r) { return a.data() + static_cast<std::size_t>(r) * cols; }
  const double* row(int r) const { return a.data() + static_cast<std::size_t>(r) * cols; }

  void fill(double v) { std::fill(a.begin(), a.end(), v); }
  void zero() { fill(0.0); }

  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

  bool finite() const {
    for (double x : a)
      if (!std::isfinite(x)) return false;
    return true;
  }

  double frobenius_norm() const {
    double s = 0.0;
    for (double x : a) s += x * x;
    return std::sqrt(s);
  }
};

// Y = X * A  (BxK * KxN)
inline Mat matmul(const Mat& x, const Mat& m) {
  if (x.cols != m.rows) throw std::invalid_argument("matmul: shape mismatch");
  Mat y(x.rows, m.cols);
  for (int i = 0; i < x.rows; ++i) {
    const double* xi = x.row(i);
    double* yi = y.row(i);
    for (int k = 0; k < x.cols; ++k) {
      double v = xi[k];
      if (v == 0.0) continue;
      const double* mk = m.row(k);
      for (int j = 0; j < m.cols; ++j) yi[j] += v * mk[j];
    }
  }
  return y;
}

// Y = X^T * D  (KxB^T * BxN -> KxN); the weight-gradient contraction.
inline Mat matmul_at(const Mat& x, const Mat& d) {
  if (x.rows != d.rows) throw std::invalid_argument("matmul_at: shape mismatch");
  Mat y(x.cols, d.cols);
  for (int b = 0; b < x.rows; ++b) {
    const double* xb = x.row(b);
    const double* db = d.row(b);
    for (int k = 0; k < x.cols; ++k) {
      double v = xb[k];
      if (v == 0.0) continue;
      double* yk = y.row(k);
      for (int j = 0; j < d.cols; ++j) yk[j] += v * db[j];
    }
  }
  return y;
}

// Y = D * A^T  (BxN * NxK^T -> BxK); the input-gradient contraction.
inline Mat matmul_bt(const Mat& d, const Mat& m) {
  if (d.cols != m.cols) throw std::invalid_argument("matmul_bt: shape mismatch");
  Mat y(d.rows, m.rows);
  for (int i = 0; i < d.rows; ++i) {
    const double* di = d.row(i);
    double* yi = y.row(i);
    for (int k = 0; k < m.rows; ++k) yi[k] = dot(di, m.row(k), d.cols);
  }
  return y;
}

inline std::vector<double> col_sums(const Mat& d) {
  std::vector<double> s(d.cols, 0.0);
  for (int i = 0; i < d.rows; ++i) {
    const double* di = d.row(i);
    for (int j = 0; j < d.cols; ++j) s[j] += di[j];
  }
  return s;
}

inline void axpy(Mat& y, double alpha, const Mat& x) {
  if (!y.same_shape(x)) throw std::invalid_argument("axpy: shape mismatch");
  for (std::size_t i = 0; i < y.a.size(); ++i) y.a[i] += alpha * x.a[i];
}

}  // namespace adc
