#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>

// Numeric kernels shared by the gradient tape and the plain inference path.
// Both paths must call these in the same order so batch, streaming and tape
// forwards agree bit for bit.
namespace dpars::kernels {

/// y[m] = W[m x n] * x[n]
inline void matvec(const double* w, std::size_t m, std::size_t n, const double* x, double* y) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = w + i * n;
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += row[j] * x[j];
    y[i] = acc;
  }
}

inline void add(const double* a, const double* b, std::size_t n, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

inline void tanh(const double* x, std::size_t n, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] = std::tanh(x[i]);
}

/// Max-subtracted softmax.
inline void softmax(const double* x, std::size_t n, double* y) {
  const double mx = *std::max_element(x, x + n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = std::exp(x[i] - mx);
    sum += y[i];
  }
  const double inv = 1.0 / sum;
  for (std::size_t i = 0; i < n; ++i) y[i] *= inv;
}

/// y[n] = sum_j w[j] * vecs[j][n]
inline void weighted_sum(const double* w, std::size_t k, const double* const* vecs, std::size_t n, double* y) {
  std::fill(y, y + n, 0.0);
  for (std::size_t j = 0; j < k; ++j) {
    const double wj = w[j];
    const double* v = vecs[j];
    for (std::size_t i = 0; i < n; ++i) y[i] += wj * v[i];
  }
}

/// -sum p ln p with 0 ln 0 = 0.
inline double entropy(const double* p, std::size_t n) {
  double h = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (p[i] > 0.0) h -= p[i] * std::log(p[i]);
  }
  return h;
}

inline double l1(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::abs(a[i] - b[i]);
  return s;
}

}  // namespace dpars::kernels
