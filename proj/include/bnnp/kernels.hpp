#pragma once

// Data-parallel inner loops. Every kernel has an OpenMP version (used by the
// library) and a plain serial version in kernels::serial kept as the test
// reference. Reductions run over fixed-size row blocks whose partial sums are
// combined in block order, so results do not depend on the thread count.

#include <algorithm>
#include <vector>

#include <omp.h>

#include "bnnp/nn.hpp"
#include "bnnp/types.hpp"

namespace bnnp::kernels {

inline void set_num_threads(int n) {
  if (n > 0) omp_set_num_threads(n);
}

inline int max_threads() { return omp_get_max_threads(); }

// Rows per reduction block: at least 16, at most 64 blocks per call.
inline Index block_rows(Index rows) { return std::max<Index>(16, (rows + 63) / 64); }

// Sums fn(i, grad_buf) over rows [0, rows). fn returns the row's scalar value
// and adds the row's gradient into grad_buf (length dim). When grad is null,
// fn receives a null buffer and must skip gradient work.
template <class RowFn>
double sum_rows(Index rows, Index dim, Vector* grad, RowFn&& fn) {
  const Index bs = block_rows(rows);
  const Index nblocks = (rows + bs - 1) / bs;
  std::vector<double> values(nblocks, 0.0);
  std::vector<Vector> grads(grad ? nblocks : 0);
#pragma omp parallel for schedule(dynamic, 1)
  for (Index b = 0; b < nblocks; ++b) {
    Vector* buf = nullptr;
    if (grad) {
      grads[b] = Vector::Zero(dim);
      buf = &grads[b];
    }
    double v = 0.0;
    const Index end = std::min(rows, (b + 1) * bs);
    for (Index i = b * bs; i < end; ++i) v += fn(i, buf);
    values[b] = v;
  }
  double total = 0.0;
  for (Index b = 0; b < nblocks; ++b) {
    total += values[b];
    if (grad) *grad += grads[b];
  }
  return total;
}

// Applies fn(i) for i in [0, n) with no reduction.
template <class Fn>
void for_each_index(Index n, Fn&& fn) {
#pragma omp parallel for schedule(dynamic, 4)
  for (Index i = 0; i < n; ++i) fn(i);
}

inline RowMatrix forward_rows(const Mlp& net, const ParamVector& w, const RowMatrix& X) {
  RowMatrix out(X.rows(), net.output_dim());
  for_each_index(X.rows(), [&](Index i) { out.row(i) = net.forward(w, X.row(i).transpose()).transpose(); });
  return out;
}

// K(i, j) = exp(-||A_i - B_j||^2 / (2 gamma^2))
inline Matrix rbf_gram(const RowMatrix& A, const RowMatrix& B, double gamma) {
  Matrix K(A.rows(), B.rows());
  const double inv = 1.0 / (2.0 * gamma * gamma);
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < A.rows(); ++i)
    for (Index j = 0; j < B.rows(); ++j) K(i, j) = std::exp(-(A.row(i) - B.row(j)).squaredNorm() * inv);
  return K;
}

// Squared distances of all pairs i < j in row-major pair order.
inline std::vector<double> pairwise_sq_dists(const RowMatrix& A) {
  const Index n = A.rows();
  std::vector<double> d(static_cast<std::size_t>(n * (n - 1) / 2));
#pragma omp parallel for schedule(dynamic, 1)
  for (Index i = 0; i < n; ++i) {
    std::size_t k = static_cast<std::size_t>(i * n - i * (i + 1) / 2);
    for (Index j = i + 1; j < n; ++j) d[k++] = (A.row(i) - A.row(j)).squaredNorm();
  }
  return d;
}

namespace serial {

template <class RowFn>
double sum_rows(Index rows, Index dim, Vector* grad, RowFn&& fn) {
  double total = 0.0;
  Vector buf;
  if (grad) buf = Vector::Zero(dim);
  for (Index i = 0; i < rows; ++i) total += fn(i, grad ? &buf : nullptr);
  if (grad) *grad += buf;
  return total;
}

inline RowMatrix forward_rows(const Mlp& net, const ParamVector& w, const RowMatrix& X) {
  RowMatrix out(X.rows(), net.output_dim());
  for (Index i = 0; i < X.rows(); ++i) out.row(i) = net.forward(w, X.row(i).transpose()).transpose();
  return out;
}

inline Matrix rbf_gram(const RowMatrix& A, const RowMatrix& B, double gamma) {
  Matrix K(A.rows(), B.rows());
  const double inv = 1.0 / (2.0 * gamma * gamma);
  for (Index i = 0; i < A.rows(); ++i)
    for (Index j = 0; j < B.rows(); ++j) K(i, j) = std::exp(-(A.row(i) - B.row(j)).squaredNorm() * inv);
  return K;
}

inline std::vector<double> pairwise_sq_dists(const RowMatrix& A) {
  std::vector<double> d;
  for (Index i = 0; i < A.rows(); ++i)
    for (Index j = i + 1; j < A.rows(); ++j) d.push_back((A.row(i) - A.row(j)).squaredNorm());
  return d;
}

}  // namespace serial
}  // namespace bnnp::kernels
