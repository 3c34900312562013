#pragma once

// Independent reference computations for the tests. Nothing here calls the
// library routine it is used to check.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "bnnp/nn.hpp"
#include "bnnp/types.hpp"

namespace bnnp::oracle {

// Central differences of a scalar function of a vector.
template <class F>
Vector central_diff(F&& f, const Vector& x, double h = 1e-5) {
  Vector g(x.size());
  Vector xp = x;
  for (Index i = 0; i < x.size(); ++i) {
    const double orig = xp[i];
    xp[i] = orig + h;
    const double fp = f(xp);
    xp[i] = orig - h;
    const double fm = f(xp);
    xp[i] = orig;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// Largest coordinate error relative to the largest reference coordinate.
inline double rel_err(const Eigen::MatrixXd& got, const Eigen::MatrixXd& want) {
  const double scale = std::max(want.cwiseAbs().maxCoeff(), 1e-12);
  return (got - want).cwiseAbs().maxCoeff() / scale;
}

inline double rel_err(double got, double want) { return std::abs(got - want) / std::max(std::abs(want), 1e-12); }

// Straight-line forward pass with explicit loops over the documented layout:
// per layer, weights row-major (fan_out x fan_in) then the bias.
inline Vector naive_forward(const ArchSpec& arch, const Vector& w, const Vector& x) {
  std::vector<double> a(x.data(), x.data() + x.size());
  Index off = 0;
  const int L = arch.num_layers();
  for (int l = 0; l < L; ++l) {
    const int fan_in = arch.layer_sizes[l];
    const int fan_out = arch.layer_sizes[l + 1];
    std::vector<double> z(fan_out, 0.0);
    for (int r = 0; r < fan_out; ++r) {
      double s = 0.0;
      for (int c = 0; c < fan_in; ++c) s += w[off + r * fan_in + c] * a[c];
      z[r] = s + w[off + fan_in * fan_out + r];
    }
    off += (fan_in + 1) * fan_out;
    if (l + 1 < L) {
      for (double& v : z) v = arch.activation == Activation::relu ? std::max(v, 0.0) : std::log1p(std::exp(v));
    }
    a = z;
  }
  return Eigen::Map<Vector>(a.data(), static_cast<Index>(a.size()));
}

inline double naive_sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

inline double dense_log_det(const Eigen::MatrixXd& S) {
  Eigen::LLT<Eigen::MatrixXd> llt(S);
  const Eigen::MatrixXd L = llt.matrixL();
  return 2.0 * L.diagonal().array().log().sum();
}

// KL(N(mu, S) || N(0, var I)) from the explicit covariance.
inline double dense_kl(const Vector& mu, const Eigen::MatrixXd& S, double var) {
  const double n = static_cast<double>(mu.size());
  return 0.5 * ((S.trace() + mu.squaredNorm()) / var - n + n * std::log(var) - dense_log_det(S));
}

inline double dense_gauss_log_density(const Vector& w, const Vector& mu, const Eigen::MatrixXd& S) {
  const double n = static_cast<double>(w.size());
  const Vector d = w - mu;
  return -0.5 * (n * std::log(2.0 * std::numbers::pi) + dense_log_det(S) + d.dot(S.ldlt().solve(d)));
}

// Pairwise counting: positives outranking negatives, ties one half.
inline double brute_auroc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        pairs += 1.0;
        wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
  return wins / pairs;
}

inline double naive_mmd2(const Eigen::MatrixXd& W, const Eigen::MatrixXd& U, double gamma) {
  auto k = [&](const Vector& a, const Vector& b) { return std::exp(-(a - b).squaredNorm() / (2.0 * gamma * gamma)); };
  double ww = 0.0, uu = 0.0, wu = 0.0;
  for (Index i = 0; i < W.rows(); ++i)
    for (Index j = 0; j < W.rows(); ++j) ww += k(W.row(i), W.row(j));
  for (Index i = 0; i < U.rows(); ++i)
    for (Index j = 0; j < U.rows(); ++j) uu += k(U.row(i), U.row(j));
  for (Index i = 0; i < W.rows(); ++i)
    for (Index j = 0; j < U.rows(); ++j) wu += k(W.row(i), U.row(j));
  const double nw = static_cast<double>(W.rows());
  const double nu = static_cast<double>(U.rows());
  return ww / (nw * nw) + uu / (nu * nu) - 2.0 * wu / (nw * nu);
}

// Median of distinct-pair squared distances by full sort.
inline double naive_median_sq_dist(const Eigen::MatrixXd& X) {
  std::vector<double> d;
  for (Index i = 0; i < X.rows(); ++i)
    for (Index j = i + 1; j < X.rows(); ++j) d.push_back((X.row(i) - X.row(j)).squaredNorm());
  std::sort(d.begin(), d.end());
  const std::size_t m = d.size();
  return m % 2 ? d[m / 2] : 0.5 * (d[m / 2 - 1] + d[m / 2]);
}

// a dominates b under (maximise accuracy, minimise phi).
inline bool dominates(double acc_a, double phi_a, double acc_b, double phi_b) {
  return acc_a >= acc_b && phi_a <= phi_b && (acc_a > acc_b || phi_a < phi_b);
}

}  // namespace bnnp::oracle
