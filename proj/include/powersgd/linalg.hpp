// Copyright 2026 The powersgd-sim Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// =============================================================================

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "powersgd/error.hpp"
#include "powersgd/random.hpp"

namespace powersgd {

// Dense row-major matrix of doubles. Every gradient tensor, factor and
// iterate in the library is one of these.
class Matrix {
 public:
  Matrix() = default;

  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    POWERSGD_REQUIRE(data_.size() == rows_ * cols_, "Matrix: data length ",
                     data_.size(), " != ", rows_, "x", cols_);
  }

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t n = rows.size();
    const std::size_t m = n == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(n * m);
    for (const auto& row : rows) {
      POWERSGD_REQUIRE(row.size() == m, "Matrix::from_rows: ragged rows");
      data.insert(data.end(), row.begin(), row.end());
    }
    return Matrix(n, m, std::move(data));
  }

  static Matrix identity(std::size_t n) {
    Matrix out(n, n);
    for (std::size_t i = 0; i < n; ++i) out(i, i) = 1.0;
    return out;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  double& operator[](std::size_t k) { return data_[k]; }
  double operator[](std::size_t k) const { return data_[k]; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  double column_dot(std::size_t a, const Matrix& other, std::size_t b) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < rows_; ++i) acc += (*this)(i, a) * other(i, b);
    return acc;
  }

  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

  Matrix& operator+=(const Matrix& other) {
    POWERSGD_REQUIRE(same_shape(other), "Matrix +=: shape mismatch");
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += other.data_[k];
    return *this;
  }

  Matrix& operator-=(const Matrix& other) {
    POWERSGD_REQUIRE(same_shape(other), "Matrix -=: shape mismatch");
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= other.data_[k];
    return *this;
  }

  Matrix& operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
inline Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
inline Matrix operator*(double s, Matrix a) { return a *= s; }

// a * b
inline Matrix matmul(const Matrix& a, const Matrix& b) {
  POWERSGD_REQUIRE(a.cols() == b.rows(), "matmul: ", a.rows(), "x", a.cols(),
                   " * ", b.rows(), "x", b.cols());
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  }
  return out;
}

// aᵀ * b
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  POWERSGD_REQUIRE(a.rows() == b.rows(), "matmul_tn: ", a.rows(), "x", a.cols(),
                   "ᵀ * ", b.rows(), "x", b.cols());
  Matrix out(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = a(k, i);
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aki * b(k, j);
    }
  }
  return out;
}

// a * bᵀ
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  POWERSGD_REQUIRE(a.cols() == b.cols(), "matmul_nt: ", a.rows(), "x", a.cols(),
                   " * ", b.rows(), "x", b.cols(), "ᵀ");
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(j, k);
      out(i, j) = acc;
    }
  }
  return out;
}

inline Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

inline double frobenius_sq(const Matrix& a) {
  double acc = 0.0;
  for (double v : a.values()) acc += v * v;
  return acc;
}

inline double max_abs(const Matrix& a) {
  double out = 0.0;
  for (double v : a.values()) out = std::max(out, std::abs(v));
  return out;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  POWERSGD_REQUIRE(a.same_shape(b), "max_abs_diff: shape mismatch");
  double out = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) out = std::max(out, std::abs(a[k] - b[k]));
  return out;
}

inline bool all_finite(const Matrix& a) {
  return std::all_of(a.values().begin(), a.values().end(),
                     [](double v) { return std::isfinite(v); });
}

inline Matrix gaussian_matrix(std::size_t rows, std::size_t cols, Rng& rng,
                              double stddev = 1.0) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix out(rows, cols);
  for (double& v : out.values()) v = dist(rng);
  return out;
}

// max |AᵀA - I|
inline double orthonormality_error(const Matrix& a) {
  const Matrix gram = matmul_tn(a, a);
  return max_abs_diff(gram, Matrix::identity(a.cols()));
}

namespace detail {

inline double column_norm(const Matrix& a, std::size_t j) {
  return std::sqrt(a.column_dot(j, a, j));
}

// Subtract the projections of column j onto columns [0, j).
inline void project_out_previous(Matrix& q, std::size_t j) {
  for (std::size_t k = 0; k < j; ++k) {
    const double c = q.column_dot(k, q, j);
    for (std::size_t i = 0; i < q.rows(); ++i) q(i, j) -= c * q(i, k);
  }
}

}  // namespace detail

// Gram-Schmidt with one re-orthogonalization pass. Columns that collapse
// (rank-deficient input) are replaced by a deterministic pseudo-random
// direction seeded from the column index, so the result always has
// orthonormal columns.
inline Matrix orthogonalize(const Matrix& p) {
  POWERSGD_REQUIRE(p.cols() <= p.rows(), "orthogonalize: ", p.cols(),
                   " columns exceed ", p.rows(), " rows");
  Matrix q = p;
  for (std::size_t j = 0; j < q.cols(); ++j) {
    const double pre = detail::column_norm(q, j);
    detail::project_out_previous(q, j);
    detail::project_out_previous(q, j);
    double norm = detail::column_norm(q, j);
    for (std::uint64_t attempt = 0; norm < 1e-12 * (pre + 1.0); ++attempt) {
      Rng rng(derive_seed(0x6f7274686f676f6eULL, {j, attempt}));
      std::normal_distribution<double> dist;
      for (std::size_t i = 0; i < q.rows(); ++i) q(i, j) = dist(rng);
      const double fresh = detail::column_norm(q, j);
      detail::project_out_previous(q, j);
      detail::project_out_previous(q, j);
      norm = detail::column_norm(q, j);
      if (norm >= 1e-6 * fresh) break;
    }
    for (std::size_t i = 0; i < q.rows(); ++i) q(i, j) /= norm;
  }
  return q;
}

// A rank-r factorization left * rightᵀ.
struct LowRankFactors {
  Matrix left;   // n x r
  Matrix right;  // m x r

  std::size_t rank() const { return left.cols(); }
  Matrix reconstruct() const { return matmul_nt(left, right); }
};

struct SubspaceIterationOptions {
  double tolerance = 1e-12;
  std::size_t max_sweeps = 10000;
  std::uint64_t seed = 0x5eed0f0e1c7e5ULL;
};

namespace detail {

// Converged subspace iteration on MᵀM from a fresh Gaussian start. Returns
// the m x k orthonormal iterate; columns converge to the leading right
// singular vectors in order. Stops when every ‖M x_i‖² moves by less than
// tolerance·‖M‖² between sweeps.
inline Matrix converged_right_subspace(const Matrix& m, std::size_t k,
                                       const SubspaceIterationOptions& opts,
                                       std::size_t* sweeps_out = nullptr) {
  Rng rng(opts.seed);
  Matrix x = orthogonalize(gaussian_matrix(m.cols(), k, rng));
  const double scale = frobenius_sq(m);
  std::vector<double> energy(k, -1.0);
  std::size_t sweep = 0;
  if (scale == 0.0) {
    if (sweeps_out) *sweeps_out = 0;
    return x;
  }
  for (; sweep < opts.max_sweeps; ++sweep) {
    x = orthogonalize(matmul_tn(m, matmul(m, x)));
    const Matrix mx = matmul(m, x);
    double delta = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double e = mx.column_dot(j, mx, j);
      delta = std::max(delta, std::abs(e - energy[j]));
      energy[j] = e;
    }
    if (delta < opts.tolerance * scale) break;
  }
  if (sweeps_out) *sweeps_out = sweep + 1;
  return x;
}

}  // namespace detail

// Best rank-r approximation, computed independently of the single-step
// compression path by running subspace iteration to convergence. The left
// factor has orthonormal columns and right = Mᵀ·left.
inline LowRankFactors best_rank_r(const Matrix& m, std::size_t r,
                                  const SubspaceIterationOptions& opts = {}) {
  POWERSGD_REQUIRE(r >= 1 && r <= std::min(m.rows(), m.cols()),
                   "best_rank_r: rank ", r, " out of range for ", m.rows(), "x",
                   m.cols());
  const Matrix x = detail::converged_right_subspace(m, r, opts);
  Matrix left = orthogonalize(matmul(m, x));
  Matrix right = matmul_tn(m, left);
  return {std::move(left), std::move(right)};
}

inline double reconstruction_error_sq(const Matrix& m, const LowRankFactors& f) {
  return frobenius_sq(m - f.reconstruct());
}

// Thin singular value decomposition M = U diag(sigma) Vᵀ with sigma sorted
// descending; k = min(rows, cols). Columns of U for zero singular values are
// left at zero.
struct SpectralDecomposition {
  Matrix u;                   // n x k
  std::vector<double> sigma;  // k
  Matrix v;                   // m x k
};

inline SpectralDecomposition spectral_decomposition(
    const Matrix& m, const SubspaceIterationOptions& opts = {}) {
  const std::size_t k = std::min(m.rows(), m.cols());
  POWERSGD_REQUIRE(k >= 1, "spectral_decomposition: empty matrix");
  const Matrix x = detail::converged_right_subspace(m, k, opts);
  const Matrix mx = matmul(m, x);

  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> norms(k);
  for (std::size_t j = 0; j < k; ++j) norms[j] = detail::column_norm(mx, j);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return norms[a] > norms[b]; });

  SpectralDecomposition out{Matrix(m.rows(), k), std::vector<double>(k), Matrix(m.cols(), k)};
  const double floor = 1e-13 * std::sqrt(frobenius_sq(m));
  for (std::size_t c = 0; c < k; ++c) {
    const std::size_t j = order[c];
    const double s = norms[j];
    out.sigma[c] = s > floor ? s : 0.0;
    for (std::size_t i = 0; i < m.cols(); ++i) out.v(i, c) = x(i, j);
    if (out.sigma[c] > 0.0)
      for (std::size_t i = 0; i < m.rows(); ++i) out.u(i, c) = mx(i, j) / s;
  }
  return out;
}

inline std::vector<double> singular_values(const Matrix& m,
                                           const SubspaceIterationOptions& opts = {}) {
  return spectral_decomposition(m, opts).sigma;
}

// Cholesky solve of a symmetric positive definite system a·x = b.
inline Matrix cholesky_solve(const Matrix& a, const Matrix& b) {
  POWERSGD_REQUIRE(a.rows() == a.cols() && a.rows() == b.rows(),
                   "cholesky_solve: shape mismatch");
  const std::size_t n = a.rows();
  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    POWERSGD_REQUIRE(d > 0.0, "cholesky_solve: matrix not positive definite");
    l(j, j) = std::sqrt(d);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / l(j, j);
    }
  }
  Matrix x = b;
  for (std::size_t c = 0; c < b.cols(); ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = x(i, c);
      for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * x(k, c);
      x(i, c) = s / l(i, i);
    }
    for (std::size_t i = n; i-- > 0;) {
      double s = x(i, c);
      for (std::size_t k = i + 1; k < n; ++k) s -= l(k, i) * x(k, c);
      x(i, c) = s / l(i, i);
    }
  }
  return x;
}

}  // namespace powersgd
