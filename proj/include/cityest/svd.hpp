#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace cityest {

template <typename Scalar>
struct Svd {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Matrix U;  // m x r, orthonormal columns
  Vector S;  // r singular values, descending
  Matrix V;  // n x r, orthonormal columns
  int sweeps = 0;

  Matrix reconstruct() const { return U * S.asDiagonal() * V.transpose(); }
};

namespace detail {

// Completes zero columns of Q (n x r, other columns orthonormal) to an
// orthonormal set by Gram-Schmidt against the standard basis.
template <typename Matrix>
void complete_basis(Matrix& Q, const std::vector<bool>& zero) {
  using Scalar = typename Matrix::Scalar;
  Eigen::Index next_e = 0;
  for (Eigen::Index j = 0; j < Q.cols(); ++j) {
    if (!zero[static_cast<std::size_t>(j)]) continue;
    for (; next_e < Q.rows(); ++next_e) {
      Eigen::Matrix<Scalar, Eigen::Dynamic, 1> v = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Unit(Q.rows(), next_e);
      for (int pass = 0; pass < 2; ++pass)
        for (Eigen::Index k = 0; k < Q.cols(); ++k)
          if (k != j && (!zero[static_cast<std::size_t>(k)] || k < j)) v -= Q.col(k).dot(v) * Q.col(k);
      const Scalar nv = v.norm();
      if (nv > Scalar(0.5)) {
        Q.col(j) = v / nv;
        ++next_e;
        break;
      }
    }
  }
}

// One-sided Jacobi on the columns of W (m x n, n <= m), accumulating the
// rotations into V. Returns the number of sweeps performed.
template <typename Matrix>
int hestenes(Matrix& W, Matrix& V, typename Matrix::Scalar tol, int max_sweeps) {
  using Scalar = typename Matrix::Scalar;
  const Eigen::Index n = W.cols();
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> norm2(n);
  int sweep = 0;
  for (; sweep < max_sweeps; ++sweep) {
    for (Eigen::Index j = 0; j < n; ++j) norm2[j] = W.col(j).squaredNorm();
    bool rotated = false;
    for (Eigen::Index p = 0; p + 1 < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const Scalar alpha = norm2[p];
        const Scalar beta = norm2[q];
        const Scalar gamma = W.col(p).dot(W.col(q));
        if (gamma == Scalar(0) || std::abs(gamma) <= tol * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const Scalar zeta = (beta - alpha) / (Scalar(2) * gamma);
        const Scalar t = (zeta >= 0 ? Scalar(1) : Scalar(-1)) / (std::abs(zeta) + std::sqrt(Scalar(1) + zeta * zeta));
        const Scalar c = Scalar(1) / std::sqrt(Scalar(1) + t * t);
        const Scalar s = c * t;
        for (Matrix* M : {&W, &V}) {
          const auto x = M->col(p).eval();
          M->col(p) = c * x - s * M->col(q);
          M->col(q) = s * x + c * M->col(q);
        }
        norm2[p] = alpha - t * gamma;
        norm2[q] = beta + t * gamma;
      }
    }
    if (!rotated) return sweep + 1;
  }
  return sweep;
}

}  // namespace detail

/// Thin SVD by one-sided (Hestenes) Jacobi rotations. Singular values come
/// out descending; each right singular vector's largest-magnitude entry is
/// made positive (lowest index on ties), which fixes signs deterministically.
/// `warm_v` (n x n orthogonal, e.g. a previous V) preconditions the sweeps.
template <typename Derived>
Svd<typename Derived::Scalar> jacobi_svd(const Eigen::MatrixBase<Derived>& a,
                                         const typename Svd<typename Derived::Scalar>::Matrix* warm_v = nullptr,
                                         int max_sweeps = 60) {
  using Scalar = typename Derived::Scalar;
  using Matrix = typename Svd<Scalar>::Matrix;
  const bool transposed = a.cols() > a.rows();
  Matrix W = transposed ? Matrix(a.transpose()) : Matrix(a);
  const Eigen::Index n = W.cols();

  Matrix V;
  if (warm_v && warm_v->rows() == n && warm_v->cols() == n) {
    V = *warm_v;
    W = W * V;
  } else {
    V = Matrix::Identity(n, n);
  }
  Svd<Scalar> out;
  out.sweeps = detail::hestenes(W, V, Scalar(n) * std::numeric_limits<Scalar>::epsilon(), max_sweeps);

  typename Svd<Scalar>::Vector sigma(n);
  for (Eigen::Index j = 0; j < n; ++j) sigma[j] = W.col(j).norm();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index x, Eigen::Index y) { return sigma[x] > sigma[y]; });

  const Scalar small = (sigma.size() ? sigma.maxCoeff() : Scalar(0)) * Scalar(W.rows()) *
                       std::numeric_limits<Scalar>::epsilon();
  Matrix U(W.rows(), n), Vs(n, n);
  out.S.resize(n);
  std::vector<bool> zero(static_cast<std::size_t>(n), false);
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto j = order[static_cast<std::size_t>(k)];
    out.S[k] = sigma[j];
    Vs.col(k) = V.col(j);
    if (sigma[j] > small && sigma[j] > Scalar(0)) {
      U.col(k) = W.col(j) / sigma[j];
    } else {
      U.col(k).setZero();
      zero[static_cast<std::size_t>(k)] = true;
    }
  }
  detail::complete_basis(U, zero);

  for (Eigen::Index k = 0; k < n; ++k) {
    Eigen::Index lead = 0;
    for (Eigen::Index i = 1; i < n; ++i)
      if (std::abs(Vs(i, k)) > std::abs(Vs(lead, k))) lead = i;
    if (Vs(lead, k) < 0) {
      Vs.col(k) = -Vs.col(k);
      U.col(k) = -U.col(k);
    }
  }

  if (transposed) {
    out.U = std::move(Vs);
    out.V = std::move(U);
  } else {
    out.U = std::move(U);
    out.V = std::move(Vs);
  }
  return out;
}

}  // namespace cityest
