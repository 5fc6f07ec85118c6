#pragma once

// Independent reference computations for the tests. Linear algebra goes
// through Eigen so that no oracle shares code with the library under test.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <vector>

#include "lion/deq.hpp"
#include "lion/rng.hpp"
#include "lion/tensor.hpp"

namespace lion::testing {

inline Eigen::MatrixXd to_eigen(const Tensor& t) {
  Eigen::MatrixXd m(t.rows(), t.cols());
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) m(r, c) = t.rank() == 2 ? t(r, c) : t[r * t.cols() + c];
  return m;
}

inline Eigen::VectorXd to_eigen_vec(const Tensor& t) {
  Eigen::VectorXd v(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) v(i) = t[i];
  return v;
}

inline Tensor from_eigen(const Eigen::VectorXd& v) {
  return Tensor::vector(std::vector<double>(v.data(), v.data() + v.size()));
}

inline Tensor from_eigen_matrix(const Eigen::MatrixXd& m) {
  Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      t(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = m(r, c);
  return t;
}

/// Largest singular value by full SVD.
inline double sigma_max(const Tensor& w) {
  return Eigen::JacobiSVD<Eigen::MatrixXd>(to_eigen(w)).singularValues()(0);
}

inline Tensor random_tensor(Tensor::Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

/// Fixed point of an identity-activation cell: (I - W)^-1 (U x + b).
inline Eigen::VectorXd linear_fixed_point(const deq::DeqCell& cell, const Tensor& x) {
  const Eigen::MatrixXd W = to_eigen(cell.W);
  const Eigen::VectorXd rhs = to_eigen(cell.U) * to_eigen_vec(x) + to_eigen_vec(cell.b);
  return (Eigen::MatrixXd::Identity(W.rows(), W.cols()) - W).partialPivLu().solve(rhs);
}

/// Adjoint o = (I - J^T)^-1 y with J = diag(act'(pre)) W, by dense solve.
inline Eigen::VectorXd dense_adjoint(const deq::DeqCell& cell, const Tensor& z_star, const Tensor& x,
                                     const Tensor& y) {
  const Eigen::MatrixXd W = to_eigen(cell.W);
  const Eigen::VectorXd pre = W * to_eigen_vec(z_star) + to_eigen(cell.U) * to_eigen_vec(x) + to_eigen_vec(cell.b);
  Eigen::VectorXd slope(pre.size());
  for (Eigen::Index i = 0; i < pre.size(); ++i) {
    switch (cell.activation) {
      case Activation::tanh: slope(i) = 1.0 - std::tanh(pre(i)) * std::tanh(pre(i)); break;
      case Activation::identity: slope(i) = 1.0; break;
      case Activation::relu: slope(i) = pre(i) > 0.0 ? 1.0 : 0.0; break;
    }
  }
  const Eigen::MatrixXd J = slope.asDiagonal() * W;
  const Eigen::MatrixXd A = Eigen::MatrixXd::Identity(W.rows(), W.cols()) - J.transpose();
  return A.partialPivLu().solve(to_eigen_vec(y));
}

}  // namespace lion::testing
