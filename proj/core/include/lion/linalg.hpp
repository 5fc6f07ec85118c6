#pragma once

#include <cstddef>

#include "lion/tensor.hpp"

namespace lion::linalg {

/// LU factorization with partial pivoting of a square matrix.
class Lu {
 public:
  explicit Lu(const Tensor& a);

  /// True when some pivot fell below `eps` times the largest pivot.
  bool singular(double eps = 1e-14) const noexcept;
  double determinant() const noexcept;
  /// Solves A x = b for a rank-1 b. Throws NumericError when singular.
  Tensor solve(const Tensor& b) const;
  Tensor inverse() const;

 private:
  std::size_t n_;
  Tensor lu_;
  std::vector<std::size_t> perm_;
  int sign_ = 1;
};

double determinant(const Tensor& a);
Tensor inverse(const Tensor& a);
Tensor solve(const Tensor& a, const Tensor& b);

/// Minimum-norm-ish least squares min ||A x - b|| for a tall (or square)
/// A via Householder QR; columns whose R diagonal is below `rcond` times the
/// largest are dropped (coefficient 0).
Tensor lstsq(const Tensor& a, const Tensor& b, double rcond = 1e-12);

struct PowerIterationResult {
  double sigma_max;
  int iterations;
};

/// Largest singular value of `w` by power iteration on W^T W from a fixed
/// deterministic start. Runs at most `max_iters` iterations and stops early
/// once the estimate changes by less than `rel_tol` relative.
PowerIterationResult spectral_norm(const Tensor& w, int max_iters, double rel_tol = 1e-13);

}  // namespace lion::linalg
