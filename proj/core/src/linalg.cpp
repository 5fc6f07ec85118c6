#include "lion/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lion/errors.hpp"
#include "lion/ops.hpp"

namespace lion::linalg {

Lu::Lu(const Tensor& a) : n_(a.rows()), lu_(a), perm_(a.rows()) {
  if (a.rank() != 2 || a.rows() != a.cols()) {
    throw DimensionError("LU needs a square matrix, got " + a.shape_string());
  }
  std::iota(perm_.begin(), perm_.end(), std::size_t{0});
  for (std::size_t k = 0; k < n_; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < n_; ++i) {
      if (std::abs(lu_(i, k)) > std::abs(lu_(piv, k))) piv = i;
    }
    if (piv != k) {
      for (std::size_t j = 0; j < n_; ++j) std::swap(lu_(k, j), lu_(piv, j));
      std::swap(perm_[k], perm_[piv]);
      sign_ = -sign_;
    }
    const double d = lu_(k, k);
    if (d == 0.0) continue;
    for (std::size_t i = k + 1; i < n_; ++i) {
      const double f = lu_(i, k) / d;
      lu_(i, k) = f;
      for (std::size_t j = k + 1; j < n_; ++j) lu_(i, j) -= f * lu_(k, j);
    }
  }
}

bool Lu::singular(double eps) const noexcept {
  double biggest = 0.0;
  for (std::size_t k = 0; k < n_; ++k) biggest = std::max(biggest, std::abs(lu_(k, k)));
  if (biggest == 0.0) return true;
  for (std::size_t k = 0; k < n_; ++k) {
    if (std::abs(lu_(k, k)) <= eps * biggest) return true;
  }
  return false;
}

double Lu::determinant() const noexcept {
  double det = sign_;
  for (std::size_t k = 0; k < n_; ++k) det *= lu_(k, k);
  return det;
}

Tensor Lu::solve(const Tensor& b) const {
  if (b.size() != n_) throw DimensionError("LU solve: rhs " + b.shape_string());
  if (singular()) throw NumericError("LU solve: matrix is singular");
  Tensor x({n_});
  for (std::size_t i = 0; i < n_; ++i) {
    double acc = b[perm_[i]];
    for (std::size_t j = 0; j < i; ++j) acc -= lu_(i, j) * x[j];
    x[i] = acc;
  }
  for (std::size_t i = n_; i-- > 0;) {
    double acc = x[i];
    for (std::size_t j = i + 1; j < n_; ++j) acc -= lu_(i, j) * x[j];
    x[i] = acc / lu_(i, i);
  }
  check_finite(x, "LU solve");
  return x;
}

Tensor Lu::inverse() const {
  Tensor inv({n_, n_});
  Tensor e({n_});
  for (std::size_t c = 0; c < n_; ++c) {
    e[c] = 1.0;
    const Tensor col = solve(e);
    e[c] = 0.0;
    for (std::size_t r = 0; r < n_; ++r) inv(r, c) = col[r];
  }
  return inv;
}

double determinant(const Tensor& a) { return Lu(a).determinant(); }

Tensor inverse(const Tensor& a) { return Lu(a).inverse(); }

Tensor solve(const Tensor& a, const Tensor& b) { return Lu(a).solve(b); }

Tensor lstsq(const Tensor& a, const Tensor& b, double rcond) {
  if (a.rank() != 2) throw DimensionError("lstsq: expected a matrix, got " + a.shape_string());
  const std::size_t m = a.rows(), n = a.cols();
  if (b.size() != m) throw DimensionError("lstsq: rhs " + b.shape_string() + " for " + a.shape_string());
  if (m < n) throw DimensionError("lstsq: underdetermined system " + a.shape_string());

  Tensor r = a;
  std::vector<double> qtb(b.data().begin(), b.data().end());
  std::vector<double> v(m);
  for (std::size_t k = 0; k < n; ++k) {
    double norm = 0.0;
    for (std::size_t i = k; i < m; ++i) norm += r(i, k) * r(i, k);
    norm = std::sqrt(norm);
    if (norm == 0.0) continue;
    const double alpha = r(k, k) > 0 ? -norm : norm;
    for (std::size_t i = 0; i < m; ++i) v[i] = i < k ? 0.0 : r(i, k);
    v[k] -= alpha;
    double vnorm2 = 0.0;
    for (std::size_t i = k; i < m; ++i) vnorm2 += v[i] * v[i];
    if (vnorm2 == 0.0) continue;
    for (std::size_t j = k; j < n; ++j) {
      double s = 0.0;
      for (std::size_t i = k; i < m; ++i) s += v[i] * r(i, j);
      s = 2.0 * s / vnorm2;
      for (std::size_t i = k; i < m; ++i) r(i, j) -= s * v[i];
    }
    double s = 0.0;
    for (std::size_t i = k; i < m; ++i) s += v[i] * qtb[i];
    s = 2.0 * s / vnorm2;
    for (std::size_t i = k; i < m; ++i) qtb[i] -= s * v[i];
  }

  double rmax = 0.0;
  for (std::size_t k = 0; k < n; ++k) rmax = std::max(rmax, std::abs(r(k, k)));
  Tensor x({n});
  for (std::size_t k = n; k-- > 0;) {
    if (std::abs(r(k, k)) <= rcond * rmax || rmax == 0.0) {
      x[k] = 0.0;
      continue;
    }
    double acc = qtb[k];
    for (std::size_t j = k + 1; j < n; ++j) acc -= r(k, j) * x[j];
    x[k] = acc / r(k, k);
  }
  check_finite(x, "lstsq");
  return x;
}

PowerIterationResult spectral_norm(const Tensor& w, int max_iters, double rel_tol) {
  if (w.rank() != 2) throw DimensionError("spectral_norm: expected a matrix, got " + w.shape_string());
  const std::size_t n = w.cols();
  // Deterministic start with no special alignment to the coordinate axes.
  Tensor v({n});
  for (std::size_t i = 0; i < n; ++i) v[i] = 1.0 + 0.5 * std::sin(1.0 + 2.0 * static_cast<double>(i));
  double vn = norm2(v);
  for (double& e : v.data()) e /= vn;

  double sigma = 0.0;
  int it = 0;
  for (; it < max_iters; ++it) {
    const Tensor u = matvec(w, v);
    const double next = norm2(u);
    if (next == 0.0) return {0.0, it + 1};
    Tensor wtu = matvec_transposed(w, u);
    const double wn = norm2(wtu);
    if (wn == 0.0) return {next, it + 1};
    for (std::size_t i = 0; i < n; ++i) v[i] = wtu[i] / wn;
    const bool settled = std::abs(next - sigma) <= rel_tol * next;
    sigma = next;
    if (settled) {
      ++it;
      break;
    }
  }
  // ||W v|| for the final unit direction never exceeds sigma_max
  sigma = std::max(sigma, norm2(matvec(w, v)));
  return {sigma, it};
}

}  // namespace lion::linalg
