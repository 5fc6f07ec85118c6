#include "lion/ops.hpp"

#include <algorithm>
#include <cmath>

#include "lion/errors.hpp"

namespace lion {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shape " + a.shape_string() + " vs " + b.shape_string());
  }
}

void require_rank(const Tensor& a, std::size_t rank, const char* op) {
  if (a.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         a.shape_string());
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions disagree for " + a.shape_string() + " * " +
                         b.shape_string());
  }
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a(i, p);
      if (aip == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out(i, j) += aip * b(p, j);
    }
  }
  check_finite(out, "matmul");
  return out;
}

MatmulGrads matmul_backward(const Tensor& a, const Tensor& b, const Tensor& gy) {
  if (gy.rank() != 2 || gy.rows() != a.rows() || gy.cols() != b.cols()) {
    throw DimensionError("matmul_backward: cotangent " + gy.shape_string() + " does not match " +
                         a.shape_string() + " * " + b.shape_string());
  }
  return {matmul(gy, transpose(b)), matmul(transpose(a), gy)};
}

Tensor matvec(const Tensor& a, const Tensor& x) {
  require_rank(a, 2, "matvec");
  require_rank(x, 1, "matvec");
  if (a.cols() != x.size()) {
    throw DimensionError("matvec: " + a.shape_string() + " * " + x.shape_string());
  }
  const std::size_t m = a.rows(), k = a.cols();
  Tensor out({m});
  const double* ad = a.data().data();
  const double* xd = x.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    const double* row = ad + i * k;
    for (std::size_t p = 0; p < k; ++p) acc += row[p] * xd[p];
    out[i] = acc;
  }
  check_finite(out, "matvec");
  return out;
}

Tensor matvec_transposed(const Tensor& a, const Tensor& y) {
  require_rank(a, 2, "matvec_transposed");
  require_rank(y, 1, "matvec_transposed");
  if (a.rows() != y.size()) {
    throw DimensionError("matvec_transposed: " + a.shape_string() + "^T * " + y.shape_string());
  }
  const std::size_t m = a.rows(), k = a.cols();
  Tensor out({k});
  const double* ad = a.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    const double yi = y[i];
    if (yi == 0.0) continue;
    const double* row = ad + i * k;
    for (std::size_t p = 0; p < k; ++p) out[p] += row[p] * yi;
  }
  check_finite(out, "matvec_transposed");
  return out;
}

Tensor outer(const Tensor& u, const Tensor& v) {
  require_rank(u, 1, "outer");
  require_rank(v, 1, "outer");
  Tensor out({u.size(), v.size()});
  for (std::size_t i = 0; i < u.size(); ++i) {
    for (std::size_t j = 0; j < v.size(); ++j) out(i, j) = u[i] * v[j];
  }
  check_finite(out, "outer");
  return out;
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  Tensor out({a.cols(), a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  check_finite(out, "add");
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  check_finite(out, "sub");
  return out;
}

Tensor scale(const Tensor& a, double s) {
  Tensor out = a;
  for (double& v : out.data()) v *= s;
  check_finite(out, "scale");
  return out;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "hadamard");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  check_finite(out, "hadamard");
  return out;
}

void axpy(double alpha, const Tensor& x, Tensor& y) {
  require_same_shape(x, y, "axpy");
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += alpha * x[i];
  check_finite(y, "axpy");
}

double dot(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) {
    throw DimensionError("dot: " + a.shape_string() + " vs " + b.shape_string());
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm2(const Tensor& a) { return std::sqrt(dot(a, a)); }

double sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  return acc;
}

Tensor add_rowwise(const Tensor& a, const Tensor& bias) {
  require_rank(bias, 1, "add_rowwise");
  if (a.rank() == 1) return add(a, bias);
  require_rank(a, 2, "add_rowwise");
  if (a.cols() != bias.size()) {
    throw DimensionError("add_rowwise: " + a.shape_string() + " + " + bias.shape_string());
  }
  Tensor out = a;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) += bias[j];
  }
  check_finite(out, "add_rowwise");
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out = x;
  for (double& v : out.data()) v = std::max(v, 0.0);
  return out;
}

Tensor relu_backward(const Tensor& x, const Tensor& gy) {
  require_same_shape(x, gy, "relu_backward");
  Tensor out = gy;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!(x[i] > 0.0)) out[i] = 0.0;
  }
  return out;
}

Tensor tanh(const Tensor& x) {
  Tensor out = x;
  for (double& v : out.data()) v = std::tanh(v);
  return out;
}

Tensor tanh_backward(const Tensor& x, const Tensor& gy) {
  require_same_shape(x, gy, "tanh_backward");
  Tensor out = gy;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double t = std::tanh(x[i]);
    out[i] *= 1.0 - t * t;
  }
  return out;
}

Tensor softmax(const Tensor& logits) {
  require_rank(logits, 1, "softmax");
  Tensor out = logits;
  const double m = *std::max_element(out.data().begin(), out.data().end());
  double z = 0.0;
  for (double& v : out.data()) {
    v = std::exp(v - m);
    z += v;
  }
  for (double& v : out.data()) v /= z;
  return out;
}

double cross_entropy(const Tensor& logits, std::size_t label) {
  require_rank(logits, 1, "cross_entropy");
  if (logits.size() < 2) throw DimensionError("cross_entropy needs at least 2 classes");
  if (label >= logits.size()) {
    throw IndexError("cross_entropy: label " + std::to_string(label) + " out of range for " +
                     std::to_string(logits.size()) + " classes");
  }
  const auto d = logits.data();
  const auto top = static_cast<std::size_t>(std::max_element(d.begin(), d.end()) - d.begin());
  const double m = d[top];
  // log-sum-exp = m + log1p(sum of the non-max terms); log1p keeps tiny losses accurate
  double rest = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (i != top) rest += std::exp(d[i] - m);
  }
  return std::max(0.0, std::log1p(rest) - (d[label] - m));
}

Tensor cross_entropy_backward(const Tensor& logits, std::size_t label, double upstream) {
  if (label >= logits.size()) {
    throw IndexError("cross_entropy_backward: label " + std::to_string(label) + " out of range");
  }
  Tensor g = softmax(logits);
  g[label] -= 1.0;
  if (upstream != 1.0) {
    for (double& v : g.data()) v *= upstream;
  }
  return g;
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::tanh:
      return "tanh";
    case Activation::identity:
      return "identity";
    case Activation::relu:
      return "relu";
  }
  return "?";
}

Activation activation_from_string(const std::string& name) {
  if (name == "tanh") return Activation::tanh;
  if (name == "identity") return Activation::identity;
  if (name == "relu") return Activation::relu;
  throw ArgumentError("unknown activation '" + name + "'");
}

Tensor activate(Activation act, Tensor a) {
  switch (act) {
    case Activation::tanh:
      for (double& v : a.data()) v = std::tanh(v);
      break;
    case Activation::relu:
      for (double& v : a.data()) v = v > 0.0 ? v : 0.0;
      break;
    case Activation::identity:
      break;
  }
  return a;
}

Tensor activation_slope(Activation act, const Tensor& a) {
  Tensor d = Tensor::zeros_like(a);
  for (std::size_t i = 0; i < a.size(); ++i) {
    switch (act) {
      case Activation::tanh: {
        const double t = std::tanh(a[i]);
        d[i] = 1.0 - t * t;
        break;
      }
      case Activation::relu:
        d[i] = a[i] > 0.0 ? 1.0 : 0.0;
        break;
      case Activation::identity:
        d[i] = 1.0;
        break;
    }
  }
  return d;
}

Tensor finite_diff_grad(const ScalarFn& f, const Tensor& x, double step) {
  if (!(step > 0.0)) throw ArgumentError("finite_diff_grad: step must be positive");
  Tensor grad = Tensor::zeros_like(x);
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + step;
    const double fp = f(probe);
    probe[i] = orig - step;
    const double fm = f(probe);
    probe[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericError("finite_diff_grad: non-finite function value at coordinate " +
                         std::to_string(i));
    }
    grad[i] = (fp - fm) / (2.0 * step);
  }
  return grad;
}

double relative_error(const Tensor& a, const Tensor& b, double floor) {
  if (a.size() != b.size()) {
    throw DimensionError("relative_error: " + a.shape_string() + " vs " + b.shape_string());
  }
  double diff = 0.0, ref = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    ref += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max(std::sqrt(ref), floor);
}

}  // namespace lion
