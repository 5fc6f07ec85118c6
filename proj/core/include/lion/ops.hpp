#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include "lion/tensor.hpp"

namespace lion {

// Every primitive below has a companion *_backward returning the
// vector-Jacobian product for an upstream cotangent.

/// [m x k] * [k x n] -> [m x n].
Tensor matmul(const Tensor& a, const Tensor& b);

struct MatmulGrads {
  Tensor a;
  Tensor b;
};
/// Returns (gy * b^T, a^T * gy).
MatmulGrads matmul_backward(const Tensor& a, const Tensor& b, const Tensor& gy);

/// [m x k] * [k] -> [m].
Tensor matvec(const Tensor& a, const Tensor& x);
/// [m x k]^T * [m] -> [k].
Tensor matvec_transposed(const Tensor& a, const Tensor& y);
/// [m] (x) [n] -> [m x n].
Tensor outer(const Tensor& u, const Tensor& v);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor hadamard(const Tensor& a, const Tensor& b);
/// y += alpha * x, in place.
void axpy(double alpha, const Tensor& x, Tensor& y);
double dot(const Tensor& a, const Tensor& b);
double norm2(const Tensor& a);
double sum(const Tensor& a);
/// Adds a rank-1 bias to every row of a matrix (or to a vector).
Tensor add_rowwise(const Tensor& a, const Tensor& bias);

Tensor relu(const Tensor& x);
/// Subgradient 0 at exactly 0.
Tensor relu_backward(const Tensor& x, const Tensor& gy);
Tensor tanh(const Tensor& x);
/// Takes the pre-activation `x`.
Tensor tanh_backward(const Tensor& x, const Tensor& gy);

/// Numerically stable softmax of a rank-1 tensor.
Tensor softmax(const Tensor& logits);
/// -log softmax(logits)[label].
double cross_entropy(const Tensor& logits, std::size_t label);
/// softmax(logits) - onehot(label), scaled by the upstream scalar.
Tensor cross_entropy_backward(const Tensor& logits, std::size_t label, double upstream = 1.0);

enum class Activation { tanh, identity, relu };

std::string to_string(Activation a);
/// Throws ArgumentError for unknown names.
Activation activation_from_string(const std::string& name);
/// Applies the activation elementwise to a pre-activation.
Tensor activate(Activation act, Tensor pre);
/// Elementwise derivative at the pre-activation (relu: 0 at the kink).
Tensor activation_slope(Activation act, const Tensor& pre);

using ScalarFn = std::function<double(const Tensor&)>;

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h per coordinate.
/// Throws NumericError if f returns a non-finite value.
Tensor finite_diff_grad(const ScalarFn& f, const Tensor& x, double step);

/// ||a - b|| / max(||b||, floor): the norm-wise relative error used by every
/// gradient check in this project.
double relative_error(const Tensor& a, const Tensor& b, double floor = 1e-12);

}  // namespace lion
