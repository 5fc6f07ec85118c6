#include "lion/tensor.hpp"

#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "lion/errors.hpp"

namespace lion {

namespace {

std::size_t element_count(const Tensor::Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void check_rank(const Tensor::Shape& shape) {
  if (shape.size() > 2) {
    throw DimensionError("tensor rank " + std::to_string(shape.size()) + " exceeds 2");
  }
}

}  // namespace

Tensor::Tensor() : data_(1, 0.0) {}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
  check_rank(shape_);
  data_.assign(element_count(shape_), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_rank(shape_);
  if (element_count(shape_) != data_.size()) {
    throw DimensionError("shape " + shape_string() + " needs " +
                         std::to_string(element_count(shape_)) + " elements, got " +
                         std::to_string(data_.size()));
  }
  check_finite(*this, "Tensor construction");
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> values;
  values.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix literal");
    values.insert(values.end(), row.begin(), row.end());
  }
  return matrix(r, c, std::move(values));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

std::size_t Tensor::rows() const noexcept { return shape_.empty() ? 1 : shape_[0]; }

std::size_t Tensor::cols() const noexcept { return shape_.size() == 2 ? shape_[1] : 1; }

std::span<const double> Tensor::row(std::size_t r) const {
  if (rank() != 2 || r >= shape_[0]) throw IndexError("row " + std::to_string(r) + " of " + shape_string());
  return std::span<const double>(data_).subspan(r * shape_[1], shape_[1]);
}

std::span<double> Tensor::row(std::size_t r) {
  if (rank() != 2 || r >= shape_[0]) throw IndexError("row " + std::to_string(r) + " of " + shape_string());
  return std::span<double>(data_).subspan(r * shape_[1], shape_[1]);
}

Tensor Tensor::row_tensor(std::size_t r) const {
  auto view = row(r);
  return Tensor::vector(std::vector<double>(view.begin(), view.end()));
}

bool Tensor::is_finite() const noexcept {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string Tensor::shape_string() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << 'x';
    os << shape_[i];
  }
  os << ']';
  return os.str();
}

bool bit_equal(const Tensor& a, const Tensor& b) noexcept {
  if (!a.same_shape(b)) return false;
  return std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(double)) == 0;
}

void check_finite(const Tensor& t, const char* context) {
  if (!t.is_finite()) {
    throw NumericError(std::string("non-finite value in ") + context);
  }
}

Param::Param(std::string n, Tensor v)
    : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros_like(value)) {}

void Param::zero_grad() {
  for (double& g : grad.data()) g = 0.0;
}

ParamRef ref(Param& p) { return ParamRef{p.name, p.value.data(), p.grad.data()}; }

std::size_t count_scalars(std::span<const ParamRef> params) noexcept {
  std::size_t n = 0;
  for (const auto& p : params) n += p.size();
  return n;
}

void check_unique_names(std::span<const ParamRef> params) {
  std::unordered_set<std::string> seen;
  for (const auto& p : params) {
    if (!seen.insert(p.name).second) throw StateError("duplicate parameter name '" + p.name + "'");
  }
}

}  // namespace lion
