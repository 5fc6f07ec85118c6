#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace lion {

/// Dense real array of rank 0, 1 or 2 stored row-major in 64-bit floats.
///
/// A rank-2 tensor doubles as a batch: each row is one sample.
class Tensor {
 public:
  using Shape = std::vector<std::size_t>;

  /// Rank-0 zero.
  Tensor();
  /// Zero-filled tensor of the given shape.
  explicit Tensor(Shape shape);
  /// Takes ownership of `data`; throws DimensionError if the element count
  /// disagrees with `shape` and NumericError if any element is non-finite.
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape()); }
  static Tensor identity(std::size_t n);

  std::size_t rank() const noexcept { return shape_.size(); }
  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }

  /// Leading dimension; 1 for rank 0.
  std::size_t rows() const noexcept;
  /// Trailing dimension of a matrix; 1 for rank 0 and rank 1.
  std::size_t cols() const noexcept;

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }

  /// View of row `r` of a matrix.
  std::span<const double> row(std::size_t r) const;
  std::span<double> row(std::size_t r);
  /// Copy of row `r` as a rank-1 tensor.
  Tensor row_tensor(std::size_t r) const;

  bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }
  bool is_finite() const noexcept;
  std::string shape_string() const;

  /// Elementwise equality; -0.0 == 0.0. Use bit_equal for byte identity.
  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// True when shapes match and every element has an identical bit pattern.
bool bit_equal(const Tensor& a, const Tensor& b) noexcept;

/// Throws NumericError naming `context` if `t` holds a NaN or infinity.
void check_finite(const Tensor& t, const char* context);

/// Owning named parameter with a gradient accumulator of the same shape.
struct Param {
  Param(std::string name, Tensor value);

  std::string name;
  Tensor value;
  Tensor grad;

  void zero_grad();
};

/// Non-owning view of one trainable parameter: flat value and gradient
/// storage living inside some model.
struct ParamRef {
  std::string name;
  std::span<double> value;
  std::span<double> grad;

  std::size_t size() const noexcept { return value.size(); }
};

ParamRef ref(Param& p);

/// Total scalar count over a parameter list.
std::size_t count_scalars(std::span<const ParamRef> params) noexcept;

/// Throws StateError if two refs share a name.
void check_unique_names(std::span<const ParamRef> params);

}  // namespace lion
