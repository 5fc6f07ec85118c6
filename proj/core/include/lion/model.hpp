#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lion/tensor.hpp"

namespace lion {

enum class Split { train, test };

std::string to_string(Split s);

/// Labelled samples: one input per row.
struct Dataset {
  Tensor inputs;                    // [N x d]
  std::vector<std::size_t> labels;  // length N
  std::size_t num_classes = 0;
  Split split = Split::train;
  std::uint64_t seed = 0;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t dim() const noexcept { return inputs.cols(); }
  Tensor sample(std::size_t i) const { return inputs.row_tensor(i); }
  std::vector<std::size_t> class_counts() const;
  /// Throws ArgumentError on empty data, label/row mismatch or out-of-range labels.
  void validate() const;
};

/// Rows `indices` of `ds`, in order.
Dataset subset(const Dataset& ds, std::span<const std::size_t> indices);

/// A classifier whose trainable parameters an optimizer can drive.
class TrainableModel {
 public:
  virtual ~TrainableModel() = default;

  /// Views of the trainable values and their gradient accumulators, in a
  /// fixed order with unique names.
  virtual std::vector<ParamRef> trainable_params() = 0;

  /// Zeroes the gradients, then returns the mean cross-entropy over the
  /// rows `batch` of `ds` and leaves d(loss)/d(theta) in the accumulators.
  virtual double loss_and_grad(const Dataset& ds, std::span<const std::size_t> batch) = 0;

  virtual Tensor logits(const Tensor& x) const = 0;
  virtual std::size_t num_classes() const = 0;

  /// Re-imposes parameter constraints after an update.
  virtual void project() {}

  /// Named scalars worth tracing per epoch.
  virtual std::vector<std::pair<std::string, double>> diagnostics() const { return {}; }
};

std::size_t argmax(const Tensor& v);

/// Fraction of rows of `ds` whose argmax logit equals the label.
double accuracy(const TrainableModel& model, const Dataset& ds);

/// Mean cross-entropy over all of `ds` (no gradients).
double mean_loss(const TrainableModel& model, const Dataset& ds);

}  // namespace lion
