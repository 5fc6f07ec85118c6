#include "lion/model.hpp"

#include <algorithm>

#include "lion/errors.hpp"
#include "lion/ops.hpp"

namespace lion {

std::string to_string(Split s) { return s == Split::train ? "train" : "test"; }

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(num_classes, 0);
  for (std::size_t y : labels) {
    if (y < num_classes) ++counts[y];
  }
  return counts;
}

void Dataset::validate() const {
  if (labels.empty()) throw ArgumentError("dataset is empty");
  if (inputs.rank() != 2 || inputs.rows() != labels.size()) {
    throw ArgumentError("dataset inputs " + inputs.shape_string() + " do not match " +
                        std::to_string(labels.size()) + " labels");
  }
  for (std::size_t y : labels) {
    if (y >= num_classes) {
      throw ArgumentError("label " + std::to_string(y) + " out of range for " + std::to_string(num_classes) +
                          " classes");
    }
  }
}

Dataset subset(const Dataset& ds, std::span<const std::size_t> indices) {
  const std::size_t d = ds.dim();
  std::vector<double> values;
  values.reserve(indices.size() * d);
  std::vector<std::size_t> labels;
  labels.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= ds.size()) throw IndexError("subset index " + std::to_string(i) + " out of range");
    const auto row = ds.inputs.row(i);
    values.insert(values.end(), row.begin(), row.end());
    labels.push_back(ds.labels[i]);
  }
  return Dataset{Tensor::matrix(indices.size(), d, std::move(values)), std::move(labels), ds.num_classes,
                 ds.split, ds.seed};
}

std::size_t argmax(const Tensor& v) {
  const auto d = v.data();
  return static_cast<std::size_t>(std::max_element(d.begin(), d.end()) - d.begin());
}

double accuracy(const TrainableModel& model, const Dataset& ds) {
  if (ds.size() == 0) throw ArgumentError("accuracy of an empty dataset");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (argmax(model.logits(ds.sample(i))) == ds.labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(ds.size());
}

double mean_loss(const TrainableModel& model, const Dataset& ds) {
  if (ds.size() == 0) throw ArgumentError("loss of an empty dataset");
  double total = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) total += cross_entropy(model.logits(ds.sample(i)), ds.labels[i]);
  return total / static_cast<double>(ds.size());
}

}  // namespace lion
