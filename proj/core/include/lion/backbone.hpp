#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "lion/model.hpp"
#include "lion/ops.hpp"
#include "lion/rng.hpp"
#include "lion/tensor.hpp"

namespace lion {

/// y = act(W x + b).
struct Dense {
  Tensor W;  // [out x in]
  Tensor b;  // [out]
  Activation activation = Activation::identity;

  std::size_t in_dim() const noexcept { return W.cols(); }
  std::size_t out_dim() const noexcept { return W.rows(); }
  std::size_t param_count() const noexcept { return W.size() + b.size(); }

  /// Stores the pre-activation in `pre` when given.
  Tensor forward(const Tensor& x, Tensor* pre = nullptr) const;
};

struct DenseGrads {
  Tensor W;
  Tensor b;

  static DenseGrads zeros_like(const Dense& layer);
  void zero();
};

/// Uniform(+-1/sqrt(in)) weights, zero bias.
Dense make_dense(std::size_t in, std::size_t out, Rng& rng, Activation act = Activation::identity);
/// All-zero weights and bias (fresh classification head).
Dense zero_dense(std::size_t in, std::size_t out);

/// Backward through one Dense layer given its input and pre-activation.
/// Accumulates into `grads` when non-null; returns d/dx.
Tensor dense_backward(const Dense& layer, const Tensor& x, const Tensor& pre, const Tensor& gy,
                      DenseGrads* grads);

/// Stack of affine+activation stages standing in for a pretrained feature
/// extractor. While frozen, no parameter views are handed out.
class Backbone {
 public:
  struct Trace {
    std::vector<Tensor> inputs;
    std::vector<Tensor> pre;
  };

  Backbone() = default;
  explicit Backbone(std::vector<Dense> layers, bool frozen = true);

  /// in -> hidden (tanh) -> out (tanh).
  static Backbone mlp(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng);

  const std::vector<Dense>& layers() const noexcept { return layers_; }
  bool frozen() const noexcept { return frozen_; }
  void set_frozen(bool frozen) noexcept { frozen_ = frozen; }

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::size_t param_count() const noexcept;
  std::size_t bias_count() const noexcept;

  Tensor forward(const Tensor& x, Trace* trace = nullptr) const;
  /// Returns d/dx. Parameter grads are accumulated only when `grads` is
  /// non-null, which requires an unfrozen backbone.
  Tensor backward(const Trace& trace, const Tensor& gy, std::vector<DenseGrads>* grads = nullptr) const;

  std::vector<DenseGrads> zero_grads() const;

  /// Parameter views over the layers (weights and biases, or biases only).
  /// Throws StateError when frozen.
  std::vector<ParamRef> params(std::vector<DenseGrads>& grads, bool biases_only = false);

 private:
  std::vector<Dense> layers_;
  bool frozen_ = true;
};

/// Which part of a plain backbone+head classifier trains.
enum class TuneScope { head, bias, full };

/// head(F(x)) with a configurable trainable scope; used for pretraining and
/// for the head/bias/full fine-tuning baselines.
class Classifier final : public TrainableModel {
 public:
  Classifier(Backbone backbone, Dense head, TuneScope scope);

  std::vector<ParamRef> trainable_params() override;
  double loss_and_grad(const Dataset& ds, std::span<const std::size_t> batch) override;
  Tensor logits(const Tensor& x) const override;
  std::size_t num_classes() const override { return head_.out_dim(); }

  const Backbone& backbone() const noexcept { return backbone_; }
  const Dense& head() const noexcept { return head_; }
  TuneScope scope() const noexcept { return scope_; }
  /// Hands the (possibly fine-tuned) backbone back, frozen.
  Backbone release_backbone();

 private:
  Backbone backbone_;
  Dense head_;
  TuneScope scope_;
  std::vector<DenseGrads> backbone_grads_;
  DenseGrads head_grads_;
};

}  // namespace lion
