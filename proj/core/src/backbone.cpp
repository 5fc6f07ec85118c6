#include "lion/backbone.hpp"

#include <cmath>

#include "lion/errors.hpp"

namespace lion {

Tensor Dense::forward(const Tensor& x, Tensor* pre) const {
  Tensor a = add(matvec(W, x), b);
  if (pre) *pre = a;
  return activate(activation, std::move(a));
}

DenseGrads DenseGrads::zeros_like(const Dense& layer) {
  return {Tensor::zeros_like(layer.W), Tensor::zeros_like(layer.b)};
}

void DenseGrads::zero() {
  for (double& v : W.data()) v = 0.0;
  for (double& v : b.data()) v = 0.0;
}

Dense make_dense(std::size_t in, std::size_t out, Rng& rng, Activation act) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Tensor w({out, in});
  for (double& v : w.data()) v = rng.uniform(-bound, bound);
  return Dense{std::move(w), Tensor({out}), act};
}

Dense zero_dense(std::size_t in, std::size_t out) { return Dense{Tensor({out, in}), Tensor({out})}; }

Tensor dense_backward(const Dense& layer, const Tensor& x, const Tensor& pre, const Tensor& gy,
                      DenseGrads* grads) {
  const Tensor delta = hadamard(activation_slope(layer.activation, pre), gy);
  if (grads) {
    const std::size_t out = layer.out_dim(), in = layer.in_dim();
    for (std::size_t i = 0; i < out; ++i) {
      const double di = delta[i];
      grads->b[i] += di;
      if (di == 0.0) continue;
      for (std::size_t j = 0; j < in; ++j) grads->W(i, j) += di * x[j];
    }
  }
  return matvec_transposed(layer.W, delta);
}

Backbone::Backbone(std::vector<Dense> layers, bool frozen) : layers_(std::move(layers)), frozen_(frozen) {
  if (layers_.empty()) throw ArgumentError("backbone needs at least one layer");
  for (std::size_t k = 1; k < layers_.size(); ++k) {
    if (layers_[k].in_dim() != layers_[k - 1].out_dim()) {
      throw DimensionError("backbone layer " + std::to_string(k) + " input " +
                           std::to_string(layers_[k].in_dim()) + " does not follow output " +
                           std::to_string(layers_[k - 1].out_dim()));
    }
  }
}

Backbone Backbone::mlp(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng) {
  std::vector<Dense> layers;
  layers.push_back(make_dense(in, hidden, rng, Activation::tanh));
  layers.push_back(make_dense(hidden, out, rng, Activation::tanh));
  return Backbone(std::move(layers));
}

std::size_t Backbone::input_dim() const {
  if (layers_.empty()) throw StateError("empty backbone");
  return layers_.front().in_dim();
}

std::size_t Backbone::output_dim() const {
  if (layers_.empty()) throw StateError("empty backbone");
  return layers_.back().out_dim();
}

std::size_t Backbone::param_count() const noexcept {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.param_count();
  return n;
}

std::size_t Backbone::bias_count() const noexcept {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.b.size();
  return n;
}

Tensor Backbone::forward(const Tensor& x, Trace* trace) const {
  if (trace) {
    trace->inputs.clear();
    trace->pre.clear();
  }
  Tensor cur = x;
  for (const auto& layer : layers_) {
    Tensor pre;
    Tensor next = layer.forward(cur, &pre);
    if (trace) {
      trace->inputs.push_back(std::move(cur));
      trace->pre.push_back(std::move(pre));
    }
    cur = std::move(next);
  }
  return cur;
}

Tensor Backbone::backward(const Trace& trace, const Tensor& gy, std::vector<DenseGrads>* grads) const {
  if (trace.inputs.size() != layers_.size()) throw StateError("backbone trace does not match layers");
  if (grads && frozen_) throw StateError("frozen backbone cannot accumulate parameter gradients");
  if (grads && grads->size() != layers_.size()) throw StateError("backbone grads do not match layers");
  Tensor cot = gy;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    cot = dense_backward(layers_[k], trace.inputs[k], trace.pre[k], cot, grads ? &(*grads)[k] : nullptr);
  }
  return cot;
}

std::vector<DenseGrads> Backbone::zero_grads() const {
  std::vector<DenseGrads> g;
  g.reserve(layers_.size());
  for (const auto& l : layers_) g.push_back(DenseGrads::zeros_like(l));
  return g;
}

std::vector<ParamRef> Backbone::params(std::vector<DenseGrads>& grads, bool biases_only) {
  if (frozen_) throw StateError("frozen backbone exposes no trainable parameters");
  if (grads.size() != layers_.size()) throw StateError("backbone grads do not match layers");
  std::vector<ParamRef> refs;
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const std::string prefix = "backbone." + std::to_string(k);
    if (!biases_only) refs.push_back({prefix + ".W", layers_[k].W.data(), grads[k].W.data()});
    refs.push_back({prefix + ".b", layers_[k].b.data(), grads[k].b.data()});
  }
  return refs;
}

Classifier::Classifier(Backbone backbone, Dense head, TuneScope scope)
    : backbone_(std::move(backbone)), head_(std::move(head)), scope_(scope) {
  if (head_.in_dim() != backbone_.output_dim()) {
    throw DimensionError("head input " + std::to_string(head_.in_dim()) + " does not match backbone output " +
                         std::to_string(backbone_.output_dim()));
  }
  backbone_.set_frozen(scope_ == TuneScope::head);
  backbone_grads_ = backbone_.zero_grads();
  head_grads_ = DenseGrads::zeros_like(head_);
}

std::vector<ParamRef> Classifier::trainable_params() {
  std::vector<ParamRef> refs;
  if (scope_ != TuneScope::head) refs = backbone_.params(backbone_grads_, scope_ == TuneScope::bias);
  refs.push_back({"head.W", head_.W.data(), head_grads_.W.data()});
  refs.push_back({"head.b", head_.b.data(), head_grads_.b.data()});
  return refs;
}

double Classifier::loss_and_grad(const Dataset& ds, std::span<const std::size_t> batch) {
  if (batch.empty()) throw ArgumentError("loss over an empty batch");
  for (auto& g : backbone_grads_) g.zero();
  head_grads_.zero();
  const double inv = 1.0 / static_cast<double>(batch.size());
  const bool backbone_trains = scope_ != TuneScope::head;
  double total = 0.0;
  Backbone::Trace trace;
  for (std::size_t i : batch) {
    const Tensor x = ds.sample(i);
    const Tensor z = backbone_.forward(x, backbone_trains ? &trace : nullptr);
    Tensor pre;
    const Tensor out = head_.forward(z, &pre);
    total += cross_entropy(out, ds.labels[i]);
    const Tensor g = cross_entropy_backward(out, ds.labels[i], inv);
    const Tensor gz = dense_backward(head_, z, pre, g, &head_grads_);
    if (backbone_trains) backbone_.backward(trace, gz, &backbone_grads_);
  }
  return total * inv;
}

Tensor Classifier::logits(const Tensor& x) const { return head_.forward(backbone_.forward(x)); }

Backbone Classifier::release_backbone() {
  Backbone b = std::move(backbone_);
  b.set_frozen(true);
  return b;
}

}  // namespace lion
