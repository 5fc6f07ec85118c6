#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lion/backbone.hpp"
#include "lion/deq.hpp"
#include "lion/model.hpp"
#include "lion/rng.hpp"

namespace lion {

/// Trainable logits of one blending gate.
struct GatePair {
  double g_alpha = 0.0;
  double g_beta = 0.0;
};

/// Convex blending weights: alpha + beta == 1 exactly, both in (0, 1).
struct GateCoeffs {
  double alpha;
  double beta;
};

/// Two-way softmax of the gate logits. The smaller weight is floored at
/// 2^-53 so that both stay strictly inside (0, 1) in double precision while
/// their floating-point sum is exactly 1.
GateCoeffs gate_coeffs(const GatePair& g);

/// Maps (dL/dalpha, dL/dbeta) to (dL/dg_alpha, dL/dg_beta).
GatePair gate_backward(const GateCoeffs& c, double d_alpha, double d_beta);

struct LionOptions {
  double kappa = 0.9;
  int layers = 1;  // DEQ cells stacked per prompt block
  Activation activation = Activation::tanh;
  /// P2 consumes F(x) (two backbone passes). When false P2 consumes F(x~)
  /// and a single pass is made.
  bool two_pass = true;
  deq::SolverConfig solver;

  void validate() const;
};

/// Frozen backbone wrapped by two equilibrium prompt blocks:
///
///   x~ = a1 x + b1 P1(x)
///   z~ = a2 F(x~) + b2 proj(P2(F(x)))
///   logits = head(z~)
///
/// Only the prompt cells, proj, head and the gate logits train.
class PromptModel final : public TrainableModel {
 public:
  /// Fresh prompts around `backbone` with a zero head for `num_classes`.
  PromptModel(Backbone backbone, std::size_t num_classes, Rng& rng, LionOptions opts = {});
  PromptModel(Backbone backbone, std::vector<deq::DeqCell> p1, std::vector<deq::DeqCell> p2, Dense proj,
              Dense head, GatePair gate1, GatePair gate2, LionOptions opts);

  const Backbone& backbone() const noexcept { return backbone_; }
  const std::vector<deq::DeqCell>& p1() const noexcept { return p1_; }
  const std::vector<deq::DeqCell>& p2() const noexcept { return p2_; }
  const Dense& proj() const noexcept { return proj_; }
  const Dense& head() const noexcept { return head_; }
  const GatePair& gate1() const noexcept { return gate1_; }
  const GatePair& gate2() const noexcept { return gate2_; }
  const LionOptions& options() const noexcept { return opts_; }

  // Mutable access for experiments and tests; the backbone stays read-only.
  std::vector<deq::DeqCell>& p1() noexcept { return p1_; }
  std::vector<deq::DeqCell>& p2() noexcept { return p2_; }
  Dense& proj() noexcept { return proj_; }
  Dense& head() noexcept { return head_; }
  GatePair& gate1() noexcept { return gate1_; }
  GatePair& gate2() noexcept { return gate2_; }
  deq::SolverConfig& solver() noexcept { return opts_.solver; }

  std::size_t input_dim() const { return backbone_.input_dim(); }
  std::size_t repr_dim() const { return backbone_.output_dim(); }

  Tensor blend_input(const Tensor& x) const;
  Tensor blend_repr(const Tensor& x) const;
  Tensor forward_full(const Tensor& x) const;
  /// Row-wise forward_full over a [N x d] batch.
  Tensor forward_batch(const Tensor& xs) const;

  /// Mean cross-entropy over the rows `batch` without touching gradients.
  double loss(const Dataset& ds, std::span<const std::size_t> batch) const;

  /// Zeroes gradients and backpropagates the cotangent `d_repr` of
  /// blend_repr(x) into every trainable parameter except the head.
  void repr_vjp(const Tensor& x, const Tensor& d_repr);

  std::vector<ParamRef> trainable_params() override;
  double loss_and_grad(const Dataset& ds, std::span<const std::size_t> batch) override;
  Tensor logits(const Tensor& x) const override { return forward_full(x); }
  std::size_t num_classes() const override { return head_.out_dim(); }
  /// Re-normalizes every prompt cell to its contraction factor.
  void project() override;
  std::vector<std::pair<std::string, double>> diagnostics() const override;

  std::size_t trainable_count() const noexcept;

 private:
  struct Trace;
  struct Grads {
    std::vector<deq::CellGrads> p1;
    std::vector<deq::CellGrads> p2;
    DenseGrads proj;
    DenseGrads head;
    GatePair gate1;
    GatePair gate2;
  };

  void check_shapes() const;
  void zero_grads();
  Tensor forward_repr(const Tensor& x, Trace& t) const;
  void backward_repr(const Trace& t, const Tensor& d_repr, double weight);

  Backbone backbone_;
  std::vector<deq::DeqCell> p1_;
  std::vector<deq::DeqCell> p2_;
  Dense proj_;
  Dense head_;
  GatePair gate1_;
  GatePair gate2_;
  LionOptions opts_;
  Grads grads_;
};

/// One row of the parameter-overhead comparison.
struct ParamCountRow {
  std::string method;
  std::size_t count;
  std::string formula;
};

/// Extra trainable parameters per method: adapter/bias 2*d*d~*L, VPT n*L*d,
/// LION m*d~; the task head h*C is reported as its own row.
std::vector<ParamCountRow> param_count_report(std::size_t d, std::size_t d_tilde, std::size_t layers,
                                              std::size_t prompts, std::size_t m, std::size_t h,
                                              std::size_t classes);

}  // namespace lion
